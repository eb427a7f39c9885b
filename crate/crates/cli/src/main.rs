use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use unoqa::config::PipelineConfig;
use unoqa::dataset::SynthCorpusSpec;
use unoqa::pipeline::{self, SynthLayout};
use unoqa::{Error, Result};

/// Unsupervised image-quality triage: outstanding / gradable / ungradable.
///
/// Configuration precedence (later wins): built-in defaults, the `--config`
/// file, `--set key=value` overrides, then the dedicated flags below.
///
/// Exit codes: 0 ok, 2 config/input error, 3 contract or missing upstream
/// stage, 4 numeric failure.
#[derive(Parser, Debug)]
#[command(name = "unoqa", version)]
struct Cli {
    /// `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice in the pipeline.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory holding stage artifacts (or the generated corpus for gen-synth).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for per-image work; output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override any config key, e.g. `--set fdr_dim=8`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct FeatureArgs {
    /// Read feature pyramids from this feature file instead of encoding images.
    #[arg(long)]
    features: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic three-grade corpus and its manifests.
    GenSynth {
        #[arg(long, default_value_t = 100)]
        count_per_grade: usize,
        /// Samples per grade reserved for calibration.
        #[arg(long, default_value_t = 20)]
        holdout_per_grade: usize,
        /// Outstanding images in the separate training corpus (0 to skip).
        #[arg(long, default_value_t = 100)]
        train_count: usize,
    },
    /// Fit the flow model on an outstanding-only manifest.
    Train {
        #[arg(long)]
        train_manifest: Option<PathBuf>,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Fit the stage-1 threshold on the labelled calibration manifest.
    Calibrate {
        #[arg(long)]
        calibration_manifest: Option<PathBuf>,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Score the manifest: writes scores.csv and representations.feat.
    Score {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Reduce and cluster non-outstanding samples: writes triage.csv.
    Triage,
    /// Compare triage.csv with manifest labels: writes report.txt.
    ///
    /// Report keys: meta.*, kappa, accuracy, precision.<grade>,
    /// recall.<grade>, f1.<grade>, confusion.<grade>, and the same block
    /// prefixed `stage1.` for the outstanding/non-outstanding split.
    Eval {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Score-only, single-scale and multi-scale variants: writes ablation.csv.
    Ablate {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

fn build_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Argument(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim(), Path::new(""))?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    match &cli.command {
        Command::Train { train_manifest: Some(p), .. } => cfg.train_manifest = Some(p.clone()),
        Command::Calibrate { calibration_manifest: Some(p), .. } => cfg.calibration_manifest = Some(p.clone()),
        Command::Score { manifest: Some(p), .. } | Command::Eval { manifest: Some(p) } | Command::Ablate { manifest: Some(p) } => {
            cfg.manifest = Some(p.clone())
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = build_config(cli)?;
    match &cli.command {
        Command::GenSynth { count_per_grade, holdout_per_grade, train_count } => {
            let corpus = SynthCorpusSpec::new(*count_per_grade, cfg.seed).with_image_size(cfg.pyramid.image_size);
            let layout = SynthLayout {
                corpus,
                holdout_per_grade: *holdout_per_grade,
                train_count: *train_count,
                train_seed: cfg.seed.wrapping_add(1),
            };
            pipeline::gen_synth(&cfg.out_dir, &layout)?;
            println!("wrote corpus to {}", cfg.out_dir.display());
        }
        Command::Train { features, .. } => {
            let (_, logs) = pipeline::train(&cfg, features.features.as_deref())?;
            for (k, l) in logs.iter().enumerate() {
                println!("scale {}: final nll {:.6}", k + 1, l.epoch_nll.last().copied().unwrap_or(f64::NAN));
            }
        }
        Command::Calibrate { features, .. } => {
            let t = pipeline::calibrate(&cfg, features.features.as_deref())?;
            print!("{}", t.to_text(&cfg.hash()));
        }
        Command::Score { features, .. } => {
            let s = pipeline::score(&cfg, features.features.as_deref())?;
            println!("scored {} samples", s.len());
        }
        Command::Triage => {
            let o = pipeline::triage(&cfg)?;
            for g in unoqa::dataset::QualityGrade::ALL {
                println!("{g}: {}", o.rows.iter().filter(|r| r.grade == g).count());
            }
        }
        Command::Eval { .. } => {
            let r = pipeline::eval(&cfg)?;
            println!("kappa = {:.4}\naccuracy = {:.4}", r.triage.kappa, r.triage.accuracy);
            println!("stage1.kappa = {:.4}\nstage1.accuracy = {:.4}", r.stage1.kappa, r.stage1.accuracy);
        }
        Command::Ablate { .. } => {
            println!("{:<20} {:>9} {:>9}", "variant", "kappa", "accuracy");
            for r in pipeline::ablate(&cfg)? {
                println!("{:<20} {:>9.3} {:>9.3}", r.variant, r.report.kappa, r.report.accuracy);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
