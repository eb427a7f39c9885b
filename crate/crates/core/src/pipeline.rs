//! Stage orchestration over an output directory of persisted artifacts.
//!
//! Stages run in order `train`, `calibrate`, `score`, `triage`, `eval`
//! (`ablate` after `score`). Each stage reads what earlier stages wrote,
//! checks the recorded config hash, and writes its own artifacts.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::clustering::{assign_grades, ClusterModel};
use crate::config::PipelineConfig;
use crate::dataset::{
    csv_err, generate_synthetic_corpus, load_image, read_features, write_features, Manifest, ManifestEntry, QualityGrade,
    SynthCorpusSpec,
};
use crate::encoder::{extract_stat_pyramid, pyramid_from_external, FeaturePyramid, PyramidConfig};
use crate::error::{Error, Result};
use crate::evaluation::{confusion, evaluate_pipeline, EvalReport, PipelineReport};
use crate::fdr::ReductionModel;
use crate::flow::{FlowModel, TrainingLog};
use crate::representation::{build_representation, from_feature_pyramids, to_feature_pyramids, Representation};
use crate::scoring::{calibrate_threshold, image_score, likelihood_grids, otsu_threshold, ThresholdMode, ThresholdModel};

pub const MODEL_FILE: &str = "model.ckpt";
pub const THRESHOLD_FILE: &str = "threshold.txt";
pub const CALIBRATION_SCORES_FILE: &str = "calibration_scores.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const REPRESENTATIONS_FILE: &str = "representations.feat";
pub const REPRESENTATIONS_META_FILE: &str = "representations.meta";
pub const REDUCTION_FILE: &str = "reduction.ckpt";
pub const TRIAGE_FILE: &str = "triage.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const ABLATION_FILE: &str = "ablation.csv";

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn require(path: &Path, command: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Staged { artifact: path.display().to_string(), command })
    }
}

fn check_hash(found: &str, cfg: &PipelineConfig, what: &Path) -> Result<()> {
    let expected = cfg.hash();
    if found != expected {
        return Err(Error::Contract(format!(
            "{} was produced under config hash {found}, current config hashes to {expected}",
            what.display()
        )));
    }
    Ok(())
}

fn manifest_from(path: &Option<PathBuf>, key: &str) -> Result<Manifest> {
    let p = path.as_ref().ok_or_else(|| Error::Config(format!("{key} is not set")))?;
    Manifest::load(p)
}

// ---------------------------------------------------------------- CSV helpers

/// CSV text preceded by a `# config_hash=<hash>` comment line.
fn hashed_csv(hash: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut out = format!("# config_hash={hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(&r).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
    }
    Ok(out)
}

/// Returns the recorded hash and the data rows after checking the header.
fn read_hashed_csv(path: &Path, header: &[&str]) -> Result<(String, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let hash = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.trim_start_matches('#').trim().strip_prefix("config_hash=").map(str::to_string))
        .ok_or_else(|| Error::format(0, format!("{} has no config_hash comment", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let found: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if found != header {
        return Err(Error::format(0, format!("{}: expected header {}, found {}", path.display(), header.join(","), found.join(","))));
    }
    let rows = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_string).collect()).map_err(csv_err))
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok((hash, rows))
}

fn parse_f64(v: &str, path: &Path) -> Result<f64> {
    v.parse().map_err(|_| Error::format(0, format!("{}: bad number {v:?}", path.display())))
}

// ------------------------------------------------------------------ features

/// Feature pyramids for every manifest entry, in manifest order. Images are
/// encoded with the built-in extractor unless `feature_file` supplies them.
pub fn manifest_pyramids(manifest: &Manifest, pyramid: &PyramidConfig, feature_file: Option<&Path>) -> Result<Vec<FeaturePyramid>> {
    if let Some(path) = feature_file {
        let (pyramids, ids) = read_features(path)?;
        let mut by_id: HashMap<String, FeaturePyramid> = ids.into_iter().zip(pyramids).collect();
        return manifest
            .entries()
            .iter()
            .map(|e| {
                let p = by_id
                    .remove(&e.id)
                    .ok_or_else(|| Error::Config(format!("feature file {} has no entry {:?}", path.display(), e.id)))?;
                pyramid_from_external(p, pyramid)
            })
            .collect();
    }
    manifest
        .entries()
        .par_iter()
        .map(|e| extract_stat_pyramid(&load_image(&e.path, pyramid.image_size)?, pyramid))
        .collect()
}

// ----------------------------------------------------------------- gen-synth

/// Layout options for [`gen_synth`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthLayout {
    pub corpus: SynthCorpusSpec,
    /// Leading samples per grade set aside as the labelled calibration holdout.
    pub holdout_per_grade: usize,
    /// Size of the separate outstanding-only training corpus; 0 skips it.
    pub train_count: usize,
    /// Seed of the training corpus; must differ from the corpus seed.
    pub train_seed: u64,
}

/// Writes images plus `manifest.csv`, `calibration_manifest.csv`,
/// `eval_manifest.csv` and (if requested) `train_manifest.csv` under `dir`.
pub fn gen_synth(dir: &Path, layout: &SynthLayout) -> Result<()> {
    let spec = &layout.corpus;
    if layout.holdout_per_grade >= spec.count_per_grade {
        return Err(Error::Config(format!(
            "holdout {} per grade leaves nothing of {} per grade to evaluate",
            layout.holdout_per_grade, spec.count_per_grade
        )));
    }
    let (images, manifest) = generate_synthetic_corpus(spec)?;
    save_images(dir, &images, &manifest)?;
    manifest.save(&dir.join("manifest.csv"))?;
    let mut seen: HashMap<QualityGrade, usize> = HashMap::new();
    let holdout: Vec<bool> = manifest
        .entries()
        .iter()
        .map(|e| {
            let c = seen.entry(e.label.expect("synthetic entries are labelled")).or_default();
            *c += 1;
            *c <= layout.holdout_per_grade
        })
        .collect();
    let mut flags = holdout.iter();
    let calib = manifest.filter(|_| *flags.next().unwrap());
    let mut flags = holdout.iter();
    let eval = manifest.filter(|_| !*flags.next().unwrap());
    calib.save(&dir.join("calibration_manifest.csv"))?;
    eval.save(&dir.join("eval_manifest.csv"))?;

    if layout.train_count > 0 {
        if layout.train_seed == spec.seed {
            return Err(Error::Config("training corpus seed must differ from the evaluation corpus seed".into()));
        }
        let tspec = SynthCorpusSpec {
            count_per_grade: layout.train_count,
            seed: layout.train_seed,
            grades: vec![QualityGrade::Outstanding],
            id_prefix: format!("train-{}", spec.id_prefix),
            ..spec.clone()
        };
        let (timages, tmanifest) = generate_synthetic_corpus(&tspec)?;
        save_images(dir, &timages, &tmanifest)?;
        tmanifest.save(&dir.join("train_manifest.csv"))?;
    }
    Ok(())
}

fn save_images(dir: &Path, images: &[crate::dataset::GrayImage], manifest: &Manifest) -> Result<()> {
    let img_dir = dir.join("images");
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    images.par_iter().zip(manifest.entries().par_iter()).try_for_each(|(img, e)| img.save_png(&dir.join(&e.path)))
}

// --------------------------------------------------------------------- train

pub fn train(cfg: &PipelineConfig, feature_file: Option<&Path>) -> Result<(FlowModel, Vec<TrainingLog>)> {
    let manifest = manifest_from(&cfg.train_manifest, "train_manifest")?;
    manifest.ensure_training_only()?;
    let pyramids = manifest_pyramids(&manifest, &cfg.pyramid, feature_file)?;
    let (model, logs) = FlowModel::train(&pyramids, &cfg.pyramid, &cfg.pe, &cfg.arch, &cfg.flow_train())?;
    let path = cfg.out_dir.join(MODEL_FILE);
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    save_checkpoint(&path, &Checkpoint { config_hash: cfg.hash(), flow: Some(model.clone()), reduction: None })?;
    Ok((model, logs))
}

pub fn load_model(cfg: &PipelineConfig) -> Result<FlowModel> {
    let path = cfg.out_dir.join(MODEL_FILE);
    require(&path, "train")?;
    let ckpt = load_checkpoint(&path)?;
    check_hash(&ckpt.config_hash, cfg, &path)?;
    ckpt.flow.ok_or_else(|| Error::format(0, format!("{} has no flow section", path.display())))
}

// ------------------------------------------------------------------- scoring

/// Score and representation `F_H` of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub id: String,
    pub score: f64,
    pub representation: Representation,
}

pub fn score_pyramids(model: &FlowModel, pyramids: &[FeaturePyramid], ids: &[String], cfg: &PipelineConfig) -> Result<Vec<ScoredSample>> {
    pyramids
        .par_iter()
        .zip(ids.par_iter())
        .map(|(p, id)| {
            let grids = likelihood_grids(p, model)?;
            let score = image_score(&grids, model, cfg.aggregation)?.0;
            Ok(ScoredSample { id: id.clone(), score, representation: build_representation(id, &grids, model)? })
        })
        .collect()
}

pub fn score_manifest(model: &FlowModel, manifest: &Manifest, cfg: &PipelineConfig, feature_file: Option<&Path>) -> Result<Vec<ScoredSample>> {
    let pyramids = manifest_pyramids(manifest, &cfg.pyramid, feature_file)?;
    score_pyramids(model, &pyramids, &manifest.ids(), cfg)
}

// ----------------------------------------------------------------- calibrate

/// Scores the calibration manifest and fits the stage-1 threshold.
pub fn calibrate(cfg: &PipelineConfig, feature_file: Option<&Path>) -> Result<ThresholdModel> {
    let model = load_model(cfg)?;
    let manifest = manifest_from(&cfg.calibration_manifest, "calibration_manifest")?;
    let scored = score_manifest(&model, &manifest, cfg, feature_file)?;
    let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
    let threshold = match cfg.threshold_mode {
        ThresholdMode::Otsu => otsu_threshold(&scores)?,
        ThresholdMode::F1Max => {
            let labels = manifest
                .entries()
                .iter()
                .map(|e| {
                    e.label
                        .map(|l| !l.is_outstanding())
                        .ok_or_else(|| Error::Config(format!("calibration entry {:?} has no label", e.id)))
                })
                .collect::<Result<Vec<bool>>>()?;
            calibrate_threshold(&scores, &labels)?
        }
    };
    let hash = cfg.hash();
    write_file(&cfg.out_dir.join(THRESHOLD_FILE), threshold.to_text(&hash).as_bytes())?;
    let rows = scored.iter().zip(manifest.entries()).map(|(s, e)| {
        vec![s.id.clone(), s.score.to_string(), e.label.map_or(String::new(), |l| l.to_string())]
    });
    write_file(&cfg.out_dir.join(CALIBRATION_SCORES_FILE), &hashed_csv(&hash, &["id", "score", "label"], rows)?)?;
    Ok(threshold)
}

pub fn load_threshold(cfg: &PipelineConfig) -> Result<ThresholdModel> {
    let path = cfg.out_dir.join(THRESHOLD_FILE);
    require(&path, "calibrate")?;
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let (t, hash) = ThresholdModel::from_text(&text)?;
    check_hash(&hash, cfg, &path)?;
    Ok(t)
}

/// `(id, score, label)` rows written by [`calibrate`].
pub fn load_calibration_scores(cfg: &PipelineConfig) -> Result<Vec<(String, f64, Option<QualityGrade>)>> {
    let path = cfg.out_dir.join(CALIBRATION_SCORES_FILE);
    require(&path, "calibrate")?;
    let (hash, rows) = read_hashed_csv(&path, &["id", "score", "label"])?;
    check_hash(&hash, cfg, &path)?;
    rows.into_iter()
        .map(|r| {
            let label = if r[2].is_empty() { None } else { Some(r[2].parse()?) };
            Ok((r[0].clone(), parse_f64(&r[1], &path)?, label))
        })
        .collect()
}

// --------------------------------------------------------------------- score

/// Scores the main manifest, writing the stage-1 CSV and the `F_H` matrix.
pub fn score(cfg: &PipelineConfig, feature_file: Option<&Path>) -> Result<Vec<ScoredSample>> {
    let model = load_model(cfg)?;
    let threshold = load_threshold(cfg)?;
    let manifest = manifest_from(&cfg.manifest, "manifest")?;
    let scored = score_manifest(&model, &manifest, cfg, feature_file)?;
    let hash = cfg.hash();
    let rows = scored.iter().map(|s| {
        let stage1 = if threshold.is_non_outstanding(s.score) { "non-outstanding" } else { "outstanding" };
        vec![s.id.clone(), s.score.to_string(), stage1.to_string()]
    });
    write_file(&cfg.out_dir.join(SCORES_FILE), &hashed_csv(&hash, &["id", "score", "grade_stage1"], rows)?)?;
    let reps: Vec<Representation> = scored.iter().map(|s| s.representation.clone()).collect();
    let (pyramids, ids) = to_feature_pyramids(&reps)?;
    write_features(&cfg.out_dir.join(REPRESENTATIONS_FILE), &pyramids, &ids)?;
    let lengths: Vec<String> = model.pyramid_config().shapes().iter().map(|&(h, w, _)| (h * w).to_string()).collect();
    let meta = format!("config_hash = {hash}\nscale_lengths = {}\n", lengths.join(","));
    write_file(&cfg.out_dir.join(REPRESENTATIONS_META_FILE), meta.as_bytes())?;
    Ok(scored)
}

/// Reads back what [`score`] persisted.
pub fn load_scored(cfg: &PipelineConfig) -> Result<Vec<ScoredSample>> {
    let path = cfg.out_dir.join(SCORES_FILE);
    require(&path, "score")?;
    let (hash, rows) = read_hashed_csv(&path, &["id", "score", "grade_stage1"])?;
    check_hash(&hash, cfg, &path)?;
    let meta_path = cfg.out_dir.join(REPRESENTATIONS_META_FILE);
    require(&meta_path, "score")?;
    let meta = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let kv = crate::config::parse_key_values(&meta)?;
    let meta_hash = kv.iter().find(|(k, _)| k == "config_hash").map(|(_, v)| v.as_str()).unwrap_or("");
    check_hash(meta_hash, cfg, &meta_path)?;
    let rep_path = cfg.out_dir.join(REPRESENTATIONS_FILE);
    require(&rep_path, "score")?;
    let (pyramids, ids) = read_features(&rep_path)?;
    let reps = from_feature_pyramids(pyramids, ids)?;
    if reps.len() != rows.len() {
        return Err(Error::Contract(format!("{} scores but {} representations", rows.len(), reps.len())));
    }
    rows.into_iter()
        .zip(reps)
        .map(|(r, rep)| {
            if rep.id != r[0] {
                return Err(Error::Contract(format!("score row {:?} does not match representation {:?}", r[0], rep.id)));
            }
            Ok(ScoredSample { id: r[0].clone(), score: parse_f64(&r[1], &path)?, representation: rep })
        })
        .collect()
}

// -------------------------------------------------------------------- triage

/// Which part of `F_H` stage 2 clusters, and whether it is reduced first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stage2Features {
    /// 1-based single scale; `None` uses all scales.
    pub scale: Option<usize>,
    pub reduce: bool,
}

impl Stage2Features {
    pub const PROPOSED: Stage2Features = Stage2Features { scale: None, reduce: true };
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriageRow {
    pub id: String,
    pub score: f64,
    pub cluster: Option<usize>,
    pub grade: QualityGrade,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriageOutcome {
    pub rows: Vec<TriageRow>,
    pub reduction: Option<ReductionModel>,
    pub clusters: ClusterModel,
}

/// Stage 1 by threshold, then stage 2 over the non-outstanding samples.
/// `scale_lengths` gives the per-scale segment lengths of `F_H`.
pub fn triage_samples(
    samples: &[ScoredSample],
    threshold: &ThresholdModel,
    cfg: &PipelineConfig,
    scale_lengths: &[usize],
    features: Stage2Features,
) -> Result<TriageOutcome> {
    let segment = |r: &Representation| -> Result<Vec<f64>> {
        let total: usize = scale_lengths.iter().sum();
        if r.values.len() != total {
            return Err(Error::Contract(format!("representation {:?} has length {}, expected {total}", r.id, r.values.len())));
        }
        Ok(match features.scale {
            None => r.values.clone(),
            Some(k) if (1..=scale_lengths.len()).contains(&k) => {
                let start: usize = scale_lengths[..k - 1].iter().sum();
                r.values[start..start + scale_lengths[k - 1]].to_vec()
            }
            Some(k) => return Err(Error::Argument(format!("scale {k} outside 1..={}", scale_lengths.len()))),
        })
    };
    let flagged: Vec<&ScoredSample> = samples.iter().filter(|s| threshold.is_non_outstanding(s.score)).collect();
    if flagged.len() < 2 {
        return Err(Error::Assignment(format!("{} non-outstanding samples; need at least 2 to cluster", flagged.len())));
    }
    let rows: Vec<Vec<f64>> = flagged.iter().map(|s| segment(&s.representation)).collect::<Result<_>>()?;
    let (points, reduction) = if features.reduce {
        let model = ReductionModel::fit(cfg.fdr_method, &rows, cfg.fdr_dim, &cfg.nmf())?;
        let pts = flagged
            .iter()
            .zip(&rows)
            .map(|(s, r)| Ok(model.transform(&s.id, r)?.values))
            .collect::<Result<Vec<_>>>()?;
        (pts, Some(model))
    } else {
        (rows, None)
    };
    let clusters = ClusterModel::fit(cfg.cluster_method, cfg.linkage, &points, cfg.seed)?;
    let ids: Vec<String> = flagged.iter().map(|s| s.id.clone()).collect();
    let scores: Vec<f64> = flagged.iter().map(|s| s.score).collect();
    let assignment = assign_grades(clusters.labels(), &points, &ids, &scores)?;
    let mut by_id: HashMap<&str, (usize, QualityGrade)> =
        assignment.entries.iter().map(|e| (e.id.as_str(), (e.cluster, e.grade))).collect();
    let out = samples
        .iter()
        .map(|s| match by_id.remove(s.id.as_str()) {
            Some((c, g)) => TriageRow { id: s.id.clone(), score: s.score, cluster: Some(c), grade: g },
            None => TriageRow { id: s.id.clone(), score: s.score, cluster: None, grade: QualityGrade::Outstanding },
        })
        .collect();
    Ok(TriageOutcome { rows: out, reduction, clusters })
}

fn scale_lengths(cfg: &PipelineConfig) -> Vec<usize> {
    cfg.pyramid.shapes().iter().map(|&(h, w, _)| h * w).collect()
}

/// Runs stage 2 from persisted scores and representations.
pub fn triage(cfg: &PipelineConfig) -> Result<TriageOutcome> {
    let threshold = load_threshold(cfg)?;
    let samples = load_scored(cfg)?;
    let outcome = triage_samples(&samples, &threshold, cfg, &scale_lengths(cfg), Stage2Features::PROPOSED)?;
    let hash = cfg.hash();
    save_checkpoint(
        &cfg.out_dir.join(REDUCTION_FILE),
        &Checkpoint { config_hash: hash.clone(), flow: None, reduction: outcome.reduction.clone() },
    )?;
    let rows = outcome.rows.iter().map(|r| {
        vec![r.id.clone(), r.score.to_string(), r.cluster.map_or(String::new(), |c| c.to_string()), r.grade.to_string()]
    });
    write_file(&cfg.out_dir.join(TRIAGE_FILE), &hashed_csv(&hash, &["id", "score", "cluster", "grade"], rows)?)?;
    Ok(outcome)
}

pub fn load_triage(cfg: &PipelineConfig) -> Result<Vec<TriageRow>> {
    let path = cfg.out_dir.join(TRIAGE_FILE);
    require(&path, "triage")?;
    let (hash, rows) = read_hashed_csv(&path, &["id", "score", "cluster", "grade"])?;
    check_hash(&hash, cfg, &path)?;
    rows.into_iter()
        .map(|r| {
            let cluster = if r[2].is_empty() {
                None
            } else {
                Some(r[2].parse().map_err(|_| Error::format(0, format!("bad cluster {:?}", r[2])))?)
            };
            Ok(TriageRow { id: r[0].clone(), score: parse_f64(&r[1], &path)?, cluster, grade: r[3].parse()? })
        })
        .collect()
}

// ---------------------------------------------------------------------- eval

pub fn eval(cfg: &PipelineConfig) -> Result<PipelineReport> {
    let rows = load_triage(cfg)?;
    let manifest = manifest_from(&cfg.manifest, "manifest")?;
    let preds: Vec<(String, QualityGrade)> = rows.iter().map(|r| (r.id.clone(), r.grade)).collect();
    let metadata = vec![
        ("config_hash".to_string(), cfg.hash()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("fdr_method".to_string(), cfg.fdr_method.to_string()),
        ("fdr_dim".to_string(), cfg.fdr_dim.to_string()),
        ("cluster_method".to_string(), cfg.cluster_method.to_string()),
    ];
    let report = evaluate_pipeline(&preds, &manifest, metadata)?;
    write_file(&cfg.out_dir.join(REPORT_FILE), report.to_text().as_bytes())?;
    write_file(&cfg.out_dir.join(CONFUSION_FILE), report.triage.confusion.to_csv().as_bytes())?;
    Ok(report)
}

// -------------------------------------------------------------------- ablate

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub report: EvalReport,
}

fn labels_for(manifest: &Manifest, ids: &[String]) -> Result<Vec<QualityGrade>> {
    let by_id: HashMap<&str, &ManifestEntry> = manifest.entries().iter().map(|e| (e.id.as_str(), e)).collect();
    let mut missing = Vec::new();
    let labels: Vec<QualityGrade> = ids
        .iter()
        .filter_map(|id| match by_id.get(id.as_str()).and_then(|e| e.label) {
            Some(l) => Some(l),
            None => {
                missing.push(id.clone());
                None
            }
        })
        .collect();
    if missing.is_empty() {
        Ok(labels)
    } else {
        Err(Error::Coverage(missing))
    }
}

/// Three-way split from the scalar score alone: `tau_o` from stage 1, and an
/// F1-calibrated `tau_u` separating ungradable from the rest.
pub fn score_only_grades(scores: &[f64], tau_o: f64, tau_u: f64) -> Vec<QualityGrade> {
    scores
        .iter()
        .map(|&s| {
            if s <= tau_o {
                QualityGrade::Outstanding
            } else if s > tau_u {
                QualityGrade::Ungradable
            } else {
                QualityGrade::Gradable
            }
        })
        .collect()
}

/// Kappa/accuracy of the score-only split, every single scale with and
/// without reduction, and the multi-scale representation with and without.
pub fn ablation_rows(
    samples: &[ScoredSample],
    truth: &[QualityGrade],
    threshold: &ThresholdModel,
    calibration: &[(f64, QualityGrade)],
    cfg: &PipelineConfig,
    scale_lengths: &[usize],
) -> Result<Vec<AblationRow>> {
    let scores: Vec<f64> = samples.iter().map(|s| s.score).collect();
    let cal_scores: Vec<f64> = calibration.iter().map(|c| c.0).collect();
    let cal_u: Vec<bool> = calibration.iter().map(|c| c.1 == QualityGrade::Ungradable).collect();
    let tau_u = calibrate_threshold(&cal_scores, &cal_u)?.tau;
    let mut out = vec![AblationRow {
        variant: "score-only".into(),
        report: EvalReport::from_confusion(confusion(truth, &score_only_grades(&scores, threshold.tau, tau_u))?)?,
    }];
    let mut run = |name: String, f: Stage2Features| -> Result<()> {
        let o = triage_samples(samples, threshold, cfg, scale_lengths, f)?;
        let pred: Vec<QualityGrade> = o.rows.iter().map(|r| r.grade).collect();
        out.push(AblationRow { variant: name, report: EvalReport::from_confusion(confusion(truth, &pred)?)? });
        Ok(())
    };
    for k in 1..=scale_lengths.len() {
        run(format!("single-scale-{k}"), Stage2Features { scale: Some(k), reduce: false })?;
        run(format!("single-scale-{k}+fdr"), Stage2Features { scale: Some(k), reduce: true })?;
    }
    run("multi-scale".into(), Stage2Features { scale: None, reduce: false })?;
    run("multi-scale+fdr".into(), Stage2Features::PROPOSED)?;
    Ok(out)
}

pub fn ablate(cfg: &PipelineConfig) -> Result<Vec<AblationRow>> {
    let threshold = load_threshold(cfg)?;
    let samples = load_scored(cfg)?;
    let manifest = manifest_from(&cfg.manifest, "manifest")?;
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let truth = labels_for(&manifest, &ids)?;
    let calibration = load_calibration_scores(cfg)?
        .into_iter()
        .map(|(id, s, l)| l.map(|l| (s, l)).ok_or_else(|| Error::Config(format!("calibration entry {id:?} has no label"))))
        .collect::<Result<Vec<_>>>()?;
    let rows = ablation_rows(&samples, &truth, &threshold, &calibration, cfg, &scale_lengths(cfg))?;
    let mut text = Vec::new();
    writeln!(text, "# config_hash={}", cfg.hash()).map_err(|e| Error::io("<ablation>", e))?;
    writeln!(text, "variant,kappa,accuracy").map_err(|e| Error::io("<ablation>", e))?;
    for r in &rows {
        writeln!(text, "{},{},{}", r.variant, r.report.kappa, r.report.accuracy).map_err(|e| Error::io("<ablation>", e))?;
    }
    write_file(&cfg.out_dir.join(ABLATION_FILE), &text)?;
    Ok(rows)
}

/// Largest kappa among rows whose variant name satisfies `pred`.
pub fn best_kappa(rows: &[AblationRow], pred: impl Fn(&str) -> bool) -> Option<f64> {
    rows.iter().filter(|r| pred(&r.variant)).map(|r| r.report.kappa).fold(None, |b, k| Some(b.map_or(k, |b: f64| b.max(k))))
}
