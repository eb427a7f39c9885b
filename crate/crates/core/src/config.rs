//! Line-oriented `key = value` pipeline configuration and its hash.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::clustering::{ClusterMethod, Linkage};
use crate::encoder::PyramidConfig;
use crate::error::{Error, Result};
use crate::fdr::{FdrMethod, NmfConfig, DEFAULT_FDR_DIM};
use crate::flow::{FlowArch, PositionalEncodingConfig, TrainConfig};
use crate::scoring::{Aggregation, ThresholdMode};

/// Splits `key = value` lines. Blank lines and `#` comments are skipped;
/// duplicate keys are rejected.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {line:?}", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        if out.iter().any(|(key, _)| key == k) {
            return Err(Error::Config(format!("line {}: duplicate key {k:?}", n + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Everything a pipeline run needs. `Default` is the proposed configuration:
/// multi-scale representation, PCA to 16 dimensions, Ward clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub pyramid: PyramidConfig,
    pub pe: PositionalEncodingConfig,
    pub arch: FlowArch,
    pub train: TrainConfig,
    pub aggregation: Aggregation,
    pub threshold_mode: ThresholdMode,
    pub fdr_method: FdrMethod,
    pub fdr_dim: usize,
    pub nmf_max_iter: usize,
    pub nmf_tol: f64,
    pub cluster_method: ClusterMethod,
    pub linkage: Linkage,
    pub seed: u64,
    pub train_manifest: Option<PathBuf>,
    pub calibration_manifest: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            pyramid: PyramidConfig::default(),
            pe: PositionalEncodingConfig::default(),
            arch: FlowArch::default(),
            train: TrainConfig::default(),
            aggregation: Aggregation::default(),
            threshold_mode: ThresholdMode::default(),
            fdr_method: FdrMethod::default(),
            fdr_dim: DEFAULT_FDR_DIM,
            nmf_max_iter: NmfConfig::default().max_iter,
            nmf_tol: NmfConfig::default().tol,
            cluster_method: ClusterMethod::default(),
            linkage: Linkage::default(),
            seed: 0,
            train_manifest: None,
            calibration_manifest: None,
            manifest: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
}

fn list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    /// Applies one key. Paths are resolved against `base` when relative.
    pub fn set(&mut self, key: &str, v: &str, base: &Path) -> Result<()> {
        let path = |v: &str| if v.is_empty() { None } else { Some(base.join(v)) };
        match key {
            "image_size" => {
                let size = parse(key, v)?;
                self.pyramid = PyramidConfig::stat(size, self.pyramid.strides.clone());
            }
            "strides" => self.pyramid = PyramidConfig::stat(self.pyramid.image_size, list(key, v)?),
            "pe_dim" => self.pe.dim = parse(key, v)?,
            "pe_base" => self.pe.base = parse(key, v)?,
            "flow_blocks" => self.arch.blocks = parse(key, v)?,
            "flow_hidden" => self.arch.hidden = if v == "auto" { None } else { Some(parse(key, v)?) },
            "flow_clamp" => self.arch.clamp = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "learning_rate" => self.train.learning_rate = parse(key, v)?,
            "adam_beta1" => self.train.beta1 = parse(key, v)?,
            "adam_beta2" => self.train.beta2 = parse(key, v)?,
            "adam_epsilon" => self.train.epsilon = parse(key, v)?,
            "aggregation" => self.aggregation = v.parse()?,
            "threshold_mode" => self.threshold_mode = v.parse()?,
            "fdr_method" => self.fdr_method = v.parse()?,
            "fdr_dim" => self.fdr_dim = parse(key, v)?,
            "nmf_max_iter" => self.nmf_max_iter = parse(key, v)?,
            "nmf_tol" => self.nmf_tol = parse(key, v)?,
            "cluster_method" => self.cluster_method = v.parse()?,
            "linkage" => self.linkage = v.parse()?,
            "seed" => self.seed = parse(key, v)?,
            "train_manifest" => self.train_manifest = path(v),
            "calibration_manifest" => self.calibration_manifest = path(v),
            "manifest" => self.manifest = path(v),
            "out_dir" => self.out_dir = base.join(v),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn from_text(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (k, v) in parse_key_values(text)? {
            cfg.set(&k, &v, base)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn validate(&self) -> Result<()> {
        self.pyramid.validate()?;
        self.pe.validate()?;
        self.arch.validate()?;
        self.flow_train().validate()?;
        if self.fdr_dim == 0 {
            return Err(Error::Config("fdr_dim must be positive".into()));
        }
        if self.nmf_max_iter == 0 || !(self.nmf_tol >= 0.0) {
            return Err(Error::Config("nmf_max_iter must be positive and nmf_tol non-negative".into()));
        }
        Ok(())
    }

    pub fn flow_train(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train }
    }

    pub fn nmf(&self) -> NmfConfig {
        NmfConfig { max_iter: self.nmf_max_iter, tol: self.nmf_tol, seed: self.seed }
    }

    /// Keys that influence any persisted result, in canonical order.
    fn model_lines(&self) -> String {
        let mut s = String::new();
        let hidden = self.arch.hidden.map_or("auto".to_string(), |h| h.to_string());
        let _ = writeln!(s, "image_size = {}", self.pyramid.image_size);
        let _ = writeln!(s, "strides = {}", join(&self.pyramid.strides));
        let _ = writeln!(s, "pe_dim = {}", self.pe.dim);
        let _ = writeln!(s, "pe_base = {}", self.pe.base);
        let _ = writeln!(s, "flow_blocks = {}", self.arch.blocks);
        let _ = writeln!(s, "flow_hidden = {hidden}");
        let _ = writeln!(s, "flow_clamp = {}", self.arch.clamp);
        let _ = writeln!(s, "epochs = {}", self.train.epochs);
        let _ = writeln!(s, "batch_size = {}", self.train.batch_size);
        let _ = writeln!(s, "learning_rate = {}", self.train.learning_rate);
        let _ = writeln!(s, "adam_beta1 = {}", self.train.beta1);
        let _ = writeln!(s, "adam_beta2 = {}", self.train.beta2);
        let _ = writeln!(s, "adam_epsilon = {}", self.train.epsilon);
        let _ = writeln!(s, "aggregation = {}", self.aggregation);
        let _ = writeln!(s, "threshold_mode = {}", self.threshold_mode);
        let _ = writeln!(s, "fdr_method = {}", self.fdr_method);
        let _ = writeln!(s, "fdr_dim = {}", self.fdr_dim);
        let _ = writeln!(s, "nmf_max_iter = {}", self.nmf_max_iter);
        let _ = writeln!(s, "nmf_tol = {}", self.nmf_tol);
        let _ = writeln!(s, "cluster_method = {}", self.cluster_method);
        let _ = writeln!(s, "linkage = {}", self.linkage);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    /// Full config text; parses back to an equal config (paths absolute or
    /// relative to the reading directory).
    pub fn to_text(&self) -> String {
        let mut s = self.model_lines();
        let p = |o: &Option<PathBuf>| o.as_ref().map_or(String::new(), |p| p.display().to_string());
        let _ = writeln!(s, "train_manifest = {}", p(&self.train_manifest));
        let _ = writeln!(s, "calibration_manifest = {}", p(&self.calibration_manifest));
        let _ = writeln!(s, "manifest = {}", p(&self.manifest));
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        s
    }

    /// Hex SHA-256 over the model-relevant keys; paths and thread counts are excluded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.model_lines().as_bytes()))
    }
}
