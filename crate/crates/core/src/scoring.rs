//! Likelihood grids, scalar low-quality scores and the stage-1 threshold.

use std::fmt;
use std::str::FromStr;

use crate::dataset::resize_grid;
use crate::encoder::FeaturePyramid;
use crate::error::{Error, Result};
use crate::flow::FlowModel;

/// Per-position log-likelihood map of one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodGrid {
    pub scale: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

/// Scalar score; higher means lower quality.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct QualityScore(pub f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

impl FromStr for Aggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Aggregation::Max),
            "mean" => Ok(Aggregation::Mean),
            other => Err(Error::Config(format!("unknown aggregation {other:?} (max|mean)"))),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Max => "max",
            Aggregation::Mean => "mean",
        })
    }
}

/// Evaluates every decoder over its scale of `pyramid`.
pub fn likelihood_grids(pyramid: &FeaturePyramid, model: &FlowModel) -> Result<Vec<LikelihoodGrid>> {
    pyramid.check_against(model.pyramid_config())?;
    (0..model.num_scales())
        .map(|k| {
            let map = &pyramid.scales[k];
            Ok(LikelihoodGrid {
                scale: k,
                height: map.height,
                width: map.width,
                values: model.log_likelihood_grid(pyramid, k)?,
            })
        })
        .collect()
}

fn checked_stats(model: &FlowModel, k: usize) -> Result<(f64, f64)> {
    let (mu, sigma) = model.training_stats(k);
    if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() {
        return Err(Error::Degenerate(format!("scale {k} has training ll std {sigma}")));
    }
    Ok((mu, sigma))
}

/// Sum over scales of `(mu_k - ll) / sigma_k`, each upsampled bilinearly to the finest grid.
pub fn anomaly_map(grids: &[LikelihoodGrid], model: &FlowModel) -> Result<(Vec<f64>, usize, usize)> {
    if grids.len() != model.num_scales() {
        return Err(Error::Config(format!("{} grids for {} scales", grids.len(), model.num_scales())));
    }
    let finest = grids.iter().max_by_key(|g| g.height * g.width).expect("at least one scale");
    let (fh, fw) = (finest.height, finest.width);
    let mut sum = vec![0.0; fh * fw];
    for g in grids {
        let (mu, sigma) = checked_stats(model, g.scale)?;
        let a: Vec<f64> = g.values.iter().map(|ll| (mu - ll) / sigma).collect();
        for (s, v) in sum.iter_mut().zip(resize_grid(&a, g.width, g.height, fw, fh)) {
            *s += v;
        }
    }
    Ok((sum, fh, fw))
}

pub fn image_score(grids: &[LikelihoodGrid], model: &FlowModel, aggregation: Aggregation) -> Result<QualityScore> {
    let (map, _, _) = anomaly_map(grids, model)?;
    let v = match aggregation {
        Aggregation::Max => map.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Aggregation::Mean => map.iter().sum::<f64>() / map.len() as f64,
    };
    if !v.is_finite() {
        return Err(Error::Numeric(format!("non-finite image score {v}")));
    }
    Ok(QualityScore(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ThresholdMode {
    #[default]
    F1Max,
    Otsu,
}

impl FromStr for ThresholdMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1max" => Ok(ThresholdMode::F1Max),
            "otsu" => Ok(ThresholdMode::Otsu),
            other => Err(Error::Config(format!("unknown threshold mode {other:?} (f1max|otsu)"))),
        }
    }
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdMode::F1Max => "f1max",
            ThresholdMode::Otsu => "otsu",
        })
    }
}

/// Stage-1 decision rule: `score > tau` means non-outstanding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdModel {
    pub tau: f64,
    pub mode: ThresholdMode,
    /// F1 of the non-outstanding class on the calibration set (f1max only).
    pub f1: Option<f64>,
    /// Set when f1max was requested but the labels had a single class.
    pub fallback: bool,
}

impl ThresholdModel {
    pub fn is_non_outstanding(&self, score: f64) -> bool {
        score > self.tau
    }

    pub fn to_text(&self, config_hash: &str) -> String {
        let mut s = String::new();
        s.push_str(&format!("config_hash = {config_hash}\n"));
        s.push_str(&format!("mode = {}\n", self.mode));
        s.push_str(&format!("tau = {}\n", self.tau));
        s.push_str(&format!("f1 = {}\n", self.f1.map_or(String::new(), |f| f.to_string())));
        s.push_str(&format!("fallback = {}\n", self.fallback));
        s
    }

    /// Parses [`Self::to_text`] output; returns the model and its config hash.
    pub fn from_text(text: &str) -> Result<(Self, String)> {
        let kv = crate::config::parse_key_values(text)?;
        let get = |k: &str| kv.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
        let need = |k: &str| get(k).ok_or_else(|| Error::Config(format!("threshold file lacks {k}")));
        let num = |k: &str, v: &str| v.parse::<f64>().map_err(|_| Error::Config(format!("bad {k} value {v:?}")));
        let tau = num("tau", need("tau")?)?;
        if tau.is_nan() {
            return Err(Error::Config("tau is NaN".into()));
        }
        let f1 = match get("f1").unwrap_or("") {
            "" => None,
            v => Some(num("f1", v)?),
        };
        let fallback = match need("fallback")? {
            "true" => true,
            "false" => false,
            v => return Err(Error::Config(format!("bad fallback value {v:?}"))),
        };
        Ok((ThresholdModel { tau, mode: need("mode")?.parse()?, f1, fallback }, need("config_hash")?.to_string()))
    }
}

/// F1 of the positive class when predicting `score > tau` as positive.
pub fn f1_at(scores: &[f64], positive: &[bool], tau: f64) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&s, &p) in scores.iter().zip(positive) {
        match (s > tau, p) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
    }
}

/// Candidate cuts: `-inf`, the midpoints between consecutive unique sorted scores, `+inf`.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut uniq: Vec<f64> = scores.to_vec();
    uniq.sort_by(f64::total_cmp);
    uniq.dedup();
    let mut out = Vec::with_capacity(uniq.len() + 1);
    out.push(f64::NEG_INFINITY);
    out.extend(uniq.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(f64::INFINITY);
    out
}

/// Picks the cut maximizing F1 of the non-outstanding (positive) class; ties
/// go to the larger threshold. Falls back to Otsu if only one class is present.
pub fn calibrate_threshold(scores: &[f64], non_outstanding: &[bool]) -> Result<ThresholdModel> {
    if scores.len() != non_outstanding.len() {
        return Err(Error::Argument(format!("{} scores but {} labels", scores.len(), non_outstanding.len())));
    }
    if scores.is_empty() || scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Argument("calibration needs finite scores".into()));
    }
    let positives = non_outstanding.iter().filter(|&&p| p).count();
    if positives == 0 || positives == scores.len() {
        log::warn!("calibration labels contain a single class; using Otsu threshold");
        let mut m = otsu_threshold(scores)?;
        m.fallback = true;
        return Ok(m);
    }
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for tau in candidate_thresholds(scores).into_iter().rev() {
        let f1 = f1_at(scores, non_outstanding, tau);
        if f1 > best.0 {
            best = (f1, tau);
        }
    }
    Ok(ThresholdModel { tau: best.1, mode: ThresholdMode::F1Max, f1: Some(best.0), fallback: false })
}

const OTSU_BINS: usize = 256;

/// Otsu's threshold on a 256-bin histogram spanning `[min, max]`.
///
/// Candidates are the inner bin edges; class means use the exact scores in
/// each bin. When several edges reach the maximum between-class variance
/// the threshold is the midpoint of the first and last of them.
pub fn otsu_threshold(scores: &[f64]) -> Result<ThresholdModel> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Argument("otsu needs finite scores".into()));
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if scores.len() < 2 || !(hi > lo) {
        return Err(Error::Degenerate("otsu threshold needs at least two distinct scores".into()));
    }
    let width = (hi - lo) / OTSU_BINS as f64;
    let mut count = [0usize; OTSU_BINS];
    let mut sum = [0.0f64; OTSU_BINS];
    for &s in scores {
        let b = otsu_bin(s, lo, width);
        count[b] += 1;
        sum[b] += s;
    }
    let n = scores.len() as f64;
    let total: f64 = sum.iter().sum();
    let (mut c0, mut s0) = (0usize, 0.0);
    let mut between = vec![f64::NEG_INFINITY; OTSU_BINS];
    for t in 1..OTSU_BINS {
        c0 += count[t - 1];
        s0 += sum[t - 1];
        let c1 = scores.len() - c0;
        if c0 == 0 || c1 == 0 {
            continue;
        }
        let (w0, w1) = (c0 as f64 / n, c1 as f64 / n);
        let (m0, m1) = (s0 / c0 as f64, (total - s0) / c1 as f64);
        between[t] = w0 * w1 * (m0 - m1) * (m0 - m1);
    }
    let edge = |t: usize| lo + t as f64 * width;
    let (first, last) = plateau(&between);
    Ok(ThresholdModel { tau: 0.5 * (edge(first) + edge(last)), mode: ThresholdMode::Otsu, f1: None, fallback: false })
}

pub(crate) fn otsu_bin(s: f64, lo: f64, width: f64) -> usize {
    (((s - lo) / width).floor() as usize).min(OTSU_BINS - 1)
}

/// First and last index within relative 1e-12 of the maximum.
pub(crate) fn plateau(values: &[f64]) -> (usize, usize) {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = best.abs() * 1e-12;
    let hits: Vec<usize> = (0..values.len()).filter(|&i| values[i] >= best - tol).collect();
    (hits[0], *hits.last().unwrap())
}
