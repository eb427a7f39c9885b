//! Confusion matrices, Cohen's kappa and the key=value evaluation report.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::config::parse_key_values;
use crate::dataset::{Manifest, QualityGrade};
use crate::error::{Error, Result};

/// Rows are true classes, columns predicted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_indices(classes: Vec<String>, truth: &[usize], pred: &[usize]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::Argument(format!("{} true labels vs {} predictions", truth.len(), pred.len())));
        }
        if truth.is_empty() {
            return Err(Error::Argument("confusion matrix of zero samples".into()));
        }
        let k = classes.len();
        let mut counts = vec![vec![0u64; k]; k];
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= k || p >= k {
                return Err(Error::Argument(format!("class index out of range for {k} classes")));
            }
            counts[t][p] += 1;
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.classes.len()).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    /// CSV with a header row of predicted classes and one row per true class.
    pub fn to_csv(&self) -> String {
        let mut s = format!("true\\pred,{}\n", self.classes.join(","));
        for (c, row) in self.classes.iter().zip(&self.counts) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "{c},{}", cells.join(","));
        }
        s
    }
}

/// 3x3 matrix over Outstanding, Gradable, Ungradable.
pub fn confusion(truth: &[QualityGrade], pred: &[QualityGrade]) -> Result<ConfusionMatrix> {
    let names = QualityGrade::ALL.iter().map(|g| g.as_str().to_string()).collect();
    let t: Vec<usize> = truth.iter().map(|g| g.index()).collect();
    let p: Vec<usize> = pred.iter().map(|g| g.index()).collect();
    ConfusionMatrix::from_indices(names, &t, &p)
}

/// 2x2 matrix over outstanding / non-outstanding.
pub fn confusion_stage1(truth_non_outstanding: &[bool], pred_non_outstanding: &[bool]) -> Result<ConfusionMatrix> {
    let t: Vec<usize> = truth_non_outstanding.iter().map(|&b| usize::from(b)).collect();
    let p: Vec<usize> = pred_non_outstanding.iter().map(|&b| usize::from(b)).collect();
    ConfusionMatrix::from_indices(vec!["outstanding".into(), "non-outstanding".into()], &t, &p)
}

/// Unweighted Cohen's kappa in percent; 0 when chance agreement is total.
pub fn cohen_kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Argument("kappa of an empty confusion matrix".into()));
    }
    let n = total as f64;
    let p_o = cm.trace() as f64 / n;
    let p_e: f64 = cm.row_sums().iter().zip(cm.col_sums()).map(|(&r, c)| r as f64 * c as f64).sum::<f64>() / (n * n);
    if p_e == 1.0 {
        return Ok(0.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e) * 100.0)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Argument("accuracy of an empty confusion matrix".into()));
    }
    Ok(cm.trace() as f64 / total as f64 * 100.0)
}

/// Precision, recall and F1 of one class; 0 where the ratio is undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    let (rows, cols) = (cm.row_sums(), cm.col_sums());
    (0..cm.classes.len())
        .map(|i| {
            let tp = cm.counts[i][i] as f64;
            let ratio = |d: u64| if d == 0 { 0.0 } else { tp / d as f64 };
            let (precision, recall) = (ratio(cols[i]), ratio(rows[i]));
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            ClassMetrics { precision, recall, f1 }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Percent.
    pub kappa: f64,
    /// Percent.
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        Ok(EvalReport {
            kappa: cohen_kappa(&confusion)?,
            accuracy: accuracy(&confusion)?,
            per_class: class_metrics(&confusion),
            confusion,
        })
    }

    fn write(&self, prefix: &str, s: &mut String) {
        let _ = writeln!(s, "{prefix}classes = {}", self.confusion.classes.join(","));
        let _ = writeln!(s, "{prefix}n = {}", self.confusion.total());
        let _ = writeln!(s, "{prefix}kappa = {}", self.kappa);
        let _ = writeln!(s, "{prefix}accuracy = {}", self.accuracy);
        for (c, m) in self.confusion.classes.iter().zip(&self.per_class) {
            let _ = writeln!(s, "{prefix}precision.{c} = {}", m.precision);
            let _ = writeln!(s, "{prefix}recall.{c} = {}", m.recall);
            let _ = writeln!(s, "{prefix}f1.{c} = {}", m.f1);
        }
        for (c, row) in self.confusion.classes.iter().zip(&self.confusion.counts) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "{prefix}confusion.{c} = {}", cells.join(","));
        }
    }

    fn read(kv: &HashMap<String, String>, prefix: &str) -> Result<Self> {
        let get = |k: &str| {
            kv.get(&format!("{prefix}{k}")).ok_or_else(|| Error::Config(format!("report lacks {prefix}{k}")))
        };
        let num = |k: &str| -> Result<f64> {
            let v = get(k)?;
            v.parse().map_err(|_| Error::Config(format!("bad number {v:?} for {prefix}{k}")))
        };
        let classes: Vec<String> = get("classes")?.split(',').map(str::to_string).collect();
        let mut per_class = Vec::new();
        let mut counts = Vec::new();
        for c in &classes {
            per_class.push(ClassMetrics {
                precision: num(&format!("precision.{c}"))?,
                recall: num(&format!("recall.{c}"))?,
                f1: num(&format!("f1.{c}"))?,
            });
            let row = get(&format!("confusion.{c}"))?
                .split(',')
                .map(|v| v.trim().parse::<u64>().map_err(|_| Error::Config(format!("bad count {v:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != classes.len() {
                return Err(Error::Config(format!("confusion row {c} has {} cells", row.len())));
            }
            counts.push(row);
        }
        let confusion = ConfusionMatrix { classes, counts };
        if num("n")? != confusion.total() as f64 {
            return Err(Error::Config("report n disagrees with the confusion matrix".into()));
        }
        Ok(EvalReport { kappa: num("kappa")?, accuracy: num("accuracy")?, per_class, confusion })
    }
}

/// Three-grade report, the stage-1 binary report and free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub metadata: Vec<(String, String)>,
    pub triage: EvalReport,
    pub stage1: EvalReport,
}

impl PipelineReport {
    /// `key = value` text. Keys: `meta.*`, then the three-grade block
    /// (`kappa`, `accuracy`, `precision.<class>`, ..., `confusion.<class>`),
    /// then the same block prefixed `stage1.`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "meta.{k} = {v}");
        }
        self.triage.write("", &mut s);
        self.stage1.write("stage1.", &mut s);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let pairs = parse_key_values(text)?;
        let metadata =
            pairs.iter().filter_map(|(k, v)| k.strip_prefix("meta.").map(|k| (k.to_string(), v.clone()))).collect();
        let kv: HashMap<String, String> = pairs.into_iter().collect();
        Ok(PipelineReport { metadata, triage: EvalReport::read(&kv, "")?, stage1: EvalReport::read(&kv, "stage1.")? })
    }
}

/// Scores final grades against manifest labels. Every labelled manifest id
/// needs a prediction; predictions for ids outside the manifest are ignored.
pub fn evaluate_pipeline(
    predictions: &[(String, QualityGrade)],
    manifest: &Manifest,
    metadata: Vec<(String, String)>,
) -> Result<PipelineReport> {
    let pred: HashMap<&str, QualityGrade> = predictions.iter().map(|(id, g)| (id.as_str(), *g)).collect();
    let mut missing = Vec::new();
    let (mut truth, mut guess) = (Vec::new(), Vec::new());
    for e in manifest.entries() {
        let label = e.label.ok_or_else(|| Error::Argument(format!("manifest entry {:?} has no label", e.id)))?;
        match pred.get(e.id.as_str()) {
            Some(&g) => {
                truth.push(label);
                guess.push(g);
            }
            None => missing.push(e.id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Coverage(missing));
    }
    let t1: Vec<bool> = truth.iter().map(|g| !g.is_outstanding()).collect();
    let p1: Vec<bool> = guess.iter().map(|g| !g.is_outstanding()).collect();
    Ok(PipelineReport {
        metadata,
        triage: EvalReport::from_confusion(confusion(&truth, &guess)?)?,
        stage1: EvalReport::from_confusion(confusion_stage1(&t1, &p1)?)?,
    })
}
