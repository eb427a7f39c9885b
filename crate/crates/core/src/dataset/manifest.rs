use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Image quality grade, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QualityGrade {
    Outstanding,
    Gradable,
    Ungradable,
}

impl QualityGrade {
    pub const ALL: [QualityGrade; 3] = [QualityGrade::Outstanding, QualityGrade::Gradable, QualityGrade::Ungradable];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QualityGrade::Outstanding => "outstanding",
            QualityGrade::Gradable => "gradable",
            QualityGrade::Ungradable => "ungradable",
        }
    }

    pub fn is_outstanding(self) -> bool {
        self == QualityGrade::Outstanding
    }
}

impl fmt::Display for QualityGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QualityGrade {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "outstanding" => Ok(QualityGrade::Outstanding),
            "gradable" => Ok(QualityGrade::Gradable),
            "ungradable" => Ok(QualityGrade::Ungradable),
            other => Err(Error::Config(format!("unknown quality grade {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub label: Option<QualityGrade>,
}

/// List of samples with optional labels; ids are unique.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Contract(format!("duplicate sample id {:?}", e.id)));
            }
        }
        Ok(Manifest { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn label_of(&self, id: &str) -> Option<QualityGrade> {
        self.entries.iter().find(|e| e.id == id).and_then(|e| e.label)
    }

    /// Keeps entries for which `keep` holds.
    pub fn filter(&self, mut keep: impl FnMut(&ManifestEntry) -> bool) -> Manifest {
        Manifest { entries: self.entries.iter().filter(|e| keep(e)).cloned().collect() }
    }

    /// Outstanding-labelled subset, the only admissible training set.
    pub fn outstanding_only(&self) -> Manifest {
        self.filter(|e| e.label == Some(QualityGrade::Outstanding))
    }

    /// Fails if any entry carries a label other than outstanding.
    pub fn ensure_training_only(&self) -> Result<()> {
        match self.entries.iter().find(|e| matches!(e.label, Some(l) if l != QualityGrade::Outstanding)) {
            Some(e) => Err(Error::Contract(format!(
                "training manifest must contain outstanding samples only; {:?} is labelled {}",
                e.id,
                e.label.unwrap()
            ))),
            None => Ok(()),
        }
    }

    pub fn parse<R: Read>(reader: R, base_dir: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).from_reader(reader);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let cols: Vec<&str> = headers.iter().map(str::trim).collect();
        if cols != ["id", "path", "label"] {
            return Err(Error::format(0, format!("manifest header must be id,path,label, found {}", cols.join(","))));
        }
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let id = rec.get(0).unwrap_or("").trim().to_string();
            if id.is_empty() {
                return Err(Error::format(rec.position().map_or(0, |p| p.byte()), "empty sample id"));
            }
            let raw_path = PathBuf::from(rec.get(1).unwrap_or("").trim());
            let path = if raw_path.is_absolute() { raw_path } else { base_dir.join(raw_path) };
            let label = match rec.get(2).map(str::trim).unwrap_or("") {
                "" => None,
                s => Some(s.parse()?),
            };
            entries.push(ManifestEntry { id, path, label });
        }
        Manifest::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(file, base)
    }

    /// Writes the manifest with paths relative to `base_dir` when possible.
    pub fn write<W: Write>(&self, writer: W, base_dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "path", "label"]).map_err(csv_err)?;
        for e in &self.entries {
            let p = e.path.strip_prefix(base_dir).unwrap_or(&e.path);
            let label = e.label.map_or("", QualityGrade::as_str);
            w.write_record([e.id.as_str(), &p.to_string_lossy(), label]).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<manifest>", e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        self.write(file, base)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<csv>", io),
        other => Error::format(offset, format!("{other:?}")),
    }
}
