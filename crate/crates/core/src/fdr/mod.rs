//! Feature dimension reduction of representations: PCA and NMF.

mod nmf;
mod pca;

use std::fmt;
use std::str::FromStr;

pub use self::nmf::{fit_nmf, NmfConfig, NmfFit, NmfModel, NMF_EPS, NMF_TRANSFORM_ITERS};
pub use self::pca::{fit_pca, PcaModel};

use crate::binio::{len_u32, Reader, Writer};
use crate::error::{Error, Result};

/// Default reduced dimension.
pub const DEFAULT_FDR_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FdrMethod {
    #[default]
    Pca,
    Nmf,
}

impl FromStr for FdrMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(FdrMethod::Pca),
            "nmf" => Ok(FdrMethod::Nmf),
            other => Err(Error::Config(format!("unknown reduction method {other:?} (pca|nmf)"))),
        }
    }
}

impl fmt::Display for FdrMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FdrMethod::Pca => "pca",
            FdrMethod::Nmf => "nmf",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReductionModel {
    Pca(PcaModel),
    Nmf(NmfModel),
}

/// Reduced representation `F_L` of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedVector {
    pub id: String,
    pub values: Vec<f64>,
}

impl ReductionModel {
    pub fn fit(method: FdrMethod, rows: &[Vec<f64>], d: usize, nmf: &NmfConfig) -> Result<Self> {
        Ok(match method {
            FdrMethod::Pca => ReductionModel::Pca(fit_pca(rows, d)?),
            FdrMethod::Nmf => ReductionModel::Nmf(fit_nmf(rows, d, nmf)?.model),
        })
    }

    pub fn method(&self) -> FdrMethod {
        match self {
            ReductionModel::Pca(_) => FdrMethod::Pca,
            ReductionModel::Nmf(_) => FdrMethod::Nmf,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            ReductionModel::Pca(m) => m.n_features(),
            ReductionModel::Nmf(m) => m.n_features,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ReductionModel::Pca(m) => m.dim(),
            ReductionModel::Nmf(m) => m.dim,
        }
    }

    pub fn transform(&self, id: &str, row: &[f64]) -> Result<ReducedVector> {
        if row.len() != self.n_features() {
            return Err(Error::Argument(format!("expected {} features, got {}", self.n_features(), row.len())));
        }
        let values = match self {
            ReductionModel::Pca(m) => m.transform(row),
            ReductionModel::Nmf(m) => m.transform(row),
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite reduced vector for {id:?}")));
        }
        Ok(ReducedVector { id: id.to_string(), values })
    }

    pub(crate) fn encode(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        let (p, d) = (self.n_features(), self.dim());
        w.u32(match self {
            ReductionModel::Pca(_) => 0,
            ReductionModel::Nmf(_) => 1,
        });
        w.u32(len_u32(p, "feature count")?);
        w.u32(len_u32(d, "reduced dim")?);
        match self {
            ReductionModel::Pca(m) => {
                w.u32(len_u32(m.n_samples, "sample count")?);
                m.mean.iter().for_each(|&v| w.f64(v));
                m.components.iter().flatten().for_each(|&v| w.f64(v));
                m.singular_values.iter().for_each(|&v| w.f64(v));
            }
            ReductionModel::Nmf(m) => {
                w.f64(m.shift);
                m.basis.iter().for_each(|&v| w.f64(v));
            }
        }
        Ok(w.buf)
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let at = r.offset();
        let tag = r.u32("reduction method")?;
        let p = r.u32("feature count")? as usize;
        let d = r.u32("reduced dim")? as usize;
        if p == 0 || d == 0 || d > p || p.saturating_mul(d).saturating_mul(8) > r.remaining() {
            return Err(Error::format(at, format!("implausible reduction shape {p}x{d}")));
        }
        match tag {
            0 => {
                let n_samples = r.u32("sample count")? as usize;
                if n_samples < 2 {
                    return Err(Error::format(at, "PCA model needs at least 2 samples"));
                }
                let mean = r.f64_vec(p, "PCA mean")?;
                let flat = r.f64_vec(p * d, "PCA components")?;
                let components = flat.chunks_exact(p).map(<[f64]>::to_vec).collect();
                let singular_values = r.f64_vec(d, "singular values")?;
                Ok(ReductionModel::Pca(PcaModel { mean, components, singular_values, n_samples }))
            }
            1 => {
                let shift = r.f64("NMF shift")?;
                let basis = r.f64_vec(p * d, "NMF basis")?;
                Ok(ReductionModel::Nmf(NmfModel { basis, n_features: p, dim: d, shift }))
            }
            other => Err(Error::format(at, format!("unknown reduction method tag {other}"))),
        }
    }
}
