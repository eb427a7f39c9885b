use crate::error::{Error, Result};

/// Sinusoidal 2D positional encoding parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionalEncodingConfig {
    pub dim: usize,
    pub base: f64,
}

impl Default for PositionalEncodingConfig {
    fn default() -> Self {
        PositionalEncodingConfig { dim: 32, base: 10_000.0 }
    }
}

impl PositionalEncodingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim % 4 != 0 {
            return Err(Error::Config(format!("positional encoding dim {} must be a positive multiple of 4", self.dim)));
        }
        if !(self.base > 1.0) || !self.base.is_finite() {
            return Err(Error::Config(format!("positional encoding base {} must exceed 1", self.base)));
        }
        Ok(())
    }
}

/// Encodes grid position `(h, w)`.
///
/// The first half encodes the row and the second half the column, each as
/// interleaved `sin(p * f_i), cos(p * f_i)` with `f_i = base^(-4i/C)`.
pub fn positional_encoding(h: usize, w: usize, config: &PositionalEncodingConfig) -> Vec<f64> {
    let quarter = config.dim / 4;
    let mut out = Vec::with_capacity(config.dim);
    for pos in [h as f64, w as f64] {
        for i in 0..quarter {
            let freq = config.base.powf(-4.0 * i as f64 / config.dim as f64);
            out.push((pos * freq).sin());
            out.push((pos * freq).cos());
        }
    }
    out
}

/// Encodings for every cell of an `height x width` grid, row-major.
pub fn encoding_table(height: usize, width: usize, config: &PositionalEncodingConfig) -> Vec<f64> {
    let mut table = Vec::with_capacity(height * width * config.dim);
    for h in 0..height {
        for w in 0..width {
            table.extend(positional_encoding(h, w, config));
        }
    }
    table
}
