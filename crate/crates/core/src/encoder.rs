//! Multi-scale feature pyramid extraction.
//!
//! The built-in extractor pools handcrafted intensity and gradient statistics
//! over non-overlapping cells at several strides. Deep features computed
//! elsewhere can be imported through the feature file instead; they only need
//! to agree with the [`PyramidConfig`] shapes.

use std::f64::consts::PI;

use crate::dataset::GrayImage;
use crate::error::{Error, Result};

/// Descriptor length of the built-in statistical encoder.
pub const STAT_DESCRIPTOR_DIM: usize = 8;

/// Largest accepted grid, in cells, at any single scale.
pub const MAX_GRID_CELLS: usize = 1 << 20;

/// Shapes of the K feature maps produced for one image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PyramidConfig {
    pub image_size: usize,
    pub strides: Vec<usize>,
    pub depths: Vec<usize>,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        PyramidConfig::stat(crate::dataset::DEFAULT_IMAGE_SIZE, vec![8, 16, 32])
    }
}

impl PyramidConfig {
    /// Config for the statistical encoder: every scale has depth 8.
    pub fn stat(image_size: usize, strides: Vec<usize>) -> Self {
        let depths = vec![STAT_DESCRIPTOR_DIM; strides.len()];
        PyramidConfig { image_size, strides, depths }
    }

    pub fn num_scales(&self) -> usize {
        self.strides.len()
    }

    /// `(H_k, W_k, D_k)` for every scale.
    pub fn shapes(&self) -> Vec<(usize, usize, usize)> {
        self.strides
            .iter()
            .zip(&self.depths)
            .map(|(&s, &d)| (self.image_size / s, self.image_size / s, d))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.strides.is_empty() {
            return Err(Error::Config("pyramid needs at least one scale".into()));
        }
        if self.depths.len() != self.strides.len() {
            return Err(Error::Config(format!(
                "{} strides but {} depths",
                self.strides.len(),
                self.depths.len()
            )));
        }
        if self.strides.windows(2).any(|w| w[0] >= w[1]) || self.strides[0] == 0 {
            return Err(Error::Config(format!("strides must be positive and strictly increasing: {:?}", self.strides)));
        }
        if self.image_size == 0 || (self.image_size / self.strides[0]).saturating_pow(2) > MAX_GRID_CELLS {
            return Err(Error::Config(format!(
                "image size {} with stride {} exceeds {MAX_GRID_CELLS} grid cells",
                self.image_size, self.strides[0]
            )));
        }
        if let Some(s) = self.strides.iter().find(|&&s| self.image_size % s != 0) {
            return Err(Error::Config(format!("stride {s} does not divide image size {}", self.image_size)));
        }
        if let Some(d) = self.depths.iter().find(|&&d| d < 2) {
            return Err(Error::Config(format!("descriptor depth {d} < 2")));
        }
        Ok(())
    }
}

/// One `H x W x D` feature map, row-major with the descriptor innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub depth: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, depth: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * depth {
            return Err(Error::Argument(format!(
                "feature map {height}x{width}x{depth} needs {} values, got {}",
                height * width * depth,
                data.len()
            )));
        }
        Ok(FeatureMap { height, width, depth, data })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.depth)
    }

    #[inline]
    pub fn at(&self, h: usize, w: usize) -> &[f32] {
        let start = (h * self.width + w) * self.depth;
        &self.data[start..start + self.depth]
    }

    pub fn positions(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.depth)
    }
}

/// The K per-scale maps extracted from one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    pub scales: Vec<FeatureMap>,
}

impl FeaturePyramid {
    pub fn shapes(&self) -> Vec<(usize, usize, usize)> {
        self.scales.iter().map(FeatureMap::shape).collect()
    }

    pub fn check_against(&self, config: &PyramidConfig) -> Result<()> {
        let expected = config.shapes();
        let found = self.shapes();
        if expected != found {
            return Err(Error::Config(format!(
                "pyramid shape mismatch: expected {expected:?}, found {found:?}"
            )));
        }
        if self.scales.iter().any(|m| m.data.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numeric("non-finite value in feature pyramid".into()));
        }
        Ok(())
    }
}

/// Orientation bin of an unsigned gradient direction; bin 0 is horizontal.
#[inline]
fn orientation_bin(gx: f64, gy: f64) -> usize {
    let theta = gy.atan2(gx).rem_euclid(PI);
    (((theta + PI / 8.0) / (PI / 4.0)).floor() as usize) % 4
}

/// Extracts the statistical descriptor pyramid.
///
/// Per cell: mean, standard deviation, mean gradient magnitude, four
/// magnitude-weighted orientation bins (normalised by cell area, so they sum
/// to the mean magnitude) and local contrast `max - min`. Gradients are
/// central differences with replicated borders.
pub fn extract_stat_pyramid(image: &GrayImage, config: &PyramidConfig) -> Result<FeaturePyramid> {
    config.validate()?;
    if config.depths.iter().any(|&d| d != STAT_DESCRIPTOR_DIM) {
        return Err(Error::Config(format!(
            "statistical encoder produces depth {STAT_DESCRIPTOR_DIM}, config asks for {:?}",
            config.depths
        )));
    }
    let (w, h) = (image.width(), image.height());
    if let Some(s) = config.strides.iter().find(|&&s| w % s != 0 || h % s != 0) {
        return Err(Error::Config(format!("image {w}x{h} not divisible by stride {s}")));
    }

    let mut mag = vec![0.0; w * h];
    let mut bin = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let gx = (image.get_clamped(xi + 1, yi) - image.get_clamped(xi - 1, yi)) / 2.0;
            let gy = (image.get_clamped(xi, yi + 1) - image.get_clamped(xi, yi - 1)) / 2.0;
            mag[y * w + x] = gx.hypot(gy);
            bin[y * w + x] = orientation_bin(gx, gy) as u8;
        }
    }

    let scales = config
        .strides
        .iter()
        .map(|&stride| {
            let (gh, gw) = (h / stride, w / stride);
            let area = (stride * stride) as f64;
            let mut data = Vec::with_capacity(gh * gw * STAT_DESCRIPTOR_DIM);
            for cy in 0..gh {
                for cx in 0..gw {
                    let (mut sum, mut sum2, mut msum) = (0.0, 0.0, 0.0);
                    let mut hist = [0.0f64; 4];
                    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                    for y in cy * stride..(cy + 1) * stride {
                        for x in cx * stride..(cx + 1) * stride {
                            let v = image.get(x, y);
                            sum += v;
                            sum2 += v * v;
                            lo = lo.min(v);
                            hi = hi.max(v);
                            let m = mag[y * w + x];
                            msum += m;
                            hist[bin[y * w + x] as usize] += m;
                        }
                    }
                    let mean = sum / area;
                    let var = (sum2 / area - mean * mean).max(0.0);
                    let desc = [
                        mean,
                        var.sqrt(),
                        msum / area,
                        hist[0] / area,
                        hist[1] / area,
                        hist[2] / area,
                        hist[3] / area,
                        hi - lo,
                    ];
                    data.extend(desc.iter().map(|&v| v as f32));
                }
            }
            FeatureMap { height: gh, width: gw, depth: STAT_DESCRIPTOR_DIM, data }
        })
        .collect();
    Ok(FeaturePyramid { scales })
}

/// Validates an imported pyramid against the expected config.
pub fn pyramid_from_external(pyramid: FeaturePyramid, config: &PyramidConfig) -> Result<FeaturePyramid> {
    config.validate()?;
    if pyramid.scales.len() != config.num_scales() {
        return Err(Error::Config(format!(
            "expected K={} scales with shapes {:?}, found K={} with shapes {:?}",
            config.num_scales(),
            config.shapes(),
            pyramid.scales.len(),
            pyramid.shapes()
        )));
    }
    pyramid.check_against(config)?;
    Ok(pyramid)
}
