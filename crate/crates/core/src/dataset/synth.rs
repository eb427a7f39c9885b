//! Synthetic three-grade angiogram-like corpus.
//!
//! Outstanding images are a dark, slowly varying background with bright
//! curvilinear vessel strokes and mild speckle. Gradable images take such a
//! base through a mild blur, a slight contrast loss and an additive
//! illumination ramp. Ungradable images get a heavy blur, strong contrast
//! loss and opaque horizontal occlusion bands.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::image::{gaussian_blur, GrayImage, DEFAULT_IMAGE_SIZE};
use super::manifest::{Manifest, ManifestEntry, QualityGrade};
use crate::error::{Error, Result};

/// Closed ranges that per-image degradation parameters are drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationRanges {
    pub blur_sigma: (f64, f64),
    pub occlusion_bands: (u32, u32),
    pub contrast_scale: (f64, f64),
    pub illumination_amplitude: (f64, f64),
}

impl DegradationRanges {
    pub const NONE: DegradationRanges = DegradationRanges {
        blur_sigma: (0.0, 0.0),
        occlusion_bands: (0, 0),
        contrast_scale: (1.0, 1.0),
        illumination_amplitude: (0.0, 0.0),
    };

    fn validate(&self, name: &str) -> Result<()> {
        let ok = self.blur_sigma.0 >= 0.0
            && self.blur_sigma.0 <= self.blur_sigma.1
            && self.occlusion_bands.0 <= self.occlusion_bands.1
            && self.contrast_scale.0 > 0.0
            && self.contrast_scale.0 <= self.contrast_scale.1
            && self.contrast_scale.1 <= 1.0
            && self.illumination_amplitude.0 >= 0.0
            && self.illumination_amplitude.0 <= self.illumination_amplitude.1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid degradation ranges for {name}: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpusSpec {
    pub count_per_grade: usize,
    pub seed: u64,
    pub image_size: usize,
    /// Grades to emit; all three by default.
    pub grades: Vec<QualityGrade>,
    /// Prepended to every sample id, e.g. to keep a training corpus disjoint.
    pub id_prefix: String,
    pub gradable: DegradationRanges,
    pub ungradable: DegradationRanges,
}

impl SynthCorpusSpec {
    pub fn new(count_per_grade: usize, seed: u64) -> Self {
        SynthCorpusSpec {
            count_per_grade,
            seed,
            image_size: DEFAULT_IMAGE_SIZE,
            grades: QualityGrade::ALL.to_vec(),
            id_prefix: String::new(),
            gradable: DegradationRanges {
                blur_sigma: (0.7, 1.2),
                occlusion_bands: (0, 0),
                contrast_scale: (0.8, 0.95),
                illumination_amplitude: (0.04, 0.14),
            },
            ungradable: DegradationRanges {
                blur_sigma: (2.0, 3.5),
                occlusion_bands: (1, 3),
                contrast_scale: (0.3, 0.55),
                illumination_amplitude: (0.0, 0.1),
            },
        }
    }

    pub fn with_grades(mut self, grades: &[QualityGrade]) -> Self {
        self.grades = grades.to_vec();
        self
    }

    pub fn with_image_size(mut self, size: usize) -> Self {
        self.image_size = size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.count_per_grade == 0 || self.grades.is_empty() {
            return Err(Error::Config("empty corpus spec: count per grade must be positive".into()));
        }
        if self.image_size < 16 {
            return Err(Error::Config(format!("image size {} too small", self.image_size)));
        }
        self.gradable.validate("gradable")?;
        self.ungradable.validate("ungradable")?;
        let (g, u) = (&self.gradable, &self.ungradable);
        let milder = g.blur_sigma.1 < u.blur_sigma.1
            && g.occlusion_bands.1 < u.occlusion_bands.1
            && g.contrast_scale.0 > u.contrast_scale.1;
        if !milder {
            return Err(Error::Config("gradable degradations must be strictly milder than ungradable".into()));
        }
        Ok(())
    }

    fn ranges(&self, grade: QualityGrade) -> DegradationRanges {
        match grade {
            QualityGrade::Outstanding => DegradationRanges::NONE,
            QualityGrade::Gradable => self.gradable,
            QualityGrade::Ungradable => self.ungradable,
        }
    }
}

/// Sample id used for the `index`-th image of `grade`.
pub fn synth_id(grade: QualityGrade, index: usize) -> String {
    format!("{}-{index:04}", grade.as_str())
}

/// Generates the corpus grade by grade. Paths in the manifest are
/// `images/<id>.png`, relative to wherever the caller writes them.
pub fn generate_synthetic_corpus(spec: &SynthCorpusSpec) -> Result<(Vec<GrayImage>, Manifest)> {
    spec.validate()?;
    let mut images = Vec::new();
    let mut entries = Vec::new();
    for &grade in &spec.grades {
        for i in 0..spec.count_per_grade {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(((grade.index() as u64) << 32) | i as u64);
            images.push(synth_image(spec.image_size, spec.ranges(grade), &mut rng)?);
            let id = format!("{}{}", spec.id_prefix, synth_id(grade, i));
            entries.push(ManifestEntry { path: PathBuf::from(format!("images/{id}.png")), id, label: Some(grade) });
        }
    }
    Ok((images, Manifest::new(entries)?))
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

fn synth_image(size: usize, ranges: DegradationRanges, rng: &mut ChaCha8Rng) -> Result<GrayImage> {
    let base = vessel_base(size, rng)?;
    let sigma = draw(rng, ranges.blur_sigma);
    let contrast = draw(rng, ranges.contrast_scale);
    let amplitude = draw(rng, ranges.illumination_amplitude);
    let bands = if ranges.occlusion_bands.1 > ranges.occlusion_bands.0 {
        rng.gen_range(ranges.occlusion_bands.0..=ranges.occlusion_bands.1)
    } else {
        ranges.occlusion_bands.0
    };
    let ramp_angle = rng.gen_range(0.0..2.0 * PI);

    let mut img = gaussian_blur(&base, sigma);
    let mean = img.pixels().iter().sum::<f64>() / img.pixels().len() as f64;
    let (ca, sa) = (ramp_angle.cos(), ramp_angle.sin());
    let half = size as f64 / 2.0;
    let mut px: Vec<f64> = img.pixels().to_vec();
    for y in 0..size {
        for x in 0..size {
            let v = &mut px[y * size + x];
            *v = mean + contrast * (*v - mean);
            // Ramp rises from 0 to `amplitude` along the drawn direction.
            let proj = ((x as f64 - half) * ca + (y as f64 - half) * sa) / (half * 2f64.sqrt());
            *v += amplitude * 0.5 * (proj + 1.0);
        }
    }
    for _ in 0..bands {
        let height = rng.gen_range(size / 20..=size / 7).max(1);
        let top = rng.gen_range(0..size - height);
        let level = rng.gen_range(0.02..0.06);
        for v in &mut px[top * size..(top + height) * size] {
            *v = level;
        }
    }
    img = GrayImage::from_fn(size, size, |x, y| px[y * size + x])?;
    Ok(img)
}

/// Dark background, vessel strokes stamped with Gaussian cross-sections, speckle.
fn vessel_base(size: usize, rng: &mut ChaCha8Rng) -> Result<GrayImage> {
    let s = size as f64;
    let (fx, fy, phase) = (rng.gen_range(0.5..1.5), rng.gen_range(0.5..1.5), rng.gen_range(0.0..2.0 * PI));
    let mut px: Vec<f64> = (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f64 / s, (i / size) as f64 / s);
            0.08 + 0.02 * (2.0 * PI * (fx * x + fy * y) + phase).sin()
        })
        .collect();

    let turn = Normal::new(0.0, 0.12).unwrap();
    let n_vessels = (40.0 * (s / 320.0).powi(2)).ceil() as usize + rng.gen_range(0..8);
    for _ in 0..n_vessels {
        let (mut x, mut y) = (rng.gen_range(0.0..s), rng.gen_range(0.0..s));
        let mut angle = rng.gen_range(0.0..2.0 * PI);
        let intensity = rng.gen_range(0.55..0.9);
        let width: f64 = rng.gen_range(0.6..1.4);
        let steps = rng.gen_range(size / 4..size);
        let reach = (3.0 * width).ceil() as isize;
        for _ in 0..steps {
            let (cx, cy) = (x.round() as isize, y.round() as isize);
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let (px_x, px_y) = (cx + dx, cy + dy);
                    if px_x < 0 || px_y < 0 || px_x >= size as isize || px_y >= size as isize {
                        continue;
                    }
                    let d2 = (px_x as f64 - x).powi(2) + (px_y as f64 - y).powi(2);
                    let v = intensity * (-d2 / (2.0 * width * width)).exp();
                    let slot = &mut px[px_y as usize * size + px_x as usize];
                    if v > *slot {
                        *slot = v;
                    }
                }
            }
            angle += turn.sample(rng);
            x += angle.cos();
            y += angle.sin();
            if x < -4.0 || y < -4.0 || x > s + 4.0 || y > s + 4.0 {
                break;
            }
        }
    }
    let speckle = Normal::new(0.0, 0.02).unwrap();
    for v in &mut px {
        *v += speckle.sample(rng);
    }
    GrayImage::from_fn(size, size, |x, y| px[y * size + x])
}
