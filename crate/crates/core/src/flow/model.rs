use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::decoder::{FlowArch, PositionSet, ScaleDecoder, TrainConfig, TrainingLog};
use super::pe::{encoding_table, PositionalEncodingConfig};
use crate::binio::{len_u32, Reader, Writer};
use crate::encoder::{FeaturePyramid, PyramidConfig};
use crate::error::{Error, Result};

/// Upper bound on stored-model encoding table entries (128 MiB of f64).
const MAX_ENCODING_ENTRIES: usize = 1 << 24;

/// K independent conditional flow decoders, one per pyramid scale.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    pyramid: PyramidConfig,
    pe: PositionalEncodingConfig,
    arch: FlowArch,
    decoders: Vec<ScaleDecoder>,
    pe_tables: Vec<Vec<f64>>,
}

impl FlowModel {
    /// Assembles a model from already-built decoders.
    pub fn from_parts(
        pyramid: PyramidConfig,
        pe: PositionalEncodingConfig,
        arch: FlowArch,
        decoders: Vec<ScaleDecoder>,
    ) -> Result<Self> {
        pyramid.validate()?;
        pe.validate()?;
        arch.validate()?;
        if decoders.len() != pyramid.num_scales() {
            return Err(Error::Config(format!("{} decoders for {} scales", decoders.len(), pyramid.num_scales())));
        }
        for (k, (dec, &(_, _, d))) in decoders.iter().zip(&pyramid.shapes()).enumerate() {
            if dec.dim() != d || dec.cond_dim() != pe.dim {
                return Err(Error::Config(format!("decoder {k} dims do not match config")));
            }
        }
        let pe_tables = pyramid.shapes().iter().map(|&(h, w, _)| encoding_table(h, w, &pe)).collect();
        Ok(FlowModel { pyramid, pe, arch, decoders, pe_tables })
    }

    /// Zero-weight model with identity standardization.
    pub fn zeroed(pyramid: PyramidConfig, pe: PositionalEncodingConfig, arch: FlowArch, seed: u64) -> Result<Self> {
        pyramid.validate()?;
        let decoders = pyramid
            .depths
            .iter()
            .enumerate()
            .map(|(k, &d)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(2 * k as u64);
                ScaleDecoder::zeroed(d, pe.dim, &arch, &mut rng)
            })
            .collect();
        Self::from_parts(pyramid, pe, arch, decoders)
    }

    /// Fits every decoder on positions pooled from the training pyramids.
    pub fn train(
        pyramids: &[FeaturePyramid],
        pyramid: &PyramidConfig,
        pe: &PositionalEncodingConfig,
        arch: &FlowArch,
        cfg: &TrainConfig,
    ) -> Result<(FlowModel, Vec<TrainingLog>)> {
        pyramid.validate()?;
        pe.validate()?;
        arch.validate()?;
        cfg.validate()?;
        if pyramids.len() < 2 {
            return Err(Error::Argument(format!("training needs at least 2 images, got {}", pyramids.len())));
        }
        for p in pyramids {
            p.check_against(pyramid)?;
        }
        let mut decoders = Vec::with_capacity(pyramid.num_scales());
        let mut logs = Vec::with_capacity(pyramid.num_scales());
        for (k, &(h, w, d)) in pyramid.shapes().iter().enumerate() {
            let set = PositionSet {
                dim: d,
                cond_dim: pe.dim,
                features: pyramids.iter().flat_map(|p| p.scales[k].data.iter().map(|&v| v as f64)).collect(),
                cond_table: encoding_table(h, w, pe),
                cond_index: (0..pyramids.len()).flat_map(|_| 0..h * w).collect(),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(2 * k as u64);
            let mut dec = ScaleDecoder::random(d, pe.dim, arch, &mut rng);
            dec.fit_standardization(&set)?;
            let log = dec.train(&set, cfg, 2 * k as u64 + 1)?;
            log::info!(
                "scale {k}: trained on {} positions, final epoch nll {:.4}",
                set.len(),
                log.epoch_nll.last().copied().unwrap_or(f64::NAN)
            );
            decoders.push(dec);
            logs.push(log);
        }
        Ok((Self::from_parts(pyramid.clone(), *pe, *arch, decoders)?, logs))
    }

    pub fn pyramid_config(&self) -> &PyramidConfig {
        &self.pyramid
    }

    pub fn pe_config(&self) -> &PositionalEncodingConfig {
        &self.pe
    }

    pub fn arch(&self) -> &FlowArch {
        &self.arch
    }

    pub fn num_scales(&self) -> usize {
        self.decoders.len()
    }

    pub fn decoder(&self, k: usize) -> &ScaleDecoder {
        &self.decoders[k]
    }

    pub fn decoder_mut(&mut self, k: usize) -> &mut ScaleDecoder {
        &mut self.decoders[k]
    }

    /// `(mu_k, sigma_k)` of training per-position log-likelihood for scale `k`.
    pub fn training_stats(&self, k: usize) -> (f64, f64) {
        self.decoders[k].training_ll_stats()
    }

    /// Encoding vector for cell `(h, w)` of scale `k`.
    pub fn condition(&self, k: usize, h: usize, w: usize) -> &[f64] {
        let width = self.pyramid.shapes()[k].1;
        let c = self.pe.dim;
        let i = h * width + w;
        &self.pe_tables[k][i * c..(i + 1) * c]
    }

    /// Row-major grid of per-position log-likelihoods for scale `k`.
    pub fn log_likelihood_grid(&self, pyramid: &FeaturePyramid, k: usize) -> Result<Vec<f64>> {
        let map = &pyramid.scales[k];
        let dec = &self.decoders[k];
        let c = self.pe.dim;
        let mut z = vec![0.0; map.depth];
        map.positions()
            .enumerate()
            .map(|(i, feat)| {
                for (dst, &v) in z.iter_mut().zip(feat) {
                    *dst = v as f64;
                }
                dec.log_likelihood(&z, &self.pe_tables[k][i * c..(i + 1) * c])
            })
            .collect()
    }

    pub(crate) fn encode(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        w.u32(len_u32(self.pyramid.image_size, "image size")?);
        w.u32(len_u32(self.pyramid.num_scales(), "scale count")?);
        for (&s, &d) in self.pyramid.strides.iter().zip(&self.pyramid.depths) {
            w.u32(len_u32(s, "stride")?);
            w.u32(len_u32(d, "depth")?);
        }
        w.u32(len_u32(self.pe.dim, "encoding dim")?);
        w.f64(self.pe.base);
        w.u32(len_u32(self.arch.blocks, "block count")?);
        w.u32(len_u32(self.arch.hidden.unwrap_or(0), "hidden width")?);
        w.f64(self.arch.clamp);
        for dec in &self.decoders {
            for perm in &dec.perms {
                for &p in perm {
                    w.u32(p as u32);
                }
            }
        }
        for dec in &self.decoders {
            dec.mean.iter().chain(&dec.std).for_each(|&v| w.f64(v));
        }
        for dec in &self.decoders {
            w.f64(dec.ll_mean);
            w.f64(dec.ll_std);
        }
        for dec in &self.decoders {
            dec.params.iter().for_each(|&p| w.f32(p as f32));
        }
        Ok(w.buf)
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let at = r.offset();
        let image_size = r.u32("image size")? as usize;
        let k = r.u32("scale count")? as usize;
        if k == 0 || k.saturating_mul(8) > r.remaining() {
            return Err(Error::format(at, format!("implausible scale count {k}")));
        }
        let mut strides = Vec::with_capacity(k);
        let mut depths = Vec::with_capacity(k);
        for _ in 0..k {
            strides.push(r.u32("stride")? as usize);
            depths.push(r.u32("depth")? as usize);
        }
        let pyramid = PyramidConfig { image_size, strides, depths };
        let pe = PositionalEncodingConfig { dim: r.u32("encoding dim")? as usize, base: r.f64("encoding base")? };
        let blocks = r.u32("block count")? as usize;
        let hidden = match r.u32("hidden width")? {
            0 => None,
            h => Some(h as usize),
        };
        let arch = FlowArch { blocks, hidden, clamp: r.f64("clamp")? };
        let cfg_err = |e: Error| Error::format(at, format!("invalid stored config: {e}"));
        pyramid.validate().map_err(cfg_err)?;
        pe.validate().map_err(cfg_err)?;
        arch.validate().map_err(cfg_err)?;
        // Bound allocation by what the payload could possibly hold.
        let worst = blocks.saturating_mul(pe.dim + pyramid.depths.iter().max().copied().unwrap_or(0));
        if worst > r.remaining() || pyramid.depths.iter().any(|&d| d > r.remaining()) {
            return Err(Error::format(r.offset(), "truncated payload: model dimensions exceed file size"));
        }
        // Permutations, standardization, training stats and f32 weights.
        let payload: usize = pyramid
            .depths
            .iter()
            .map(|&d| 4 * blocks * d + 16 * d + 16 + 4 * ScaleDecoder::param_count(d, pe.dim, &arch))
            .sum();
        if payload > r.remaining() {
            return Err(Error::format(r.offset(), format!("truncated payload: model needs {payload} bytes")));
        }
        // Encoding tables are rebuilt rather than stored, so cap them directly.
        let cells: usize = pyramid.shapes().iter().map(|&(h, w, _)| h * w).sum();
        if cells.saturating_mul(pe.dim) > MAX_ENCODING_ENTRIES {
            return Err(Error::format(at, format!("encoding tables of {cells} x {} entries are implausibly large", pe.dim)));
        }

        let mut decoders: Vec<ScaleDecoder> = pyramid
            .depths
            .iter()
            .map(|&d| ScaleDecoder::zeroed(d, pe.dim, &arch, &mut ChaCha8Rng::seed_from_u64(0)))
            .collect();
        for dec in &mut decoders {
            for perm in &mut dec.perms {
                let at = r.offset();
                for p in perm.iter_mut() {
                    *p = r.u32("permutation")? as usize;
                }
                let mut seen = vec![false; perm.len()];
                for &p in perm.iter() {
                    if p >= seen.len() || std::mem::replace(&mut seen[p], true) {
                        return Err(Error::format(at, "stored permutation is not a bijection"));
                    }
                }
            }
        }
        for dec in &mut decoders {
            let at = r.offset();
            let mean = r.f64_vec(dec.dim, "standardization mean")?;
            let std = r.f64_vec(dec.dim, "standardization std")?;
            dec.set_standardization(mean, std).map_err(|e| Error::format(at, e.to_string()))?;
        }
        for dec in &mut decoders {
            dec.ll_mean = r.f64("training ll mean")?;
            dec.ll_std = r.f64("training ll std")?;
        }
        for dec in &mut decoders {
            let n = dec.params.len();
            dec.params = r.f32_vec(n, "weights")?.into_iter().map(f64::from).collect();
        }
        Self::from_parts(pyramid, pe, arch, decoders)
    }
}
