//! One conditional flow decoder: standardization, a stack of coupling blocks
//! with fixed permutations in between, and Adam maximum-likelihood training.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::coupling::{BlockCache, CouplingBlock, Parity};
use crate::error::{Error, Result};

/// Std used to draw the initial subnet weights.
pub const INIT_WEIGHT_STD: f64 = 0.01;
const STD_FLOOR: f64 = 1e-6;

/// Coupling-stack hyperparameters shared by every decoder of a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowArch {
    pub blocks: usize,
    /// Subnet hidden width; `None` means twice the feature dimension.
    pub hidden: Option<usize>,
    pub clamp: f64,
}

impl Default for FlowArch {
    fn default() -> Self {
        FlowArch { blocks: 4, hidden: None, clamp: 1.9 }
    }
}

impl FlowArch {
    pub fn hidden_for(&self, dim: usize) -> usize {
        self.hidden.unwrap_or(2 * dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.hidden == Some(0) || !(self.clamp > 0.0) {
            return Err(Error::Config(format!("invalid flow architecture {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Positions per optimizer step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 6, batch_size: 256, learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epochs > 0
            && self.batch_size > 0
            && self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training config {self:?}")))
        }
    }
}

/// Training samples for one decoder: raw feature rows plus an index into a
/// table of conditioning vectors.
#[derive(Debug, Clone, Default)]
pub struct PositionSet {
    pub dim: usize,
    pub cond_dim: usize,
    pub features: Vec<f64>,
    pub cond_table: Vec<f64>,
    pub cond_index: Vec<usize>,
}

impl PositionSet {
    pub fn len(&self) -> usize {
        self.cond_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cond_index.is_empty()
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cond(&self, i: usize) -> &[f64] {
        let c = self.cond_index[i];
        &self.cond_table[c * self.cond_dim..(c + 1) * self.cond_dim]
    }
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    /// Mean minibatch NLL seen during each epoch (before each step's update).
    pub epoch_nll: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleDecoder {
    pub(crate) dim: usize,
    pub(crate) cond_dim: usize,
    pub(crate) blocks: Vec<CouplingBlock>,
    pub(crate) perms: Vec<Vec<usize>>,
    pub(crate) params: Vec<f64>,
    pub(crate) mean: Vec<f64>,
    pub(crate) std: Vec<f64>,
    pub(crate) ll_mean: f64,
    pub(crate) ll_std: f64,
}

impl ScaleDecoder {
    /// Decoder with zero weights, identity standardization and random permutations.
    /// Length of the flat parameter vector for these dimensions.
    pub fn param_count(dim: usize, cond_dim: usize, arch: &FlowArch) -> usize {
        let hidden = arch.hidden_for(dim);
        (0..arch.blocks)
            .map(|b| CouplingBlock::new(dim, cond_dim, hidden, arch.clamp, Parity::alternate(b), 0).num_params())
            .sum()
    }

    pub fn zeroed(dim: usize, cond_dim: usize, arch: &FlowArch, rng: &mut ChaCha8Rng) -> Self {
        let hidden = arch.hidden_for(dim);
        let mut blocks = Vec::with_capacity(arch.blocks);
        let mut perms = Vec::with_capacity(arch.blocks);
        let mut offset = 0;
        for b in 0..arch.blocks {
            let block = CouplingBlock::new(dim, cond_dim, hidden, arch.clamp, Parity::alternate(b), offset);
            offset += block.num_params();
            blocks.push(block);
            let mut perm: Vec<usize> = (0..dim).collect();
            perm.shuffle(rng);
            perms.push(perm);
        }
        ScaleDecoder {
            dim,
            cond_dim,
            blocks,
            perms,
            params: vec![0.0; offset],
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
            ll_mean: 0.0,
            ll_std: 1.0,
        }
    }

    /// Decoder with subnet weights drawn from `N(0, INIT_WEIGHT_STD^2)`; biases zero.
    pub fn random(dim: usize, cond_dim: usize, arch: &FlowArch, rng: &mut ChaCha8Rng) -> Self {
        Self::random_with_std(dim, cond_dim, arch, INIT_WEIGHT_STD, rng)
    }

    pub fn random_with_std(dim: usize, cond_dim: usize, arch: &FlowArch, std: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut dec = Self::zeroed(dim, cond_dim, arch, rng);
        let normal = Normal::new(0.0, std).expect("positive std");
        let hidden = arch.hidden_for(dim);
        for block in &dec.blocks {
            let n_in = block.passive.len() + cond_dim;
            let n_out = 2 * block.active.len();
            let w1 = block.offset;
            let w2 = w1 + hidden * n_in + hidden;
            for p in &mut dec.params[w1..w1 + hidden * n_in] {
                *p = normal.sample(rng);
            }
            for p in &mut dec.params[w2..w2 + n_out * hidden] {
                *p = normal.sample(rng);
            }
        }
        dec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn permutations(&self) -> &[Vec<usize>] {
        &self.perms
    }

    /// Per-dimension standardization `(mean, std)`.
    pub fn standardization(&self) -> (&[f64], &[f64]) {
        (&self.mean, &self.std)
    }

    pub fn set_standardization(&mut self, mean: Vec<f64>, std: Vec<f64>) -> Result<()> {
        if mean.len() != self.dim || std.len() != self.dim || std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Argument("standardization must have dim entries with positive std".into()));
        }
        self.mean = mean;
        self.std = std;
        Ok(())
    }

    /// Mean and std of per-position log-likelihood over the training set.
    pub fn training_ll_stats(&self) -> (f64, f64) {
        (self.ll_mean, self.ll_std)
    }

    pub fn set_training_ll_stats(&mut self, mean: f64, std: f64) {
        self.ll_mean = mean;
        self.ll_std = std;
    }

    pub fn standardize(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }

    fn check_input(&self, x: &[f64], cond: &[f64]) -> Result<()> {
        if x.len() != self.dim || cond.len() != self.cond_dim {
            return Err(Error::Argument(format!(
                "decoder expects dim {} / cond {}, got {} / {}",
                self.dim,
                self.cond_dim,
                x.len(),
                cond.len()
            )));
        }
        if x.iter().chain(cond).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite flow input".into()));
        }
        Ok(())
    }

    fn forward_unchecked(&self, x: &mut Vec<f64>, cond: &[f64], caches: Option<&mut Vec<BlockCache>>) -> f64 {
        let mut logdet = 0.0;
        let mut tmp = vec![0.0; self.dim];
        let mut local = BlockCache::default();
        let mut caches = caches;
        for (b, (block, perm)) in self.blocks.iter().zip(&self.perms).enumerate() {
            let cache = match caches.as_deref_mut() {
                Some(cs) => &mut cs[b],
                None => &mut local,
            };
            logdet += block.forward(&self.params, x, cond, cache);
            for (i, &p) in perm.iter().enumerate() {
                tmp[i] = x[p];
            }
            x.copy_from_slice(&tmp);
        }
        logdet
    }

    /// Maps a standardized feature to latent space; returns `(u, logdet)`.
    pub fn forward(&self, x: &[f64], cond: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_input(x, cond)?;
        let mut u = x.to_vec();
        let logdet = self.forward_unchecked(&mut u, cond, None);
        Ok((u, logdet))
    }

    pub fn inverse(&self, u: &[f64], cond: &[f64]) -> Result<Vec<f64>> {
        self.check_input(u, cond)?;
        let mut x = u.to_vec();
        let mut tmp = vec![0.0; self.dim];
        for (block, perm) in self.blocks.iter().zip(&self.perms).rev() {
            for (i, &p) in perm.iter().enumerate() {
                tmp[p] = x[i];
            }
            x.copy_from_slice(&tmp);
            block.inverse(&self.params, &mut x, cond);
        }
        Ok(x)
    }

    fn ll_from(&self, u: &[f64], logdet: f64) -> f64 {
        -0.5 * self.dim as f64 * (2.0 * PI).ln() - 0.5 * u.iter().map(|v| v * v).sum::<f64>() + logdet
    }

    /// Log-likelihood of a standardized feature under the flow.
    pub fn log_likelihood_standardized(&self, x: &[f64], cond: &[f64]) -> Result<f64> {
        let (u, logdet) = self.forward(x, cond)?;
        Ok(self.ll_from(&u, logdet))
    }

    /// Log-likelihood of a raw feature in standardized coordinates (what the
    /// likelihood grids hold).
    pub fn log_likelihood(&self, z: &[f64], cond: &[f64]) -> Result<f64> {
        self.log_likelihood_standardized(&self.standardize(z), cond)
    }

    /// Log-density of a raw feature, including the standardization Jacobian.
    pub fn log_density_raw(&self, z: &[f64], cond: &[f64]) -> Result<f64> {
        Ok(self.log_likelihood(z, cond)? - self.std.iter().map(|s| s.ln()).sum::<f64>())
    }

    /// Per-sample NLL of a standardized feature; adds its parameter gradient into `grad`.
    pub fn nll_with_grad(&self, x: &[f64], cond: &[f64], grad: &mut [f64]) -> f64 {
        let mut caches = vec![BlockCache::default(); self.blocks.len()];
        let mut u = x.to_vec();
        let logdet = self.forward_unchecked(&mut u, cond, Some(&mut caches));
        let nll = -self.ll_from(&u, logdet);

        let mut g = u;
        let mut tmp = vec![0.0; self.dim];
        for ((block, perm), cache) in self.blocks.iter().zip(&self.perms).zip(&caches).rev() {
            for (i, &p) in perm.iter().enumerate() {
                tmp[p] = g[i];
            }
            g.copy_from_slice(&tmp);
            block.backward(&self.params, cache, &mut g, grad);
        }
        nll
    }

    /// Mean NLL over `(standardized feature, cond)` pairs.
    pub fn nll_loss(&self, batch: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Argument("nll_loss needs a non-empty batch".into()));
        }
        let mut total = 0.0;
        for (x, c) in batch {
            total -= self.log_likelihood_standardized(x, c)?;
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean NLL and its exact gradient with respect to [`Self::parameters`].
    pub fn nll_loss_and_grad(&self, batch: &[(Vec<f64>, Vec<f64>)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Argument("nll_loss needs a non-empty batch".into()));
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut total = 0.0;
        for (x, c) in batch {
            self.check_input(x, c)?;
            total += self.nll_with_grad(x, c, &mut grad);
        }
        let n = batch.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((total / n, grad))
    }

    /// Sets the standardization from the per-dimension moments of `set`.
    pub fn fit_standardization(&mut self, set: &PositionSet) -> Result<()> {
        if set.is_empty() {
            return Err(Error::Argument("cannot standardize an empty position set".into()));
        }
        let n = set.len() as f64;
        let mut mean = vec![0.0; self.dim];
        for i in 0..set.len() {
            for (m, v) in mean.iter_mut().zip(set.feature(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; self.dim];
        for i in 0..set.len() {
            for ((s, v), m) in var.iter_mut().zip(set.feature(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        self.set_standardization(mean, std)
    }

    /// Adam maximum-likelihood training on shuffled minibatches of `set`.
    /// Parameters are rounded to f32 precision afterwards and the training
    /// log-likelihood statistics are recorded.
    pub fn train(&mut self, set: &PositionSet, cfg: &TrainConfig, stream: u64) -> Result<TrainingLog> {
        cfg.validate()?;
        if set.dim != self.dim || set.cond_dim != self.cond_dim {
            return Err(Error::Argument("position set does not match decoder dimensions".into()));
        }
        if set.is_empty() {
            return Err(Error::Argument("empty training set".into()));
        }
        let standardized: Vec<f64> = (0..set.len()).flat_map(|i| self.standardize(set.feature(i))).collect();
        if standardized.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite training feature".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);

        let np = self.params.len();
        let (mut m, mut v) = (vec![0.0; np], vec![0.0; np]);
        let mut grad = vec![0.0; np];
        let mut step = 0i32;
        let mut order: Vec<usize> = (0..set.len()).collect();
        let mut log = TrainingLog::default();

        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut epoch_total = 0.0;
            for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let mut loss = 0.0;
                for &i in batch {
                    let x = &standardized[i * self.dim..(i + 1) * self.dim];
                    loss += self.nll_with_grad(x, set.cond(i), &mut grad);
                }
                epoch_total += loss;
                let n = batch.len() as f64;
                loss /= n;
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Divergence { epoch, step: b, loss });
                }
                step += 1;
                let bc1 = 1.0 - cfg.beta1.powi(step);
                let bc2 = 1.0 - cfg.beta2.powi(step);
                for k in 0..np {
                    let g = grad[k] / n;
                    m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
                    v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
                    self.params[k] -= cfg.learning_rate * (m[k] / bc1) / ((v[k] / bc2).sqrt() + cfg.epsilon);
                }
            }
            let epoch_nll = epoch_total / set.len() as f64;
            log::debug!("decoder stream {stream}: epoch {epoch} mean nll {epoch_nll:.5}");
            log.epoch_nll.push(epoch_nll);
        }

        self.round_to_f32();
        let lls: Vec<f64> = (0..set.len())
            .map(|i| self.log_likelihood_standardized(&standardized[i * self.dim..(i + 1) * self.dim], set.cond(i)))
            .collect::<Result<_>>()?;
        let mean = lls.iter().sum::<f64>() / lls.len() as f64;
        let var = lls.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / lls.len() as f64;
        self.ll_mean = mean;
        self.ll_std = var.sqrt();
        Ok(log)
    }

    /// Rounds every weight to the nearest f32, the precision stored on disk.
    pub fn round_to_f32(&mut self) {
        self.params.iter_mut().for_each(|p| *p = *p as f32 as f64);
    }
}
