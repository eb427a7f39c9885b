//! Conditional affine coupling block with exact reverse-mode gradients.
//!
//! The block keeps the "passive" half of its input, feeds it together with
//! the conditioning vector through a two-layer tanh perceptron, and applies
//! `y = x * exp(s) + t` to the "active" half. The log-scale is soft-clamped
//! as `s = alpha * (2/pi) * atan(raw / alpha)`.

use std::f64::consts::FRAC_2_PI;

/// Which input indices are passed through unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn alternate(block: usize) -> Self {
        if block % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// Index bookkeeping for one block; the weights live in the decoder's flat
/// parameter vector starting at `offset`, ordered `W1, b1, W2, b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingBlock {
    pub parity: Parity,
    pub passive: Vec<usize>,
    pub active: Vec<usize>,
    pub cond_dim: usize,
    pub hidden: usize,
    pub clamp: f64,
    pub offset: usize,
}

/// Activations kept from the forward pass for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct BlockCache {
    input: Vec<f64>,
    hidden: Vec<f64>,
    raw_scale: Vec<f64>,
    scale: Vec<f64>,
    x_active: Vec<f64>,
}

impl CouplingBlock {
    pub fn new(dim: usize, cond_dim: usize, hidden: usize, clamp: f64, parity: Parity, offset: usize) -> Self {
        let keep = match parity {
            Parity::Even => 0,
            Parity::Odd => 1,
        };
        let passive = (0..dim).filter(|i| i % 2 == keep).collect();
        let active = (0..dim).filter(|i| i % 2 != keep).collect();
        CouplingBlock { parity, passive, active, cond_dim, hidden, clamp, offset }
    }

    fn n_in(&self) -> usize {
        self.passive.len() + self.cond_dim
    }

    fn n_out(&self) -> usize {
        2 * self.active.len()
    }

    pub fn num_params(&self) -> usize {
        self.hidden * self.n_in() + self.hidden + self.n_out() * self.hidden + self.n_out()
    }

    /// `(W1, b1, W2, b2)` offsets relative to the start of the parameter vector.
    fn layout(&self) -> (usize, usize, usize, usize) {
        let w1 = self.offset;
        let b1 = w1 + self.hidden * self.n_in();
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.n_out() * self.hidden;
        (w1, b1, w2, b2)
    }

    #[inline]
    fn soft_clamp(&self, raw: f64) -> f64 {
        self.clamp * FRAC_2_PI * (raw / self.clamp).atan()
    }

    #[inline]
    fn soft_clamp_deriv(&self, raw: f64) -> f64 {
        let r = raw / self.clamp;
        FRAC_2_PI / (1.0 + r * r)
    }

    /// Runs the subnet on the passive half; returns clamped scales and shifts.
    fn subnet(&self, params: &[f64], x: &[f64], cond: &[f64], cache: &mut BlockCache) {
        let (w1, b1, w2, b2) = self.layout();
        let n_in = self.n_in();
        let n_act = self.active.len();
        cache.input.clear();
        cache.input.extend(self.passive.iter().map(|&i| x[i]));
        cache.input.extend_from_slice(cond);

        cache.hidden.clear();
        for j in 0..self.hidden {
            let row = &params[w1 + j * n_in..w1 + (j + 1) * n_in];
            let a: f64 = params[b1 + j] + row.iter().zip(&cache.input).map(|(w, v)| w * v).sum::<f64>();
            cache.hidden.push(a.tanh());
        }
        cache.raw_scale.clear();
        cache.scale.clear();
        cache.x_active.clear();
        // Output rows [0, n_act) are log-scales, [n_act, 2 n_act) shifts; shifts are recomputed on demand.
        for j in 0..n_act {
            let row = &params[w2 + j * self.hidden..w2 + (j + 1) * self.hidden];
            let raw = params[b2 + j] + row.iter().zip(&cache.hidden).map(|(w, h)| w * h).sum::<f64>();
            cache.raw_scale.push(raw);
            cache.scale.push(self.soft_clamp(raw));
        }
    }

    fn shift(&self, params: &[f64], hidden: &[f64], j: usize) -> f64 {
        let (_, _, w2, b2) = self.layout();
        let n_act = self.active.len();
        let r = n_act + j;
        params[b2 + r] + params[w2 + r * self.hidden..w2 + (r + 1) * self.hidden].iter().zip(hidden).map(|(w, h)| w * h).sum::<f64>()
    }

    /// In-place forward transform; returns the block's log-determinant.
    pub fn forward(&self, params: &[f64], x: &mut [f64], cond: &[f64], cache: &mut BlockCache) -> f64 {
        self.subnet(params, x, cond, cache);
        let mut logdet = 0.0;
        for (j, &i) in self.active.iter().enumerate() {
            let s = cache.scale[j];
            let t = self.shift(params, &cache.hidden, j);
            cache.x_active.push(x[i]);
            x[i] = x[i] * s.exp() + t;
            logdet += s;
        }
        logdet
    }

    /// In-place inverse transform.
    pub fn inverse(&self, params: &[f64], y: &mut [f64], cond: &[f64]) {
        let mut cache = BlockCache::default();
        self.subnet(params, y, cond, &mut cache);
        for (j, &i) in self.active.iter().enumerate() {
            let t = self.shift(params, &cache.hidden, j);
            y[i] = (y[i] - t) * (-cache.scale[j]).exp();
        }
    }

    /// Backpropagates `grad` (dL/dy, overwritten with dL/dx) through the
    /// block, where the loss carries `-logdet`. Parameter gradients are added
    /// into `param_grad`.
    pub fn backward(&self, params: &[f64], cache: &BlockCache, grad: &mut [f64], param_grad: &mut [f64]) {
        let (w1, b1, w2, b2) = self.layout();
        let n_in = self.n_in();
        let n_act = self.active.len();
        let n_out = self.n_out();

        let mut g_out = vec![0.0; n_out];
        for (j, &i) in self.active.iter().enumerate() {
            let es = cache.scale[j].exp();
            let gy = grad[i];
            g_out[j] = (gy * cache.x_active[j] * es - 1.0) * self.soft_clamp_deriv(cache.raw_scale[j]);
            g_out[n_act + j] = gy;
            grad[i] = gy * es;
        }

        let mut g_hidden = vec![0.0; self.hidden];
        for (r, &go) in g_out.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            param_grad[b2 + r] += go;
            let row = w2 + r * self.hidden;
            for (k, &h) in cache.hidden.iter().enumerate() {
                param_grad[row + k] += go * h;
                g_hidden[k] += go * params[row + k];
            }
        }

        let mut g_input = vec![0.0; n_in];
        for (k, gh) in g_hidden.iter().enumerate() {
            let h = cache.hidden[k];
            let ga = gh * (1.0 - h * h);
            param_grad[b1 + k] += ga;
            let row = w1 + k * n_in;
            for (m, &v) in cache.input.iter().enumerate() {
                param_grad[row + m] += ga * v;
            }
            for (m, gi) in g_input.iter_mut().take(self.passive.len()).enumerate() {
                *gi += ga * params[row + m];
            }
        }
        for (m, &i) in self.passive.iter().enumerate() {
            grad[i] += g_input[m];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_split() {
        let b = CouplingBlock::new(5, 2, 4, 1.9, Parity::Even, 0);
        assert_eq!(b.passive, vec![0, 2, 4]);
        assert_eq!(b.active, vec![1, 3]);
        let b = CouplingBlock::new(4, 2, 4, 1.9, Parity::Odd, 0);
        assert_eq!(b.passive, vec![1, 3]);
        assert_eq!(b.active, vec![0, 2]);
        assert_eq!(b.num_params(), 4 * 4 + 4 + 4 * 4 + 4);
    }

    #[test]
    fn zero_weights_identity() {
        let b = CouplingBlock::new(4, 3, 8, 1.9, Parity::Even, 0);
        let params = vec![0.0; b.num_params()];
        let mut x = vec![0.3, -1.0, 2.0, 0.5];
        let mut cache = BlockCache::default();
        let ld = b.forward(&params, &mut x, &[1.0, 0.0, -1.0], &mut cache);
        assert_eq!(ld, 0.0);
        assert_eq!(x, vec![0.3, -1.0, 2.0, 0.5]);
    }

    #[test]
    fn soft_clamp_bounded() {
        let b = CouplingBlock::new(2, 0, 2, 1.9, Parity::Even, 0);
        assert!(b.soft_clamp(1e9) < 1.9);
        assert!(b.soft_clamp(-1e9) > -1.9);
        assert_eq!(b.soft_clamp(0.0), 0.0);
    }
}
