//! AdamW with a per-parameter decay mask, and global-norm clipping.

use serde::{Deserialize, Serialize};

use crate::encoder::Layout;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Moment estimates for one parameter vector.
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    decay: Vec<bool>,
    steps: u64,
}

impl AdamW {
    /// Weight decay applies to the tensors `layout` marks as decayed
    /// (matrices and embeddings), never to biases or norm gains.
    pub fn new(cfg: AdamWConfig, layout: &Layout) -> Self {
        let mut decay = vec![false; layout.total()];
        for t in layout.tensors() {
            decay[t.range()].fill(t.decay);
        }
        Self {
            cfg,
            first: vec![0.0; layout.total()],
            second: vec![0.0; layout.total()],
            decay,
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Decoupled decay `p -= lr * wd * p`, then the bias-corrected Adam step.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), grad.len());
        self.steps += 1;
        let AdamWConfig { beta1, beta2, eps, weight_decay } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.steps as i32);
        let bc2 = 1.0 - beta2.powi(self.steps as i32);
        for i in 0..params.len() {
            if self.decay[i] {
                params[i] -= lr * weight_decay * params[i];
            }
            let g = grad[i];
            self.first[i] = beta1 * self.first[i] + (1.0 - beta1) * g;
            self.second[i] = beta2 * self.second[i] + (1.0 - beta2) * g * g;
            let m = self.first[i] / bc1;
            let v = self.second[i] / bc2;
            params[i] -= lr * m / (v.sqrt() + eps);
        }
    }
}

pub fn global_norm(grad: &[f64]) -> f64 {
    grad.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales `grad` so its L2 norm is at most `max_norm`. Returns the norm
/// before clipping.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = global_norm(grad);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::TransformerConfig;

    #[test]
    fn clipping_bounds_the_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((global_norm(&g) - 1.0).abs() < 1e-15);
        let mut small = vec![0.3, 0.4];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.3, 0.4]);
    }

    #[test]
    fn first_step_moves_each_parameter_by_lr() {
        let mut cfg = TransformerConfig::compact(8, 4);
        cfg.hidden = 4;
        cfg.heads = 1;
        cfg.ffn = 4;
        cfg.layers = 1;
        let layout = Layout::new(&cfg);
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.0, ..Default::default() }, &layout);
        let mut p = vec![1.0; layout.total()];
        let g: Vec<f64> = (0..layout.total()).map(|i| if i % 2 == 0 { 2.0 } else { -0.5 }).collect();
        opt.step(&mut p, &g, 0.1);
        for (i, v) in p.iter().enumerate() {
            let expected = if i % 2 == 0 { 0.9 } else { 1.1 };
            assert!((v - expected).abs() < 1e-6, "{i}: {v}");
        }
    }

    #[test]
    fn decay_skips_biases_and_gains() {
        let mut cfg = TransformerConfig::compact(8, 4);
        cfg.hidden = 4;
        cfg.heads = 1;
        cfg.ffn = 4;
        cfg.layers = 1;
        let layout = Layout::new(&cfg);
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.5, ..Default::default() }, &layout);
        let mut p = vec![1.0; layout.total()];
        opt.step(&mut p, &vec![0.0; layout.total()], 0.1);
        let bias = layout.tensor("head.bias").unwrap().offset;
        let word = layout.tensor("embeddings.word").unwrap().offset;
        assert_eq!(p[bias], 1.0);
        assert!((p[word] - 0.95).abs() < 1e-12);
    }
}
