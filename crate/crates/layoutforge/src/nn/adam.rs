//! Adaptive moment estimation with global-norm gradient clipping.

use crate::mat::Mat;
use crate::nn::params::ParamSet;

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, grad_clip: 1.0 }
    }
}

pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, param_sizes: &[usize]) -> Self {
        Adam {
            cfg,
            m: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    /// Apply one update in place. `grads` must be aligned with the sizes
    /// given at construction.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Mat]) {
        assert_eq!(params.len(), grads.len());
        self.step += 1;

        let mut norm_sq = 0.0;
        for g in grads {
            for &x in &g.data {
                norm_sq += x * x;
            }
        }
        let norm = norm_sq.sqrt();
        let scale = if self.cfg.grad_clip > 0.0 && norm > self.cfg.grad_clip {
            self.cfg.grad_clip / norm
        } else {
            1.0
        };

        let bc1 = 1.0 - self.cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.cfg.beta2.powi(self.step as i32);
        for pi in 0..grads.len() {
            let p = params.mat_mut(pi);
            let g = &grads[pi];
            let m = &mut self.m[pi];
            let v = &mut self.v[pi];
            for i in 0..p.data.len() {
                let gi = g.data[i] * scale;
                m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * gi;
                v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.data[i] -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
    }

    /// Clear moments of one parameter, used after a codebook entry reseed.
    pub fn reset_param(&mut self, id: usize) {
        self.m[id].fill(0.0);
        self.v[id].fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut params = ParamSet::new();
        params.insert("x", Mat::from_vec(1, 2, vec![5.0, -3.0]));
        let mut opt = Adam::new(
            AdamConfig { lr: 0.05, grad_clip: 0.0, ..AdamConfig::default() },
            &params.sizes(),
        );
        for _ in 0..500 {
            let x = params.get("x");
            let grads = vec![Mat::from_vec(1, 2, vec![2.0 * x.data[0], 2.0 * x.data[1]])];
            opt.step(&mut params, &grads);
        }
        assert!(params.get("x").data.iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn clipping_bounds_the_update_direction() {
        let mut params = ParamSet::new();
        params.insert("x", Mat::from_vec(1, 1, vec![0.0]));
        let mut opt =
            Adam::new(AdamConfig { lr: 0.1, grad_clip: 1.0, ..Default::default() }, &params.sizes());
        let grads = vec![Mat::from_vec(1, 1, vec![1e9])];
        opt.step(&mut params, &grads);
        let x = params.get("x").data[0];
        assert!(x > -0.2 && x < 0.0);
    }
}
