use serde::{Deserialize, Serialize};

use super::config::OptimizerConfig;
use crate::error::{Error, Result};

/// Learning rate at `step` of `total`: linear warm-up from `lr / 25` to `lr`,
/// then cosine decay to `lr / 1e4`.
pub fn one_cycle_lr(cfg: &OptimizerConfig, step: u64, total: u64) -> f64 {
    let (lr, start, end) = (cfg.lr, cfg.lr / 25.0, cfg.lr / 1e4);
    let warm = (cfg.warmup_fraction * total as f64).round().max(1.0);
    let s = step as f64;
    if s < warm {
        return start + (lr - start) * s / warm;
    }
    let rest = (total as f64 - warm).max(1.0);
    let t = ((s - warm) / rest).min(1.0);
    end + (lr - end) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Adam moments with decoupled weight decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamW {
    pub fn new(n: usize) -> Self {
        AdamW {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One update of `params` in place; returns the pre-clip gradient norm.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &OptimizerConfig) -> Result<f64> {
        if grad.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer sized {} got {} params and {} grads",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if cfg.grad_clip > 0.0 && norm > cfg.grad_clip {
            cfg.grad_clip / norm
        } else {
            1.0
        };
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i] * scale;
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let update = (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + cfg.eps);
            params[i] -= lr * (update + cfg.weight_decay * params[i]);
        }
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let cfg = OptimizerConfig::default();
        let total = 1000;
        assert!((one_cycle_lr(&cfg, 0, total) - cfg.lr / 25.0).abs() < 1e-15);
        assert!((one_cycle_lr(&cfg, 50, total) - cfg.lr).abs() < 1e-15);
        assert!((one_cycle_lr(&cfg, total, total) - cfg.lr / 1e4).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for s in 50..=total {
            let lr = one_cycle_lr(&cfg, s, total);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let cfg = OptimizerConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(3);
        let mut p = vec![1.0, 1.0, 1.0];
        opt.step(&mut p, &[0.5, -2.0, 0.0], 0.1, &cfg).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] - 1.1).abs() < 1e-6);
        assert_eq!(p[2], 1.0);
    }

    #[test]
    fn decoupled_decay_without_gradient() {
        let cfg = OptimizerConfig {
            weight_decay: 0.5,
            ..Default::default()
        };
        let mut opt = AdamW::new(1);
        let mut p = vec![2.0];
        opt.step(&mut p, &[0.0], 0.1, &cfg).unwrap();
        assert!((p[0] - 1.9).abs() < 1e-12);
    }

    #[test]
    fn minimises_a_quadratic() {
        let cfg = OptimizerConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(2);
        let mut p = vec![3.0, -2.0];
        for _ in 0..2000 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * (x - 1.0)).collect();
            opt.step(&mut p, &g, 0.01, &cfg).unwrap();
        }
        assert!(p.iter().all(|x| (x - 1.0).abs() < 1e-3), "{p:?}");
    }
}
