use serde::{Deserialize, Serialize};

use super::params::{Group, Params};
use super::real::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Learning rate of the transformer blocks and heads.
    pub lr: f64,
    /// Multiplier for embedding tables and modality adapters.
    pub embed_lr_mult: f64,
    pub warmup_steps: usize,
    /// Cosine decay floor as a fraction of the peak rate; 1 keeps it flat.
    pub final_lr_frac: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 8,
            lr: 3e-4,
            embed_lr_mult: 5.0,
            warmup_steps: 100,
            final_lr_frac: 0.1,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip: 1.0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.embed_lr_mult > 0.0 && self.batch_size > 0) {
            return Err(Error::Config("lr, embed_lr_mult and batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Peak-relative rate at `step` (0-based).
    pub fn schedule(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.steps.saturating_sub(self.warmup_steps).max(1);
        let prog = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        let lo = self.final_lr_frac;
        lo + (1.0 - lo) * 0.5 * (1.0 + (std::f64::consts::PI * prog).cos())
    }
}

/// Adaptive moments with decoupled weight decay (matrices only).
#[derive(Debug, Clone)]
pub struct AdamW {
    pub cfg: OptimConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamW {
    pub fn new<R: Real>(cfg: OptimConfig, params: &Params<R>) -> Self {
        let m = params.tensors.iter().map(|t| vec![0.0; t.len()]).collect::<Vec<_>>();
        Self { cfg, v: m.clone(), m, t: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update and returns the pre-clip gradient norm.
    pub fn step<R: Real>(&mut self, params: &mut Params<R>, grads: &Params<R>) -> f64 {
        let norm = grads.sq_norm().sqrt();
        let clip = if self.cfg.grad_clip > 0.0 && norm > self.cfg.grad_clip { self.cfg.grad_clip / norm } else { 1.0 };
        let rate = self.cfg.schedule(self.t as usize);
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for ix in 0..params.tensors.len() {
            let group = params.group(ix);
            let lr = rate * self.cfg.lr * if group == Group::Embedding { self.cfg.embed_lr_mult } else { 1.0 };
            let wd = if group == Group::Matrix { self.cfg.weight_decay } else { 0.0 };
            let (m, v) = (&mut self.m[ix], &mut self.v[ix]);
            let g = &grads.tensors[ix].data;
            for (k, x) in params.tensors[ix].data.iter_mut().enumerate() {
                let gk = g[k].f64() * clip;
                m[k] = b1 * m[k] + (1.0 - b1) * gk;
                v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
                let upd = (m[k] / bc1) / ((v[k] / bc2).sqrt() + self.cfg.eps);
                let xv = x.f64();
                *x = R::of(xv - lr * (upd + wd * xv));
            }
        }
        norm
    }
}
