use serde::{Deserialize, Serialize};

use crate::kernel::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam with decoupled weight decay: each step first shrinks parameters by
/// `lr · weight_decay`, then applies the bias-corrected Adam update.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: ModelParams,
    v: ModelParams,
    step: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ModelParams) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let grads = grad.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, (_, g)), m), v) in params.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= c.lr * c.weight_decay * p[i];
                p[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        params.generation += 1;
    }
}

/// Rescales `grad` so its global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grad: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = grad.l2_norm();
    if norm > max_norm {
        let scale = max_norm / norm;
        for t in grad.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= scale);
        }
    }
    norm
}
