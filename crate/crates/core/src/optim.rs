use serde::{Deserialize, Serialize};

use crate::nn::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the joint gradient to at most this L2 norm before stepping.
    pub clip_norm: Option<f64>,
    /// Decoupled weight decay: each step shrinks parameters by `lr * weight_decay`.
    #[serde(default)]
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            clip_norm: None,
            weight_decay: 0.0,
        }
    }
}

/// Adam with bias correction over a fixed subset of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    ids: Vec<ParamId>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, store: &ParamStore, ids: Vec<ParamId>) -> Self {
        let m = ids.iter().map(|&id| vec![0.0; store.get(id).data.len()]).collect();
        let v = ids.iter().map(|&id| vec![0.0; store.get(id).data.len()]).collect();
        Self { cfg, ids, m, v, t: 0 }
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    /// Applies one update from the accumulated gradients and clears them.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.t += 1;
        let scale = match self.cfg.clip_norm {
            Some(c) => {
                let n = store.grad_norm(&self.ids);
                if n > c {
                    c / n
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let AdamConfig { lr, beta1, beta2, eps, weight_decay, .. } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (k, &id) in self.ids.iter().enumerate() {
            let p = store.get_mut(id);
            for i in 0..p.data.len() {
                let g = p.grad[i] * scale;
                self.m[k][i] = beta1 * self.m[k][i] + (1.0 - beta1) * g;
                self.v[k][i] = beta2 * self.v[k][i] + (1.0 - beta2) * g * g;
                let mhat = self.m[k][i] / bc1;
                let vhat = self.v[k][i] / bc2;
                p.data[i] -= lr * (mhat / (vhat.sqrt() + eps) + weight_decay * p.data[i]);
                p.grad[i] = 0.0;
            }
        }
    }
}
