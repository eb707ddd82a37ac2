use crate::error::{invalid, Result};
use crate::numcore::{ParamGrads, ParamStore};

/// Adam with decoupled weight decay and bias-corrected moments.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamW {
    pub fn new(params: &ParamStore, lr: f64, betas: (f64, f64), eps: f64, weight_decay: f64) -> Result<Self> {
        if !(lr > 0.0) {
            return Err(invalid!("learning rate must be > 0, got {lr}"));
        }
        if !(0.0..1.0).contains(&betas.0) || !(0.0..1.0).contains(&betas.1) {
            return Err(invalid!("betas must lie in [0, 1), got {betas:?}"));
        }
        if weight_decay < 0.0 || eps <= 0.0 {
            return Err(invalid!("weight decay must be >= 0 and eps > 0"));
        }
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Ok(AdamW {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps,
            weight_decay,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        })
    }

    /// PyTorch-style defaults: betas (0.9, 0.999), eps 1e-8, decay 0.01.
    pub fn with_defaults(params: &ParamStore, lr: f64) -> Result<Self> {
        Self::new(params, lr, (0.9, 0.999), 1e-8, 0.01)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// `p <- p (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamGrads) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - self.lr * self.weight_decay;
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let i = id.index();
            let g = grads.get(id);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let p = params.get_mut(id).data_mut();
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                p[k] = p[k] * decay - self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}
