//! Adam with bias correction and reduce-on-plateau learning-rate
//! scheduling.

use super::{ParamId, ParamStore};

/// Adam optimizer state: per-parameter first/second moment arrays and a
/// shared step counter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update over the given (parameter, gradient)
    /// pairs.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Vec<f64>)]) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (id, g) in grads {
            if self.moments.len() <= id.0 {
                self.moments.resize(id.0 + 1, None);
            }
            let n = g.len();
            let (m, v) = self.moments[id.0]
                .get_or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            debug_assert_eq!(m.len(), n, "gradient shape changed");
            let p = &mut store.get_mut(*id).data;
            for i in 0..n {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Halve the learning rate whenever the validation loss has not improved
/// for `patience` consecutive updates.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub patience: usize,
    pub factor: f64,
    lr: f64,
    best: f64,
    stale: usize,
}

impl PlateauScheduler {
    pub fn new(initial_lr: f64, patience: usize) -> Self {
        Self {
            patience,
            factor: 0.5,
            lr: initial_lr,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Record one validation loss; returns the (possibly halved) learning
    /// rate to use next.
    pub fn update(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best {
            self.best = val_loss;
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                self.lr *= self.factor;
                self.stale = 0;
            }
        }
        self.lr
    }
}
