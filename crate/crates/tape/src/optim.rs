use crate::params::ParamStore;
use crate::real::Real;
use crate::tape::Gradients;

/// Adaptive-moment optimiser with linear learning-rate warmup and optional
/// global-norm gradient clipping.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub warmup_steps: usize,
    pub clip_norm: Option<f64>,
    step: usize,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, warmup_steps: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps,
            clip_norm: None,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn with_clip(mut self, max_norm: f64) -> Self {
        self.clip_norm = Some(max_norm);
        self
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Learning rate applied at the next update.
    pub fn current_lr(&self) -> f64 {
        if self.warmup_steps == 0 {
            self.lr
        } else {
            self.lr * ((self.step + 1) as f64 / self.warmup_steps as f64).min(1.0)
        }
    }

    /// Applies one update to every parameter of `store` that has a gradient.
    pub fn step<T: Real>(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>) {
        if self.m.is_empty() {
            self.m = store.ids().map(|id| vec![0.0; store.get(id).numel()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), store.len(), "optimizer bound to a different store");
        let scale = match self.clip_norm {
            Some(max) => {
                let sq: f64 = store
                    .ids()
                    .filter_map(|id| grads.param(store, id))
                    .flat_map(|g| g.data().iter().map(|v| v.as_f64() * v.as_f64()))
                    .sum();
                let norm = sq.sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let lr = self.current_lr();
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let Some(g) = grads.param(store, id) else { continue };
            let g: Vec<f64> = g.data().iter().map(|v| v.as_f64() * scale).collect();
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let w = store.get_mut(id).data_mut();
            for j in 0..w.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let upd = lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + self.eps);
                w[j] -= T::lit(upd);
            }
        }
    }
}
