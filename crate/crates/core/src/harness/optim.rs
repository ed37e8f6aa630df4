use ndarray::Array2;

use crate::fusion::Checkpoint;
use crate::nn::{Gradients, ParamStore};

use super::{HarnessError, Result};

/// Bias-corrected Adam. Weights and both moment buffers are rounded to `f32`
/// after every step, so a checkpoint captures the optimizer state exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(params: &ParamStore, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || params.ids().map(|id| Array2::zeros(params.value(id).raw_dim())).collect();
        Self { lr, beta1, beta2, eps, step: 0, m: zeros(), v: zeros() }
    }

    pub fn apply(&mut self, params: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (id, g) in grads.iter() {
            let i = id.index();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let w = params.value_mut(id);
            ndarray::Zip::from(w).and(m).and(v).and(g).for_each(|w, m, v, &g| {
                *m = (b1 * *m + (1.0 - b1) * g) as f32 as f64;
                *v = (b2 * *v + (1.0 - b2) * g * g) as f32 as f64;
                let update = lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                *w = (*w - update) as f32 as f64;
            });
        }
    }

    /// Moment buffers as named arrays for a checkpoint.
    pub fn state_arrays(&self, params: &ParamStore) -> Vec<(String, Array2<f64>)> {
        let mut out = Vec::with_capacity(2 * self.m.len());
        for id in params.ids() {
            out.push((format!("adam.m.{}", params.name(id)), self.m[id.index()].clone()));
            out.push((format!("adam.v.{}", params.name(id)), self.v[id.index()].clone()));
        }
        out
    }

    /// Restores the moments saved by [`Adam::state_arrays`].
    pub fn restore(&mut self, params: &ParamStore, ck: &Checkpoint, step: u64) -> Result<()> {
        for id in params.ids() {
            let name = params.name(id);
            for (prefix, slot) in [("adam.m", &mut self.m[id.index()]), ("adam.v", &mut self.v[id.index()])] {
                let key = format!("{prefix}.{name}");
                let a = ck.array(&key).ok_or_else(|| HarnessError::Resume(format!("checkpoint lacks {key}")))?;
                if a.dim() != slot.dim() {
                    return Err(HarnessError::Resume(format!("{key} has the wrong shape")));
                }
                slot.assign(a);
            }
        }
        self.step = step;
        Ok(())
    }
}
