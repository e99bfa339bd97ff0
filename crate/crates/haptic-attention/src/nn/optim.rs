use super::params::ParamStore;
use crate::{Error, Result};

/// SGD with Nesterov momentum.
///
/// Per parameter: `v <- m v + g`, then `p <- p - lr (g + m v)`.
#[derive(Debug, Clone)]
pub struct NesterovSgd {
    momentum: f64,
    velocity: ParamStore,
}

impl NesterovSgd {
    pub fn new(template: &ParamStore, momentum: f64) -> Self {
        Self {
            momentum,
            velocity: template.like(),
        }
    }

    /// Applies one update. Rejects non-finite gradients, naming the block.
    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamStore, lr: f64) -> Result<()> {
        assert_eq!(params.len(), grads.len(), "optimizer size mismatch");
        if let Some(idx) = grads.values().iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                block: grads.layout().block_name_at(idx).to_owned(),
            });
        }
        let m = self.momentum;
        let v = self.velocity.values_mut();
        let p = params.values_mut();
        let g = grads.values();
        for i in 0..g.len() {
            v[i] = m * v[i] + g[i];
            p[i] -= lr * (g[i] + m * v[i]);
        }
        Ok(())
    }
}

/// Exponentially decayed learning rate with a floor:
/// `lr(t) = max(floor, alpha0 * decay^(t / period))`.
#[derive(Debug, Clone, Copy)]
pub struct LrSchedule {
    pub alpha0: f64,
    pub decay: f64,
    pub period: f64,
    pub floor: f64,
}

impl LrSchedule {
    pub fn at(&self, step: u64) -> f64 {
        (self.alpha0 * self.decay.powf(step as f64 / self.period)).max(self.floor)
    }
}
