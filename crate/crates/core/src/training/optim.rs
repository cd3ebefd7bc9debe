use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::param::ParamStore;
use crate::tensor::{Real, Tensor};

/// `lr0 * (1 - epoch / max_epochs)^p`, clamped at zero past the end.
pub fn poly_lr(epoch: usize, max_epochs: usize, initial_lr: f64, exponent: f64) -> f64 {
    if max_epochs == 0 || epoch >= max_epochs {
        return 0.0;
    }
    initial_lr * libm::pow(1.0 - epoch as f64 / max_epochs as f64, exponent)
}

/// SGD with (optionally Nesterov) momentum; velocity per parameter.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub momentum: f64,
    pub nesterov: bool,
    velocity: Vec<Tensor<T>>,
}

impl<T: Real> Sgd<T> {
    /// Zero state for every parameter of `store`.
    pub fn new(store: &ParamStore<T>, momentum: f64, nesterov: bool) -> Self {
        let velocity = store.iter().map(|p| p.value.map(|_| T::zero())).collect();
        Sgd { momentum, nesterov, velocity }
    }

    pub fn velocity(&self, index: usize) -> Option<&Tensor<T>> {
        self.velocity.get(index)
    }

    /// `v = mu v + g`, then `p -= lr (g + mu v)` (Nesterov) or `p -= lr v`.
    pub fn step(&mut self, store: &mut ParamStore<T>, lr: f64) -> Result<()> {
        let (mu, lr) = (T::of(self.momentum), T::of(lr));
        for p in store.iter_mut() {
            let v = self.velocity.get_mut(p.id.index()).ok_or(Error::UnknownParam(p.id.index()))?;
            if v.len() != p.value.len() {
                return Err(Error::BufferLength { expected: v.len(), actual: p.value.len() });
            }
            let (vd, pd, gd) = (v.data_mut(), p.value.data_mut(), p.grad.data());
            for ((vi, pi), &g) in vd.iter_mut().zip(pd.iter_mut()).zip(gd) {
                *vi = mu * *vi + g;
                let delta = if self.nesterov { g + mu * *vi } else { *vi };
                *pi = *pi - lr * delta;
            }
        }
        Ok(())
    }
}
