//! Adam over named parameter lists.

use candle_core::backprop::GradStore;
use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::nn::{zeros, ParamList};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug)]
struct Slot {
    name: String,
    m: Tensor,
    v: Tensor,
}

/// Adam with bias correction. Parameters without a gradient in the store
/// contribute a zero gradient, so their moments still decay.
#[derive(Debug)]
pub struct Adam {
    pub hyper: AdamHyper,
    pub t: u64,
    slots: Vec<Slot>,
}

impl Adam {
    pub fn new(params: &ParamList, hyper: AdamHyper) -> Result<Self> {
        let slots = params
            .0
            .iter()
            .map(|(name, var)| {
                Ok(Slot {
                    name: name.clone(),
                    m: zeros(var.dims())?,
                    v: zeros(var.dims())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { hyper, t: 0, slots })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// One update over `params`, which must be the same list (names, order,
    /// shapes) the optimizer was built with.
    pub fn step(&mut self, params: &ParamList, grads: &GradStore, lr: f64) -> Result<()> {
        if params.0.len() != self.slots.len() {
            return Err(Error::Invariant(format!(
                "optimizer tracks {} parameters, step got {}",
                self.slots.len(),
                params.0.len()
            )));
        }
        self.t += 1;
        let h = self.hyper;
        let bc1 = 1.0 - h.beta1.powi(self.t as i32);
        let bc2 = 1.0 - h.beta2.powi(self.t as i32);
        for (slot, (name, var)) in self.slots.iter_mut().zip(&params.0) {
            if &slot.name != name {
                return Err(Error::Invariant(format!(
                    "optimizer slot {} does not match parameter {name}",
                    slot.name
                )));
            }
            let g = match grads.get(var.as_tensor()) {
                Some(g) => g.clone(),
                None => zeros(var.dims())?,
            };
            slot.m = ((&slot.m * h.beta1)? + (&g * (1.0 - h.beta1))?)?;
            slot.v = ((&slot.v * h.beta2)? + (g.sqr()? * (1.0 - h.beta2))?)?;
            let m_hat = (&slot.m / bc1)?;
            let v_hat = (&slot.v / bc2)?;
            let update = (m_hat * lr)?.div(&(v_hat.sqrt()? + h.eps)?)?;
            var.set(&var.as_tensor().sub(&update)?)?;
        }
        Ok(())
    }

    /// Moment tensors for checkpointing, keyed by parameter name.
    pub fn moments(&self) -> impl Iterator<Item = (&str, &Tensor, &Tensor)> {
        self.slots.iter().map(|s| (s.name.as_str(), &s.m, &s.v))
    }

    /// Restores moments saved by `moments`; every tracked parameter must be
    /// present with matching shape.
    pub fn restore_moments(
        &mut self,
        t: u64,
        mut lookup: impl FnMut(&str) -> Result<(Tensor, Tensor)>,
    ) -> Result<()> {
        for slot in &mut self.slots {
            let (m, v) = lookup(&slot.name)?;
            if m.dims() != slot.m.dims() || v.dims() != slot.v.dims() {
                return Err(Error::Checkpoint(format!(
                    "moment shape mismatch for {}",
                    slot.name
                )));
            }
            slot.m = m;
            slot.v = v;
        }
        self.t = t;
        Ok(())
    }
}
