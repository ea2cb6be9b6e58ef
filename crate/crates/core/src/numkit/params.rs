use std::collections::HashMap;

use super::{Matrix, Rng};
use crate::{Error, Result};

/// Handle to a slot in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SlotId(pub(crate) usize);

#[derive(Debug, Clone)]
struct Slot {
    name: String,
    value: Matrix,
    grad: Matrix,
}

/// Named parameters with same-shaped gradient accumulators.
///
/// Slots keep insertion order, which fixes the serialization order of
/// checkpoints and the traversal order of the gradient checker.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    slots: Vec<Slot>,
    index: HashMap<String, usize>,
}

/// Glorot/Xavier uniform limit `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> Result<SlotId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::config(name, "duplicate parameter slot"));
        }
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.index.insert(name.clone(), self.slots.len());
        self.slots.push(Slot { name, value, grad });
        Ok(SlotId(self.slots.len() - 1))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> Result<SlotId> {
        self.add(name, Matrix::zeros(rows, cols))
    }

    /// Weight matrix of shape `fan_out × fan_in` drawn from U(−r, r) with the
    /// Glorot limit.
    pub fn add_glorot(
        &mut self,
        name: impl Into<String>,
        fan_out: usize,
        fan_in: usize,
        rng: &mut Rng,
    ) -> Result<SlotId> {
        let r = glorot_limit(fan_in, fan_out);
        let data = (0..fan_out * fan_in).map(|_| rng.uniform_range(-r, r)).collect();
        self.add(name, Matrix::from_vec(fan_out, fan_in, data)?)
    }

    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        limit: f64,
        rng: &mut Rng,
    ) -> Result<SlotId> {
        let data = (0..rows * cols).map(|_| rng.uniform_range(-limit, limit)).collect();
        self.add(name, Matrix::from_vec(rows, cols, data)?)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<SlotId> {
        self.index.get(name).copied().map(SlotId)
    }

    pub fn name(&self, id: SlotId) -> &str {
        &self.slots[id.0].name
    }

    pub fn ids(&self) -> impl Iterator<Item = SlotId> {
        (0..self.slots.len()).map(SlotId)
    }

    pub fn value(&self, id: SlotId) -> &Matrix {
        &self.slots[id.0].value
    }

    pub fn value_mut(&mut self, id: SlotId) -> &mut Matrix {
        &mut self.slots[id.0].value
    }

    pub fn grad(&self, id: SlotId) -> &Matrix {
        &self.slots[id.0].grad
    }

    pub fn grad_mut(&mut self, id: SlotId) -> &mut Matrix {
        &mut self.slots[id.0].grad
    }

    pub fn zero_grads(&mut self) {
        for s in &mut self.slots {
            s.grad.fill(0.0);
        }
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for s in &mut self.slots {
            s.grad.scale(factor);
        }
    }

    pub fn num_params(&self) -> usize {
        self.slots.iter().map(|s| s.value.len()).sum()
    }

    /// Copies of every parameter value, in slot order.
    pub fn snapshot(&self) -> Vec<Matrix> {
        self.slots.iter().map(|s| s.value.clone()).collect()
    }

    pub fn restore(&mut self, values: &[Matrix]) -> Result<()> {
        if values.len() != self.slots.len() {
            return Err(Error::Dimension {
                op: "ParamStore::restore",
                left: (self.slots.len(), 0),
                right: (values.len(), 0),
            });
        }
        for (s, v) in self.slots.iter_mut().zip(values) {
            if s.value.shape() != v.shape() {
                return Err(Error::Dimension {
                    op: "ParamStore::restore",
                    left: s.value.shape(),
                    right: v.shape(),
                });
            }
            s.value = v.clone();
        }
        Ok(())
    }

    /// `(name, value)` pairs in slot order.
    pub fn named_values(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.slots.iter().map(|s| (s.name.as_str(), &s.value))
    }

    /// Replaces the value of an existing slot, keeping its shape.
    pub fn set_value(&mut self, id: SlotId, value: Matrix) -> Result<()> {
        let slot = &mut self.slots[id.0];
        if slot.value.shape() != value.shape() {
            return Err(Error::Dimension {
                op: "ParamStore::set_value",
                left: slot.value.shape(),
                right: value.shape(),
            });
        }
        slot.value = value;
        Ok(())
    }

    pub(crate) fn slots_mut(&mut self) -> impl Iterator<Item = (&str, &mut Matrix, &mut Matrix)> {
        self.slots
            .iter_mut()
            .map(|s| (s.name.as_str(), &mut s.value, &mut s.grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParamStore::new();
        p.add_zeros("w", 2, 2).unwrap();
        assert!(p.add_zeros("w", 1, 1).is_err());
    }

    #[test]
    fn glorot_init_within_limit() {
        let mut p = ParamStore::new();
        let mut rng = Rng::new(0);
        let id = p.add_glorot("w", 10, 20, &mut rng).unwrap();
        let r = glorot_limit(20, 10);
        assert!(p.value(id).as_slice().iter().all(|v| v.abs() <= r));
        assert_eq!(p.grad(id).shape(), (10, 20));
    }

    #[test]
    fn snapshot_restore() {
        let mut p = ParamStore::new();
        let id = p.add("w", Matrix::filled(1, 2, 1.0)).unwrap();
        let snap = p.snapshot();
        p.value_mut(id).fill(5.0);
        p.restore(&snap).unwrap();
        assert_eq!(p.value(id).as_slice(), &[1.0, 1.0]);
    }
}
