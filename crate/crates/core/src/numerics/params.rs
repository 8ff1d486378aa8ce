use std::collections::HashMap;

use super::Tensor;
use crate::error::{Error, Result};

/// Index of a slot inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named learnable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSlot {
    name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl ParamSlot {
    pub fn name(&self) -> &str {
        &self.name
    }
}

/// Ordered collection of uniquely named parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    slots: Vec<ParamSlot>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::arg(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.slots.len());
        let grad = Tensor::zeros(value.dims());
        self.by_name.insert(name.clone(), id);
        self.slots.push(ParamSlot { name, value, grad });
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &ParamSlot {
        &self.slots[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamSlot {
        &mut self.slots[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&ParamSlot> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn slots(&self) -> &[ParamSlot] {
        &self.slots
    }

    pub fn slots_mut(&mut self) -> &mut [ParamSlot] {
        &mut self.slots
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.slots.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.slots.iter().map(|s| s.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for slot in &mut self.slots {
            slot.grad.data_mut().fill(0.0);
        }
    }

    /// Euclidean norm of all gradients taken together.
    pub fn grad_norm(&self) -> f64 {
        self.slots
            .iter()
            .flat_map(|s| s.grad.data())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, grad: &Tensor) {
        self.slots[id.0].grad.add_assign(grad);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::zeros(&[2])).unwrap();
        assert!(store.insert("w", Tensor::zeros(&[3])).is_err());
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn grads_start_zeroed_with_matching_dims() {
        let mut store = ParamStore::new();
        let id = store.insert("w", Tensor::full(&[2, 3], 1.5)).unwrap();
        let slot = store.get(id);
        assert_eq!(slot.grad.dims(), slot.value.dims());
        assert!(slot.grad.data().iter().all(|&g| g == 0.0));
    }
}
