use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, TensorError};
use crate::{Scalar, Tensor};

static NEXT_STORE: AtomicU64 = AtomicU64::new(1);

/// Handle to a parameter inside a [`ParamStore`]. Handles remember which
/// store issued them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId {
    pub(crate) store: u64,
    pub(crate) index: usize,
}

impl ParamId {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    /// Accumulated gradient, same shape as `value`.
    pub grad: Tensor<T>,
}

/// Named trainable tensors plus their gradient buffers.
#[derive(Clone, Debug)]
pub struct ParamStore<T> {
    uid: u64,
    params: Vec<Param<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            uid: NEXT_STORE.fetch_add(1, Ordering::Relaxed),
            params: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(TensorError::Usage(format!("duplicate parameter name {name:?}")));
        }
        let grad = Tensor::zeros(value.shape());
        self.params.push(Param { name, value, grad });
        Ok(self.id_at(self.params.len() - 1))
    }

    fn id_at(&self, index: usize) -> ParamId {
        ParamId { store: self.uid, index }
    }

    /// Whether `id` was issued by this store.
    pub fn owns(&self, id: ParamId) -> bool {
        id.store == self.uid
    }

    fn slot(&self, id: ParamId) -> usize {
        assert!(self.owns(id), "parameter handle from a different store");
        id.index
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[self.slot(id)]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        let i = self.slot(id);
        &mut self.params[i]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.get(id).value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.get(id).grad
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(|i| self.id_at(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(|i| self.id_at(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    /// Order-sensitive fingerprint of every parameter value, bit-exact.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the f64 bit patterns.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in &self.params {
            for v in p.value.data() {
                for byte in v.to_f64_lossy().to_bits().to_le_bytes() {
                    h ^= byte as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}
