use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Stable handle of a trainable tensor, also the key of optimizer state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Parameter<T> {
    pub id: ParamId,
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// Parameters of one model in build order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let id = ParamId(self.params.len());
        let grad = Tensor::zeros_like_shape(value.shape());
        self.params.push(Parameter { id, name: name.into(), value, grad });
        id
    }

    pub fn get(&self, id: ParamId) -> Result<&Parameter<T>> {
        self.params.get(id.0).ok_or(Error::UnknownParam(id.0))
    }

    pub fn get_mut(&mut self, id: ParamId) -> Result<&mut Parameter<T>> {
        self.params.get_mut(id.0).ok_or(Error::UnknownParam(id.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total trainable scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(T::zero());
        }
    }
}
