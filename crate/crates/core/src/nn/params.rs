//! Named parameter collections.

use std::collections::HashMap;

use super::tensor::Tensor;
use super::Scalar;

/// Ordered name -> tensor store; insertion order is the checkpoint
/// payload order, so it must be deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S> {
    names: Vec<String>,
    tensors: Vec<Tensor<S>>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> Default for ModelParams<S> {
    fn default() -> Self {
        ModelParams {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<S: Scalar> ModelParams<S> {
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<S>) {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter {name:?}"
        );
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.tensors.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<S>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.tensors.iter_mut())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn cast<T: Scalar>(&self) -> ModelParams<T> {
        let mut out = ModelParams::default();
        for (name, tensor) in self.iter() {
            out.insert(name, tensor.cast());
        }
        out
    }
}

/// Per-parameter gradients keyed by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients<S> {
    map: HashMap<String, Tensor<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn insert(&mut self, name: String, grad: Tensor<S>) {
        self.map.insert(name, grad);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.map.get(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
