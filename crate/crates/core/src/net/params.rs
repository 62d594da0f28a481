use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};


use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Named network tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a new tensor. Names are unique; re-registering is an error.
    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.tensors.contains_key(name) {
            return Err(Error::InvalidConfig(format!("duplicate parameter {name}")));
        }
        self.tensors.insert(name.to_string(), tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown parameter {name}")))
    }

    /// Overwrite the values of an existing tensor; the shape must not change.
    pub fn set(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        let slot = self
            .tensors
            .get_mut(name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown parameter {name}")))?;
        slot.same_shape(&tensor)?;
        *slot = tensor;
        Ok(())
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown parameter {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// A store with the same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    /// Copy of every tensor whose name starts with `prefix`, with the prefix removed.
    pub fn strip_prefix(&self, prefix: &str) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.clone())))
                .collect(),
        }
    }

    /// Merge `other` in under `prefix`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &ParameterStore) -> Result<()> {
        for (k, v) in other.iter() {
            self.insert(&format!("{prefix}{k}"), v.clone())?;
        }
        Ok(())
    }

    pub fn into_inner(self) -> BTreeMap<String, Tensor> {
        self.tensors
    }
}

impl FromIterator<(String, Tensor)> for ParameterStore {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        Self { tensors: iter.into_iter().collect() }
    }
}

/// Registers freshly initialized parameters under a common prefix.
pub struct Initializer<'a> {
    pub store: &'a mut ParameterStore,
    pub rng: &'a mut SeededRng,
}

impl Initializer<'_> {
    /// Weight drawn from N(0, 1/fan_in).
    pub fn weight(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<()> {
        let mut t = Tensor::randn(shape, self.rng);
        let s = 1.0 / libm::sqrt(fan_in.max(1) as f64);
        t.data_mut().iter_mut().for_each(|v| *v *= s);
        self.store.insert(name, t)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<()> {
        self.store.insert(name, Tensor::full(shape, value))
    }
}
