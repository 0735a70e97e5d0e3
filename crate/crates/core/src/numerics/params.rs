use std::collections::btree_map::{self, BTreeMap};

use super::Tensor;
use crate::error::{Error, Result};

/// Named collection of trainable tensors.
///
/// Iteration is lexicographic by name, which fixes the order of every
/// reduction, serialization and optimizer sweep over the parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::DuplicateParam(name));
        }
        self.tensors.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    /// Mutable access to a tensor's values; the shape stays fixed.
    pub fn values_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        self.tensors
            .get_mut(name)
            .map(Tensor::data_mut)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    /// Replace a tensor with one of identical shape.
    pub fn replace(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .tensors
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        if slot.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "ParamStore::replace",
                lhs: slot.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        *slot = value;
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> btree_map::Iter<'_, String, Tensor> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut [f64])> {
        self.tensors.iter_mut().map(|(k, v)| (k, v.data_mut()))
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// A store with the same names and shapes, all zeros.
    pub fn zeros_like(&self) -> ParamStore {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    /// `self += scale * other`, matching names and shapes.
    pub fn add_scaled(&mut self, other: &ParamStore, scale: f64) -> Result<()> {
        for (name, t) in &mut self.tensors {
            let o = other.get(name)?;
            if o.shape() != t.shape() {
                return Err(Error::ShapeMismatch {
                    op: "ParamStore::add_scaled",
                    lhs: t.shape().to_vec(),
                    rhs: o.shape().to_vec(),
                });
            }
            for (a, b) in t.data_mut().iter_mut().zip(o.data()) {
                *a += scale * b;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors.values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors
            .values()
            .flat_map(|t| t.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

impl<'a> IntoIterator for &'a ParamStore {
    type Item = (&'a String, &'a Tensor);
    type IntoIter = btree_map::Iter<'a, String, Tensor>;

    fn into_iter(self) -> Self::IntoIter {
        self.tensors.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_sorted() {
        let mut s = ParamStore::new();
        s.insert("b", Tensor::zeros(&[1])).unwrap();
        s.insert("a", Tensor::zeros(&[2])).unwrap();
        assert!(matches!(
            s.insert("a", Tensor::zeros(&[2])),
            Err(Error::DuplicateParam(_))
        ));
        assert_eq!(s.names().collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(s.numel(), 3);
    }

    #[test]
    fn replace_keeps_shape() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::zeros(&[2, 2])).unwrap();
        assert!(s.replace("w", Tensor::zeros(&[4])).is_err());
        s.replace("w", Tensor::full(&[2, 2], 1.0)).unwrap();
        assert_eq!(s.get("w").unwrap().data(), &[1.0; 4]);
    }
}
