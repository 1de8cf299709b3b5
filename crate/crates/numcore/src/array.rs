use indexmap::IndexMap;

use crate::graph::Gradients;
use crate::rng::Rng;
use crate::{NumError, Result};

/// Dense row-major array with an optional gradient slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Array {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(NumError::shape("Array::new", format!("bad shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(NumError::shape(
                "Array::new",
                format!("shape {shape:?} needs {len} values, got {}", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NumError::NonFinite { op: "Array::new" });
        }
        Ok(Array {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Array {
            shape: shape.to_vec(),
            data: vec![0.0; len],
            grad: None,
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        Array::new(vec![data.len()], data)
    }

    /// Gaussian initialisation with the given standard deviation.
    pub fn randn(shape: &[usize], std: f64, rng: &mut Rng) -> Self {
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.normal() * std).collect();
        Array {
            shape: shape.to_vec(),
            data,
            grad: None,
        }
    }

    /// Uniform initialisation on `[-limit, limit)`.
    pub fn uniform(shape: &[usize], limit: f64, rng: &mut Rng) -> Self {
        let len = shape.iter().product();
        let data = (0..len).map(|_| (2.0 * rng.uniform() - 1.0) * limit).collect();
        Array {
            shape: shape.to_vec(),
            data,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> &mut Vec<f64> {
        let len = self.data.len();
        self.grad.get_or_insert_with(|| vec![0.0; len])
    }

    pub fn zero_grad(&mut self) {
        let len = self.data.len();
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|v| *v = 0.0),
            None => self.grad = Some(vec![0.0; len]),
        }
    }

    /// Row `i` of a rank-2 array.
    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.shape[self.shape.len() - 1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Named trainable arrays in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, Array>,
    rng_seed: u64,
}

impl ParamStore {
    pub fn new(rng_seed: u64) -> Self {
        ParamStore {
            entries: IndexMap::new(),
            rng_seed,
        }
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn insert(&mut self, name: impl Into<String>, array: Array) -> Result<usize> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(NumError::DuplicateParam(name));
        }
        let (idx, _) = self.entries.insert_full(name, array);
        Ok(idx)
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.entries
            .get_index_of(name)
            .ok_or_else(|| NumError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Array> {
        self.entries
            .get(name)
            .ok_or_else(|| NumError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Array> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| NumError::UnknownParam(name.to_string()))
    }

    pub fn by_index(&self, idx: usize) -> (&str, &Array) {
        let (k, v) = self.entries.get_index(idx).expect("param index in range");
        (k.as_str(), v)
    }

    pub fn by_index_mut(&mut self, idx: usize) -> &mut Array {
        self.entries.get_index_mut(idx).expect("param index in range").1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Array)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(Array::len).sum()
    }

    pub fn zero_grads(&mut self) {
        for a in self.entries.values_mut() {
            a.zero_grad();
        }
    }

    /// Adds `grads` into the grad slots, in parameter order.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (idx, g) in grads.iter() {
            let slot = self.by_index_mut(idx).grad_mut();
            for (s, v) in slot.iter_mut().zip(g) {
                *s += v;
            }
        }
    }

    /// True when every grad slot is finite.
    pub fn grads_finite(&self) -> bool {
        self.entries
            .values()
            .all(|a| a.grad().is_none_or(|g| g.iter().all(|v| v.is_finite())))
    }

    /// Copies values (not gradients) of matching names from `other`.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for (name, src) in other.iter() {
            let dst = self.get_mut(name)?;
            if dst.shape() != src.shape() {
                return Err(NumError::shape(
                    "ParamStore::copy_values_from",
                    format!("{name}: {:?} vs {:?}", dst.shape(), src.shape()),
                ));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Array::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Array::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Array::new(vec![1], vec![f64::NAN]).is_err());
    }

    #[test]
    fn store_keeps_insertion_order_and_rejects_duplicates() {
        let mut s = ParamStore::new(0);
        s.insert("b", Array::zeros(&[1])).unwrap();
        s.insert("a", Array::zeros(&[2])).unwrap();
        assert_eq!(s.names().collect::<Vec<_>>(), ["b", "a"]);
        assert!(matches!(
            s.insert("a", Array::zeros(&[1])),
            Err(NumError::DuplicateParam(_))
        ));
        assert_eq!(s.index_of("a").unwrap(), 1);
    }
}
