use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::real::Real;
use crate::tensor::Tensor;
use crate::TapeError;

static NEXT_STORE_UID: AtomicU64 = AtomicU64::new(1);

/// Handle to one tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named, ordered collection of learnable tensors.
///
/// Every store carries a process-unique id so one tape can mix parameters
/// from several stores (e.g. a frozen codec and a trainable stylizer).
#[derive(Debug)]
pub struct ParamStore<T> {
    uid: u64,
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
    trainable: bool,
}

impl<T: Real> Clone for ParamStore<T> {
    fn clone(&self) -> Self {
        Self {
            uid: NEXT_STORE_UID.fetch_add(1, Ordering::Relaxed),
            names: self.names.clone(),
            values: self.values.clone(),
            index: self.index.clone(),
            trainable: self.trainable,
        }
    }
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            uid: NEXT_STORE_UID.fetch_add(1, Ordering::Relaxed),
            names: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
            trainable: true,
        }
    }

    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.trainable = trainable;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Registers a tensor under a unique name.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter name {name}");
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        ParamId(id)
    }

    /// Uniform `±1/sqrt(fan_in)` initialisation, the usual default for conv and dense layers.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::lit(rng.random_range(-bound..bound))).collect();
        self.add(name, Tensor::from_vec(shape, data).expect("shape product"))
    }

    pub fn add_const(&mut self, name: impl Into<String>, shape: &[usize], value: f64) -> ParamId {
        self.add(name, Tensor::full(shape, T::lit(value)))
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    /// Same names and values in another precision.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        let mut out = ParamStore::<U>::new();
        for (name, value) in self.names.iter().zip(&self.values) {
            out.add(name.clone(), value.cast());
        }
        out.trainable = self.trainable;
        out
    }

    /// Overwrites values from `(name, tensor)` pairs; every parameter must be present.
    pub fn load_named(&mut self, entries: Vec<(String, Tensor<T>)>) -> Result<(), TapeError> {
        let mut seen = vec![false; self.values.len()];
        for (name, tensor) in entries {
            let id = *self
                .index
                .get(&name)
                .ok_or_else(|| TapeError::Checkpoint(format!("unexpected tensor {name}")))?;
            if tensor.shape() != self.values[id].shape() {
                return Err(TapeError::Checkpoint(format!(
                    "tensor {name}: checkpoint shape {:?} vs model {:?}",
                    tensor.shape(),
                    self.values[id].shape()
                )));
            }
            self.values[id] = tensor;
            seen[id] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(TapeError::Checkpoint(format!("missing tensor {}", self.names[missing])));
        }
        Ok(())
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Bitwise equality of every value, used to verify frozen weights.
    pub fn bit_identical(&self, other: &ParamStore<T>) -> bool {
        self.names == other.names
            && self.values.iter().zip(&other.values).all(|(a, b)| {
                a.shape() == b.shape()
                    && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits_eq(*y))
            })
    }
}

trait BitsEq {
    fn to_bits_eq(self, other: Self) -> bool;
}

impl<T: Real> BitsEq for T {
    fn to_bits_eq(self, other: Self) -> bool {
        // f32 and f64 both round-trip exactly through f64.
        let (a, b) = (self.as_f64(), other.as_f64());
        a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
    }
}
