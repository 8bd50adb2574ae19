use crate::real::Real;
use crate::TapeError;

/// Dense row-major tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(value: T) -> Self {
        Self { shape: Vec::new(), data: vec![value] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self, TapeError> {
        let want: usize = shape.iter().product();
        if want != data.len() {
            return Err(TapeError::Shape(format!(
                "shape {shape:?} needs {want} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    /// Converts element type (e.g. an `f32` checkpoint into `f64` for gradient checks).
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on a tensor with {} elements", self.data.len());
        self.data[0]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, TapeError> {
        let want: usize = shape.iter().product();
        if want != self.data.len() {
            return Err(TapeError::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Batch item `b` of a tensor whose leading axis is the batch.
    pub fn batch_item(&self, b: usize) -> Self {
        let inner: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = 1;
        Self { shape, data: self.data[b * inner..(b + 1) * inner].to_vec() }
    }

    /// Stacks tensors of identical shape `[1, ...]` (or `[...]`) along a new/leading batch axis.
    pub fn stack(items: &[Tensor<T>]) -> Result<Self, TapeError> {
        let first = items.first().ok_or_else(|| TapeError::Shape("stack of nothing".into()))?;
        let inner_shape: Vec<usize> =
            if first.shape.first() == Some(&1) { first.shape[1..].to_vec() } else { first.shape.clone() };
        let inner: usize = inner_shape.iter().product();
        let mut data = Vec::with_capacity(inner * items.len());
        for t in items {
            if t.numel() != inner {
                return Err(TapeError::Shape(format!(
                    "stack: {:?} does not match {:?}",
                    t.shape, first.shape
                )));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend(inner_shape);
        Ok(Self { shape, data })
    }
}
