use serde::{Deserialize, Serialize};

use super::NnError;

/// Dense row-major array of `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NnError> {
        if shape.iter().any(|&e| e == 0) {
            return Err(NnError::Shape(format!("zero extent in shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(NnError::Shape(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, NnError> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(NnError::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Index of a 3-d element `[c, i, j]`.
    #[inline]
    pub fn idx3(&self, c: usize, i: usize, j: usize) -> usize {
        (c * self.shape[1] + i) * self.shape[2] + j
    }

    #[inline]
    pub fn at3(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[self.idx3(c, i, j)]
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn expect_shape(&self, shape: &[usize], what: &str) -> Result<(), NnError> {
        if self.shape != shape {
            return Err(NnError::Shape(format!(
                "{what}: expected shape {shape:?}, got {:?}",
                self.shape
            )));
        }
        Ok(())
    }
}

/// Concatenates 3-d tensors along the channel axis.
pub fn concat_channels(parts: &[Tensor]) -> Result<Tensor, NnError> {
    let first = parts
        .first()
        .ok_or_else(|| NnError::Shape("nothing to concatenate".into()))?;
    let (h, w) = (first.shape()[1], first.shape()[2]);
    let mut channels = 0;
    let mut data = Vec::new();
    for p in parts {
        if p.shape().len() != 3 || p.shape()[1] != h || p.shape()[2] != w {
            return Err(NnError::Shape(format!(
                "concat: spatial mismatch {:?} vs [_, {h}, {w}]",
                p.shape()
            )));
        }
        channels += p.shape()[0];
        data.extend_from_slice(p.data());
    }
    Tensor::new(vec![channels, h, w], data)
}

/// Inverse of [`concat_channels`]: splits along the channel axis.
pub fn split_channels(t: &Tensor, counts: &[usize]) -> Result<Vec<Tensor>, NnError> {
    let (h, w) = (t.shape()[1], t.shape()[2]);
    if counts.iter().sum::<usize>() != t.shape()[0] {
        return Err(NnError::Shape(format!(
            "split {counts:?} does not cover {} channels",
            t.shape()[0]
        )));
    }
    let plane = h * w;
    let mut offset = 0;
    let mut out = Vec::with_capacity(counts.len());
    for &c in counts {
        let slice = t.data()[offset * plane..(offset + c) * plane].to_vec();
        out.push(Tensor::new(vec![c, h, w], slice)?);
        offset += c;
    }
    Ok(out)
}
