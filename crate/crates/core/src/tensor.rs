//! Dense row-major tensors of rank 1 or 2.

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S = f32> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![S::zero(); n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Invalid(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn filled(shape: &[usize], value: S) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Leading extent (rows for matrices, length for vectors).
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Trailing extent for matrices; 1 for vectors.
    pub fn cols(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn row(&self, r: usize) -> &[S] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: S) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    /// Column `c` of a matrix, copied out.
    pub fn column(&self, c: usize) -> Vec<S> {
        (0..self.rows()).map(|r| self.get(r, c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::narrow(v.widen())).collect(),
        }
    }

    pub fn fill(&mut self, value: S) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// Zero row `r` (axis 0) or column `r` (axis 1).
    pub fn zero_slice(&mut self, axis: usize, index: usize) {
        match (self.rank(), axis) {
            (1, 0) => self.data[index] = S::zero(),
            (2, 0) => self.row_mut(index).fill(S::zero()),
            (2, 1) => {
                for r in 0..self.rows() {
                    self.set(r, index, S::zero());
                }
            }
            _ => panic!("zero_slice: axis {axis} on rank {}", self.rank()),
        }
    }

    /// Remove the given indices along `axis`. Indices are applied in
    /// descending order so earlier removals never shift later ones.
    pub fn remove_indices(&self, axis: usize, indices: &[usize]) -> Result<Self> {
        let extent = *self
            .shape
            .get(axis)
            .ok_or_else(|| Error::Invalid(format!("axis {axis} on rank {}", self.rank())))?;
        let mut order: Vec<usize> = indices.to_vec();
        order.sort_unstable_by(|a, b| b.cmp(a));
        order.dedup();
        if let Some(&top) = order.first() {
            if top >= extent {
                return Err(Error::Invalid(format!(
                    "index {top} out of range for axis {axis} of extent {extent}"
                )));
            }
        }
        let mut keep = vec![true; extent];
        for &i in &order {
            keep[i] = false;
        }
        let mut shape = self.shape.clone();
        shape[axis] = extent - order.len();
        let data = match (self.rank(), axis) {
            (1, 0) => self
                .data
                .iter()
                .zip(&keep)
                .filter_map(|(v, k)| k.then_some(*v))
                .collect(),
            (2, 0) => (0..self.rows())
                .filter(|&r| keep[r])
                .flat_map(|r| self.row(r).iter().copied())
                .collect(),
            (2, 1) => (0..self.rows())
                .flat_map(|r| {
                    self.row(r)
                        .iter()
                        .zip(&keep)
                        .filter_map(|(v, k)| k.then_some(*v))
                        .collect::<Vec<_>>()
                })
                .collect(),
            _ => unreachable!(),
        };
        Ok(Self { shape, data })
    }
}

/// `x · wᵀ` for `x: [t, in]` and `w: [out, in]`, giving `[t, out]`.
pub fn linear<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>) -> Tensor<S> {
    let (t, d_in) = (x.rows(), x.cols());
    let d_out = w.rows();
    debug_assert!(
        d_out == 0 || w.cols() == d_in,
        "linear: {:?} x {:?}",
        x.shape(),
        w.shape()
    );
    let mut out = Tensor::zeros(&[t, d_out]);
    for r in 0..t {
        let xr = x.row(r);
        let orow = out.row_mut(r);
        for (o, slot) in orow.iter_mut().enumerate() {
            *slot = dot(xr, w.row(o));
        }
    }
    out
}
