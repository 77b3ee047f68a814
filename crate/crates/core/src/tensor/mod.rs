//! Dense `f64` arrays and a reverse-mode tape over them.
//!
//! Everything here is rank one or rank two. Vectors are the common case: the
//! models in this crate process one utterance at a time, so most products are
//! matrix-vector products.

pub mod kernels;
mod params;
mod tape;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub use params::{Gradients, ParamId, ParamSet};
pub use tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn numel(self) -> usize {
        match self {
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn dims(self) -> Vec<usize> {
        match self {
            Shape::Vector(n) => vec![n],
            Shape::Matrix(r, c) => vec![r, c],
        }
    }

    pub fn from_dims(dims: &[usize]) -> Option<Shape> {
        match *dims {
            [n] if n > 0 => Some(Shape::Vector(n)),
            [r, c] if r > 0 && c > 0 => Some(Shape::Matrix(r, c)),
            _ => None,
        }
    }

    /// Rows and columns, treating a vector as a column.
    pub fn as_matrix(self) -> (usize, usize) {
        match self {
            Shape::Vector(n) => (n, 1),
            Shape::Matrix(r, c) => (r, c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if shape.numel() != data.len() || shape.numel() == 0 {
            return Err(Error::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.numel()],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "empty vector");
        Tensor {
            shape: Shape::Vector(data.len()),
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(Shape::Matrix(rows, cols), data)
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::vector(vec![v])
    }

    pub fn shape(&self) -> Shape {
        self.shape
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

    pub fn rows(&self) -> usize {
        self.shape.as_matrix().0
    }

    pub fn cols(&self) -> usize {
        self.shape.as_matrix().1
    }

    /// Row `i` of a matrix. Panics on out-of-range rows.
    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Plain matrix product, no tape involved.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.shape.as_matrix();
        let (k2, n) = other.shape.as_matrix();
        if k != k2 || !matches!(self.shape, Shape::Matrix(..)) {
            return Err(Error::Shape {
                op: "matmul",
                left: self.shape,
                right: other.shape,
            });
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul(&self.data, m, k, &other.data, n, &mut out);
        let shape = match other.shape {
            Shape::Vector(_) => Shape::Vector(m),
            Shape::Matrix(..) => Shape::Matrix(m, n),
        };
        Tensor::new(shape, out)
    }
}
