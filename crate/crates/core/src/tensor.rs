//! Dense vectors, row-major matrices and order-3 tensors, plus the handful of
//! multilinear primitives the model is built from.
//!
//! `Tensor3` stores element `(p, q, r)` at `p + d1 * (q + d2 * r)`, so the
//! mode-1 unfolding (column index `q + d2 * r`) is a reinterpretation of the
//! same buffer as a column-major `d1 x (d2 d3)` matrix.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use crate::error::{check_len, Error, Result};

/// Largest magnitude fed to `exp`; beyond this the sigmoid is 0 or 1 to
/// machine precision anyway.
const EXP_CLAMP: f64 = 700.0;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Vector(vec![value; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    /// One-hot vector of length `len` with a 1 at `index`.
    pub fn unit(len: usize, index: usize) -> Self {
        let mut v = Self::zeros(len);
        v.0[index] = 1.0;
        v
    }

    pub fn concat(&self, other: &[f64]) -> Self {
        let mut data = Vec::with_capacity(self.len() + other.len());
        data.extend_from_slice(&self.0);
        data.extend_from_slice(other);
        Vector(data)
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl From<&[f64]> for Vector {
    fn from(v: &[f64]) -> Self {
        Vector(v.to_vec())
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len("Matrix::from_vec", rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_len("Matrix::from_rows", cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self · x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vector> {
        check_len("Matrix::matvec", self.cols, x.len())?;
        Ok(Vector(
            (0..self.rows).map(|i| dot(self.row(i), x)).collect(),
        ))
    }

    /// `selfᵀ · x`.
    pub fn matvec_t(&self, x: &[f64]) -> Result<Vector> {
        check_len("Matrix::matvec_t", self.rows, x.len())?;
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(i)) {
                *o += w * xi;
            }
        }
        Ok(Vector(out))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Dense order-3 tensor with mode-1 index varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(d1: usize, d2: usize, d3: usize) -> Self {
        Tensor3 {
            dims: (d1, d2, d3),
            data: vec![0.0; d1 * d2 * d3],
        }
    }

    pub fn from_fn(
        d1: usize,
        d2: usize,
        d3: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(d1 * d2 * d3);
        for r in 0..d3 {
            for q in 0..d2 {
                for p in 0..d1 {
                    data.push(f(p, q, r));
                }
            }
        }
        Tensor3 {
            dims: (d1, d2, d3),
            data,
        }
    }

    /// Wraps a buffer laid out as `p + d1 * (q + d2 * r)`.
    pub fn from_vec(dims: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        check_len("Tensor3::from_vec", dims.0 * dims.1 * dims.2, data.len())?;
        Ok(Tensor3 { dims, data })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    #[inline]
    fn offset(&self, p: usize, q: usize, r: usize) -> usize {
        let (d1, d2, _) = self.dims;
        p + d1 * (q + d2 * r)
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize, r: usize) -> f64 {
        self.data[self.offset(p, q, r)]
    }

    #[inline]
    pub fn set(&mut self, p: usize, q: usize, r: usize, v: f64) {
        let o = self.offset(p, q, r);
        self.data[o] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The mode-1 fibre at `(q, r)`: all `G(·, q, r)`.
    #[inline]
    pub fn fibre(&self, q: usize, r: usize) -> &[f64] {
        let start = self.offset(0, q, r);
        &self.data[start..start + self.dims.0]
    }

    #[inline]
    pub fn fibre_mut(&mut self, q: usize, r: usize) -> &mut [f64] {
        let start = self.offset(0, q, r);
        let d1 = self.dims.0;
        &mut self.data[start..start + d1]
    }

    /// Mode-1 product with a vector: `M(q, r) = Σ_p G(p, q, r) a[p]`.
    pub fn mode1_contract(&self, a: &[f64]) -> Result<Matrix> {
        let (d1, d2, d3) = self.dims;
        check_len("Tensor3::mode1_contract", d1, a.len())?;
        Ok(Matrix::from_fn(d2, d3, |q, r| dot(self.fibre(q, r), a)))
    }
}

/// `result[j][k] = y[j] * z[k]`.
pub fn outer_product(y: &[f64], z: &[f64]) -> Matrix {
    Matrix::from_fn(y.len(), z.len(), |j, k| y[j] * z[k])
}

/// Mode-1 unfolding: `(d1, d2·d3)` with `G(p, q, r)` at column `q + d2·r`.
pub fn mode1_unfold(g: &Tensor3) -> Matrix {
    let (d1, d2, d3) = g.dims();
    Matrix::from_fn(d1, d2 * d3, |p, col| g.get(p, col % d2, col / d2))
}

/// Inverse of [`mode1_unfold`].
pub fn mode1_fold(m: &Matrix, d2: usize, d3: usize) -> Result<Tensor3> {
    check_len("mode1_fold", d2 * d3, m.cols())?;
    Ok(Tensor3::from_fn(m.rows(), d2, d3, |p, q, r| {
        m.get(p, q + d2 * r)
    }))
}

/// Stacks the columns of `m` into one vector.
pub fn vec_colstack(m: &Matrix) -> Vector {
    let mut out = Vec::with_capacity(m.rows() * m.cols());
    for j in 0..m.cols() {
        for i in 0..m.rows() {
            out.push(m.get(i, j));
        }
    }
    Vector(out)
}

/// `Σ_p Σ_q Σ_r G(p,q,r) a[p] b[q] c[r]`.
pub fn contract_tucker(g: &Tensor3, a: &[f64], b: &[f64], c: &[f64]) -> Result<f64> {
    let (d1, d2, d3) = g.dims();
    check_len("contract_tucker(a)", d1, a.len())?;
    check_len("contract_tucker(b)", d2, b.len())?;
    check_len("contract_tucker(c)", d3, c.len())?;
    let mut total = 0.0;
    for (r, &cr) in c.iter().enumerate() {
        for (q, &bq) in b.iter().enumerate() {
            total += dot(g.fibre(q, r), a) * bq * cr;
        }
    }
    Ok(total)
}

/// Logistic sigmoid, evaluated on the branch that keeps `exp` bounded.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    let x = x.clamp(-EXP_CLAMP, EXP_CLAMP);
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

/// Fails on the first NaN or infinite entry.
pub fn ensure_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::NonFinite(alloc::format!("{what}[{i}] = {}", values[i]))),
    }
}
