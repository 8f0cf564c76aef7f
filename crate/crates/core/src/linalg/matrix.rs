use std::fmt;

use crate::error::{Error, Result};

/// Row-major dense `f64` matrix. Entries are finite by construction.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
                value: data[pos],
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; every row must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    op: "from_rows",
                    left: (0, cols),
                    right: (i, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Assembles a `rows x cols` matrix from column vectors.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Self {
        let cols = columns.len();
        Self::from_fn(rows, cols, |i, j| columns[j][i])
    }

    /// Internal constructor for buffers produced by finite arithmetic on finite inputs.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, col)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self::from_fn(self.rows, cols.len(), |i, j| self.get(i, cols[j]))
    }

    /// Leading `rows x cols` block.
    pub fn leading(&self, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self.get(i, j))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_raw(self.rows, self.cols, data))
    }

    /// `self += factor * other`, shapes must agree.
    pub(crate) fn axpy_in_place(&mut self, factor: f64, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        matmul(self, other)
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    /// Frobenius inner product `<self, other>` of equally shaped matrices.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op: "dot",
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(dot(&self.data, &other.data))
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for j in 0..self.cols.min(8) {
                write!(f, "{:>12.5e} ", self.get(i, j))?;
            }
            if self.cols > 8 {
                write!(f, "...")?;
            }
            writeln!(f)?;
        }
        if self.rows > 8 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

/// Matrix product. Each output entry accumulates over the inner index in increasing order.
pub fn matmul(x: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    if x.cols != y.rows {
        return Err(Error::DimensionMismatch {
            op: "matmul",
            left: x.shape(),
            right: y.shape(),
        });
    }
    let (m, inner, n) = (x.rows, x.cols, y.cols);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let acc = &mut out[i * n..(i + 1) * n];
        for k in 0..inner {
            let a = x.data[i * inner + k];
            let yrow = &y.data[k * n..(k + 1) * n];
            for (o, &b) in acc.iter_mut().zip(yrow) {
                *o += a * b;
            }
        }
    }
    Ok(DenseMatrix::from_raw(m, n, out))
}

pub fn frobenius_norm(x: &DenseMatrix) -> f64 {
    x.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
