use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// General dense square matrix, row-major. Used for products of symmetric
/// matrices, which are not symmetric in general.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMatrix("dimension must be positive".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[j * n + i] = self.data[i * n + j];
            }
        }
        Self { dim: n, data }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn matmul(&self, other: &SquareMatrix) -> Result<SquareMatrix> {
        self.check(other.dim)?;
        Ok(Self {
            dim: self.dim,
            data: gemm(self.dim, &self.data, &other.data),
        })
    }

    pub fn add(&self, other: &SquareMatrix) -> Result<SquareMatrix> {
        self.check(other.dim)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { dim: self.dim, data })
    }

    pub fn sub(&self, other: &SquareMatrix) -> Result<SquareMatrix> {
        self.check(other.dim)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { dim: self.dim, data })
    }

    pub fn scale(&self, s: f64) -> SquareMatrix {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Determinant by LU factorisation with partial pivoting.
    pub fn determinant(&self) -> f64 {
        let n = self.dim;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
                .unwrap_or(col);
            if a[pivot * n + col] == 0.0 {
                return 0.0;
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                }
                det = -det;
            }
            let pv = a[col * n + col];
            det *= pv;
            for i in col + 1..n {
                let factor = a[i * n + col] / pv;
                if factor != 0.0 {
                    for j in col + 1..n {
                        a[i * n + j] -= factor * a[col * n + j];
                    }
                }
            }
        }
        det
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<SquareMatrix> {
        let n = self.dim;
        let mut a = self.data.clone();
        let mut inv = Self::identity(n).data;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
                .unwrap_or(col);
            let pv = a[pivot * n + col];
            if pv == 0.0 {
                return Err(Error::InvalidMatrix("matrix is singular".into()));
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                    inv.swap(col * n + j, pivot * n + j);
                }
            }
            for j in 0..n {
                a[col * n + j] /= pv;
                inv[col * n + j] /= pv;
            }
            for i in 0..n {
                if i == col {
                    continue;
                }
                let factor = a[i * n + col];
                if factor != 0.0 {
                    for j in 0..n {
                        a[i * n + j] -= factor * a[col * n + j];
                        inv[i * n + j] -= factor * inv[col * n + j];
                    }
                }
            }
        }
        Ok(Self { dim: n, data: inv })
    }

    fn check(&self, other: usize) -> Result<()> {
        if self.dim != other {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other,
            });
        }
        Ok(())
    }
}

/// Row-major n×n product.
pub(crate) fn gemm(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    let s = n as isize;
    // SAFETY: all three buffers hold n*n elements and the strides describe
    // row-major n×n layouts, so every index dgemm touches is in bounds.
    unsafe {
        matrixmultiply::dgemm(
            n,
            n,
            n,
            1.0,
            a.as_ptr(),
            s,
            1,
            b.as_ptr(),
            s,
            1,
            0.0,
            c.as_mut_ptr(),
            s,
            1,
        );
    }
    c
}
