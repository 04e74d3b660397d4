//! Dense symmetric matrices and their spectral toolkit.

mod dense;
mod eigen;
mod io;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use dense::SquareMatrix;
pub use io::{read_matrix_csv, write_matrix_csv};

use crate::error::{Error, Result};

/// Relative asymmetry accepted (and averaged away) at construction.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Dense real symmetric matrix stored row-major in full.
///
/// Entries satisfy `a[i][j] == a[j][i]` bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetricMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl<'de> Deserialize<'de> for SymmetricMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            dim: usize,
            data: Vec<f64>,
        }
        let raw = Raw::deserialize(de)?;
        SymmetricMatrix::from_row_major(raw.dim, raw.data).map_err(serde::de::Error::custom)
    }
}

impl SymmetricMatrix {
    /// Builds a matrix from row-major entries.
    ///
    /// Inputs whose largest asymmetry is within `1e-12 * (1 + max|a_ij|)` are
    /// replaced by `(A + Aᵀ)/2`; anything less symmetric is rejected.
    pub fn from_row_major(dim: usize, mut data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMatrix("dimension must be positive".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!(
                "non-finite entry at ({}, {})",
                pos / dim,
                pos % dim
            )));
        }
        let max_entry = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut asym = 0.0f64;
        for i in 0..dim {
            for j in (i + 1)..dim {
                asym = asym.max((data[i * dim + j] - data[j * dim + i]).abs());
            }
        }
        let tolerance = SYMMETRY_TOLERANCE * (1.0 + max_entry);
        if asym > tolerance {
            return Err(Error::Asymmetric {
                asymmetry: asym,
                tolerance,
            });
        }
        if asym > 0.0 {
            for i in 0..dim {
                for j in (i + 1)..dim {
                    let avg = 0.5 * (data[i * dim + j] + data[j * dim + i]);
                    data[i * dim + j] = avg;
                    data[j * dim + i] = avg;
                }
            }
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(dim, data)
    }

    /// Evaluates `f(i, j)` on the upper triangle and mirrors it.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(dim > 0, "dimension must be positive");
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                data[i * dim + j] = v;
                data[j * dim + i] = v;
            }
        }
        Self { dim, data }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * m.dim + i] = d;
        }
        m
    }

    /// Wraps data that is symmetric by construction, forcing exact mirror
    /// equality by copying the upper triangle down.
    pub(crate) fn from_upper(dim: usize, mut data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        for i in 0..dim {
            for j in (i + 1)..dim {
                data[j * dim + i] = data[i * dim + j];
            }
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

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Applies `f` to every entry. `f` must treat `(i, j)` and `(j, i)` alike.
    pub fn map_entries(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        Self::from_fn(self.dim, |i, j| f(i, j, self.get(i, j)))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub(crate) fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn matmul(&self, other: &Self) -> Result<SquareMatrix> {
        self.check_dim(other)?;
        SquareMatrix::from_row_major(self.dim, dense::gemm(self.dim, &self.data, &other.data))
    }

    pub fn to_square(&self) -> SquareMatrix {
        SquareMatrix::from_row_major(self.dim, self.data.clone()).expect("shape is valid")
    }

    /// Full eigendecomposition with eigenvalues in descending order.
    pub fn sym_eigen(&self) -> Result<EigenDecomposition> {
        let raw = eigen::symmetric_eigen(&self.data, self.dim, true)?;
        Ok(EigenDecomposition {
            dim: self.dim,
            eigenvalues: raw.values,
            vectors: raw.vectors.expect("vectors requested"),
        })
    }

    /// Eigenvalues only, descending. Skips eigenvector accumulation.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(eigen::symmetric_eigen(&self.data, self.dim, false)?.values)
    }

    /// Exact ℓ₁, ℓ₂ or ℓ∞ operator norm.
    pub fn operator_norm(&self, w: NormIndex) -> Result<f64> {
        match w {
            NormIndex::One | NormIndex::Infinity => Ok(self.max_abs_column_sum()),
            NormIndex::Two => {
                let ev = self.eigenvalues()?;
                Ok(ev[0].abs().max(ev[ev.len() - 1].abs()))
            }
        }
    }

    /// Upper bound on the ℓ_w operator norm for any `w ∈ [1, ∞]`: the largest
    /// of the ℓ₁, ℓ₂ and ℓ∞ norms. It is a bound, not the exact ℓ_w norm.
    pub fn operator_norm_bound(&self, w: f64) -> Result<f64> {
        if w.is_nan() || w < 1.0 {
            return Err(Error::InvalidArgument(format!("norm index {w} is outside [1, inf]")));
        }
        let one = self.max_abs_column_sum();
        Ok(one.max(self.operator_norm(NormIndex::Two)?))
    }

    fn max_abs_column_sum(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `V diag(f(λ)) Vᵀ`. Fails with a domain error naming the first
    /// eigenvalue at which `f` is not finite.
    pub fn matrix_function(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.sym_eigen()?.map_spectrum(f)
    }
}

impl fmt::Display for SymmetricMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.dim {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v:.6}")).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Eigenvalues in descending order with an orthonormal eigenvector for each.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    dim: usize,
    eigenvalues: Vec<f64>,
    // row k holds the eigenvector of eigenvalues[k]
    vectors: Vec<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }

    /// Eigenvectors as the columns of a square matrix.
    pub fn eigenvector_matrix(&self) -> SquareMatrix {
        SquareMatrix::from_row_major(self.dim, self.vectors.clone())
            .expect("shape is valid")
            .transpose()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.dim - 1]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Reassembles `V diag(values) Vᵀ` for caller-supplied values.
    pub fn reconstruct_with(&self, values: &[f64]) -> Result<SymmetricMatrix> {
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: values.len(),
            });
        }
        let n = self.dim;
        let mut scaled = self.vectors.clone();
        for (k, &v) in values.iter().enumerate() {
            for x in &mut scaled[k * n..(k + 1) * n] {
                *x *= v;
            }
        }
        let mut c = vec![0.0; n * n];
        let s = n as isize;
        // SAFETY: vectors, scaled and c all hold n*n elements; A is read as the
        // transpose of the row-major vector matrix (row stride 1, column stride n).
        unsafe {
            matrixmultiply::dgemm(
                n,
                n,
                n,
                1.0,
                self.vectors.as_ptr(),
                1,
                s,
                scaled.as_ptr(),
                s,
                1,
                0.0,
                c.as_mut_ptr(),
                s,
                1,
            );
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (c[i * n + j] + c[j * n + i]);
                c[i * n + j] = avg;
            }
        }
        Ok(SymmetricMatrix::from_upper(n, c))
    }

    pub fn reconstruct(&self) -> SymmetricMatrix {
        self.reconstruct_with(&self.eigenvalues).expect("matching dimension")
    }

    /// `V diag(f(λ)) Vᵀ`, failing on the first eigenvalue where `f` is not finite.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Result<SymmetricMatrix> {
        let mut mapped = Vec::with_capacity(self.dim);
        for &lambda in &self.eigenvalues {
            let v = f(lambda);
            if !v.is_finite() {
                return Err(Error::domain("matrix function undefined", lambda));
            }
            mapped.push(v);
        }
        self.reconstruct_with(&mapped)
    }
}

/// Operator norm index with an exact routine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormIndex {
    One,
    Two,
    Infinity,
}

impl NormIndex {
    pub fn from_exponent(w: f64) -> Result<Self> {
        if w == 1.0 {
            Ok(NormIndex::One)
        } else if w == 2.0 {
            Ok(NormIndex::Two)
        } else if w == f64::INFINITY {
            Ok(NormIndex::Infinity)
        } else {
            Err(Error::UnsupportedNorm(w))
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NormIndex::One => "1",
            NormIndex::Two => "2",
            NormIndex::Infinity => "inf",
        }
    }
}

impl fmt::Display for NormIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" => Ok(NormIndex::One),
            "2" => Ok(NormIndex::Two),
            "inf" | "infinity" => Ok(NormIndex::Infinity),
            other => match other.parse::<f64>() {
                Ok(w) => Self::from_exponent(w),
                Err(_) => Err(Error::Parse(format!("unknown norm index '{s}'"))),
            },
        }
    }
}

impl Serialize for NormIndex {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for NormIndex {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(de)?;
        let parsed = match &v {
            serde_json::Value::String(s) => s.parse(),
            serde_json::Value::Number(n) => NormIndex::from_exponent(n.as_f64().unwrap_or(f64::NAN)),
            _ => Err(Error::Parse(format!("bad norm index {v}"))),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> SymmetricMatrix {
        SymmetricMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn identity_spectrum() {
        let e = SymmetricMatrix::identity(3).sym_eigen().unwrap();
        assert_eq!(e.eigenvalues(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn two_by_two_spectrum() {
        let e = m(&[&[2.0, 1.0], &[1.0, 2.0]]).sym_eigen().unwrap();
        assert!((e.eigenvalues()[0] - 3.0).abs() < 1e-14);
        assert!((e.eigenvalues()[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn norms_on_examples() {
        let d = SymmetricMatrix::from_diagonal(&[3.0, -4.0]);
        assert_eq!(d.operator_norm(NormIndex::Two).unwrap(), 4.0);
        let a = m(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert_eq!(a.operator_norm(NormIndex::One).unwrap(), 3.0);
        assert!((a.operator_norm_bound(1.5).unwrap() - 3.0).abs() < 1e-14);
        assert_eq!(SymmetricMatrix::identity(4).operator_norm_bound(1.5).unwrap(), 1.0);
        assert_eq!(SymmetricMatrix::from_diagonal(&[5.0]).operator_norm_bound(7.0).unwrap(), 5.0);
        for w in [NormIndex::One, NormIndex::Two, NormIndex::Infinity] {
            assert_eq!(SymmetricMatrix::identity(5).operator_norm(w).unwrap(), 1.0);
        }
        assert!(SymmetricMatrix::identity(2).operator_norm_bound(0.5).is_err());
    }

    #[test]
    fn unsupported_norm_points_to_bound() {
        let err = NormIndex::from_exponent(1.5).unwrap_err();
        assert!(err.to_string().contains("operator_norm_bound"));
        assert_eq!("inf".parse::<NormIndex>().unwrap(), NormIndex::Infinity);
        assert_eq!("2".parse::<NormIndex>().unwrap(), NormIndex::Two);
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(SymmetricMatrix::zeros(3).frobenius_norm(), 0.0);
        assert_eq!(SymmetricMatrix::identity(4).frobenius_norm(), 2.0);
        let a = m(&[&[0.0, 3.0], &[3.0, 0.0]]);
        assert!((a.frobenius_norm() - 18f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn matrix_function_examples() {
        let a = m(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let same = a.matrix_function(|x| x).unwrap();
        assert!(same.sub(&a).unwrap().max_abs() < 1e-10);
        let sq = a.matrix_function(|x| x * x).unwrap();
        let direct = a.matmul(&a).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((sq.get(i, j) - direct.get(i, j)).abs() < 1e-10);
            }
        }
        let d = SymmetricMatrix::from_diagonal(&[1.0, std::f64::consts::E]);
        let l = d.matrix_function(f64::ln).unwrap();
        assert!(l.get(0, 0).abs() < 1e-15 && (l.get(1, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matrix_function_domain_error_names_eigenvalue() {
        let a = SymmetricMatrix::from_diagonal(&[2.0, -0.5]);
        match a.matrix_function(f64::ln) {
            Err(Error::Domain { eigenvalue, .. }) => assert_eq!(eigenvalue, -0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn symmetrization_rules() {
        let tiny = SymmetricMatrix::from_row_major(2, vec![1.0, 0.5, 0.5 + 1e-14, 1.0]).unwrap();
        assert_eq!(tiny.get(0, 1), tiny.get(1, 0));
        let err = SymmetricMatrix::from_row_major(2, vec![1.0, 0.5, 0.6, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Asymmetric { .. }));
        assert!(SymmetricMatrix::from_row_major(2, vec![1.0, f64::NAN, f64::NAN, 1.0]).is_err());
        assert!(SymmetricMatrix::from_row_major(2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn json_round_trip_revalidates() {
        let a = m(&[&[1.0, 0.25], &[0.25, 3.0]]);
        let s = serde_json::to_string(&a).unwrap();
        let back: SymmetricMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(a, back);
        assert!(serde_json::from_str::<SymmetricMatrix>(r#"{"dim":2,"data":[1,2,3,4]}"#).is_err());
    }
}
