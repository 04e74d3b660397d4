use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{SquareMatrix, SymmetricMatrix};

/// `∫ g₁ g₂ / g₀` for centered Gaussian densities `g_i` with covariances `S_i`.
///
/// With `D_i = S_i − S0` the value is `det(I − S0⁻¹ D₁ S0⁻¹ D₂)^{−1/2}`. The
/// integral exists only when `S1⁻¹ + S2⁻¹ − S0⁻¹` is positive definite.
pub fn cross_product_integral(s0: &SymmetricMatrix, s1: &SymmetricMatrix, s2: &SymmetricMatrix) -> Result<f64> {
    let inv0 = spd_inverse(s0, "S0")?;
    cross_product_integral_with(&inv0, s0, s1, s2)
}

pub(crate) fn spd_inverse(s: &SymmetricMatrix, name: &str) -> Result<SymmetricMatrix> {
    let eig = s.sym_eigen()?;
    if eig.min_eigenvalue() <= 0.0 {
        return Err(Error::domain(format!("{name} must be positive definite"), eig.min_eigenvalue()));
    }
    eig.map_spectrum(|l| 1.0 / l)
}

pub(crate) fn cross_product_integral_with(
    inv0: &SymmetricMatrix,
    s0: &SymmetricMatrix,
    s1: &SymmetricMatrix,
    s2: &SymmetricMatrix,
) -> Result<f64> {
    s0.check_dim(s1)?;
    s0.check_dim(s2)?;
    let inv1 = spd_inverse(s1, "S1")?;
    let inv2 = spd_inverse(s2, "S2")?;
    let precision = inv1.add(&inv2)?.sub(inv0)?;
    let min = precision.eigenvalues()?.last().copied().unwrap_or(0.0);
    if min <= 0.0 {
        return Err(Error::DivergentIntegral(format!(
            "S1^-1 + S2^-1 - S0^-1 has minimum eigenvalue {min:e}"
        )));
    }
    let d1 = s1.sub(s0)?;
    let d2 = s2.sub(s0)?;
    let left = inv0.matmul(&d1)?;
    let right = inv0.matmul(&d2)?;
    let product = left.matmul(&right)?;
    let m = SquareMatrix::identity(s0.dim()).sub(&product)?;
    let det = m.determinant();
    if !(det > 0.0) {
        return Err(Error::DivergentIntegral(format!("determinant {det:e} is not positive")));
    }
    Ok(det.powf(-0.5))
}

/// Shape of the product of two first-row perturbations over a shared base.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapStructure {
    /// Shared nonzero positions in the first rows of `S1 − S0` and `S2 − S0`.
    pub overlap: usize,
    /// Common perturbation size ε.
    pub epsilon: f64,
    /// Nonzero eigenvalues of `(S0 − S1)(S0 − S2)`, descending.
    pub nonzero_eigenvalues: Vec<f64>,
    /// Numerical rank of the product.
    pub rank: usize,
}

/// Checks that `S1 − S0` and `S2 − S0` only move the first row and column by
/// a common `ε`, that `S0` leaves that row and column alone, and returns the
/// spectrum of `Q = (S0 − S1)(S0 − S2)`.
///
/// `Q` is block diagonal: `q₁₁ = J ε²` and the trailing block is `ε² a bᵀ`
/// for the 0/1 pattern vectors `a`, `b`, whose only nonzero eigenvalue is
/// its trace `ε² bᵀa = J ε²`.
pub fn overlap_structure(s0: &SymmetricMatrix, s1: &SymmetricMatrix, s2: &SymmetricMatrix) -> Result<OverlapStructure> {
    s0.check_dim(s1)?;
    s0.check_dim(s2)?;
    let p = s0.dim();
    if p < 2 {
        return Err(Error::InvalidArgument("structure: dimension must be at least 2".into()));
    }
    for j in 1..p {
        if s0.get(0, j) != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "structure: S0 has a nonzero entry at (1, {})",
                j + 1
            )));
        }
    }
    let d1 = s0.sub(s1)?;
    let d2 = s0.sub(s2)?;
    let mut epsilon: Option<f64> = None;
    for (name, d) in [("S1", &d1), ("S2", &d2)] {
        for i in 0..p {
            for j in 0..p {
                let v = d.get(i, j);
                if v == 0.0 {
                    continue;
                }
                if i == j || (i != 0 && j != 0) {
                    return Err(Error::InvalidArgument(format!(
                        "structure: {name} - S0 is nonzero at ({}, {}) outside the first row",
                        i + 1,
                        j + 1
                    )));
                }
                let mag = -v;
                match epsilon {
                    None if mag > 0.0 => epsilon = Some(mag),
                    Some(e) if e == mag => {}
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "structure: {name} - S0 has entry {mag} that is not the common positive epsilon"
                        )))
                    }
                }
            }
        }
    }
    let epsilon = epsilon.unwrap_or(0.0);
    let overlap = (1..p).filter(|&j| d1.get(0, j) != 0.0 && d2.get(0, j) != 0.0).count();

    let q = d1.matmul(&d2)?;
    let mut nonzero = Vec::new();
    let tol = 1e-14 * (1.0 + epsilon * epsilon * p as f64);
    let q11 = q.get(0, 0);
    let tail_trace: f64 = (1..p).map(|i| q.get(i, i)).sum();
    for v in [q11, tail_trace] {
        if v.abs() > tol {
            nonzero.push(v);
        }
    }
    nonzero.sort_by(|a, b| b.total_cmp(a));

    // singular values of Q from the symmetric matrix QᵀQ
    let qtq = q.transpose().matmul(&q)?;
    let qtq = SymmetricMatrix::from_row_major(p, qtq.as_slice().to_vec())?;
    let sv = qtq.eigenvalues()?;
    let top = sv[0].max(0.0);
    // eigenvalues of QᵀQ carry absolute error near ulp·top, so the cut sits well above it
    let rank = sv.iter().filter(|&&s| s > 1e-12 * top).count();

    Ok(OverlapStructure {
        overlap,
        epsilon,
        nonzero_eigenvalues: nonzero,
        rank: if top == 0.0 { 0 } else { rank },
    })
}
