#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sparsecov::SymmetricMatrix;

pub fn to_na(s: &SymmetricMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(s.dim(), s.dim(), s.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> SymmetricMatrix {
    let p = m.nrows();
    SymmetricMatrix::from_fn(p, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

/// Haar-like orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(rng));
    g.qr().q()
}

/// `Q diag(λ) Qᵀ` with eigenvalues drawn uniformly from `[lo, hi]`.
pub fn random_spd(p: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> SymmetricMatrix {
    let q = random_orthogonal(p, rng);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(p, |_, _| rng.random_range(lo..hi)));
    from_na(&(&q * d * q.transpose()))
}

/// Symmetric matrix with independent entries uniform on `[-a, a]`.
pub fn random_symmetric(p: usize, a: f64, rng: &mut ChaCha8Rng) -> SymmetricMatrix {
    let mut vals = vec![0.0; p * p];
    for i in 0..p {
        for j in i..p {
            let v = rng.random_range(-a..a);
            vals[i * p + j] = v;
            vals[j * p + i] = v;
        }
    }
    SymmetricMatrix::from_row_major(p, vals).unwrap()
}
