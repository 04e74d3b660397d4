use std::fs::File;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{read_matrix_csv, SymmetricMatrix};
use crate::model::{sample_theta, LeastFavorableConfig, DEFAULT_UPSILON};
use crate::sampling::RngSeed;

/// Generator of the true covariance for a grid cell `(q, c, n, p)`.
///
/// Every generator has unit diagonal and produces a positive definite member
/// of the weak ℓq ball of radius `c`; materialisation fails otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum TruthFamily {
    /// Toeplitz band: `σ_ij = ε` for `1 ≤ |i − j| ≤ k`. The default bandwidth
    /// is the largest `k` with `2k·ε^q ≤ c`.
    Banded {
        epsilon: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bandwidth: Option<usize>,
    },
    /// Block diagonal with compound-symmetric blocks `(1 − ρ)I + ρ11ᵀ`; the
    /// last block is shorter when `block` does not divide `p`.
    BlockBanded { block: usize, rho: f64 },
    /// Toeplitz with `σ_ij = min(κ·sqrt(ln p / n), (c / (2d))^{1/q})`, `d = |i − j|`.
    /// Needs `q > 0`.
    CappedPolynomial { kappa: f64 },
    /// A member `Σ(θ)` of the least-favorable family with `θ` drawn from the cell seed.
    LeastFavorable {
        #[serde(default = "default_upsilon")]
        upsilon: f64,
    },
    /// A fixed matrix read from a CSV file.
    Csv { path: PathBuf },
}

fn default_upsilon() -> f64 {
    DEFAULT_UPSILON
}

/// A materialised truth with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthMatrix {
    pub model: String,
    pub q: Option<f64>,
    pub c: Option<f64>,
    pub sigma: SymmetricMatrix,
}

impl TruthMatrix {
    /// An explicit matrix without class parameters.
    pub fn explicit(model: impl Into<String>, sigma: SymmetricMatrix) -> Self {
        Self {
            model: model.into(),
            q: None,
            c: None,
            sigma,
        }
    }
}

impl TruthFamily {
    pub fn describe(&self) -> String {
        match self {
            TruthFamily::Banded { epsilon, bandwidth } => match bandwidth {
                Some(k) => format!("banded(epsilon={epsilon},bandwidth={k})"),
                None => format!("banded(epsilon={epsilon})"),
            },
            TruthFamily::BlockBanded { block, rho } => format!("block-banded(block={block},rho={rho})"),
            TruthFamily::CappedPolynomial { kappa } => format!("capped-polynomial(kappa={kappa})"),
            TruthFamily::LeastFavorable { upsilon } => format!("least-favorable(upsilon={upsilon})"),
            TruthFamily::Csv { path } => format!("csv({})", path.display()),
        }
    }

    /// Builds the truth for one cell. `seed` is only used by the
    /// least-favorable family.
    pub fn materialize(&self, q: f64, c: f64, n: usize, p: usize, seed: RngSeed) -> Result<TruthMatrix> {
        if p == 0 || n == 0 {
            return Err(Error::Config(format!("cell needs positive n and p, got n = {n}, p = {p}")));
        }
        let sigma = match self {
            TruthFamily::Banded { epsilon, bandwidth } => {
                let eps = *epsilon;
                if !eps.is_finite() || eps <= 0.0 {
                    return Err(Error::Config(format!("banded epsilon must be positive, got {eps}")));
                }
                let k = match bandwidth {
                    Some(k) => *k,
                    None => (c / (2.0 * eps.powf(q))).floor() as usize,
                };
                check_radius(2.0 * k as f64 * eps.powf(q), c, "banded")?;
                SymmetricMatrix::from_fn(p, |i, j| {
                    let d = i.abs_diff(j);
                    if d == 0 {
                        1.0
                    } else if d <= k {
                        eps
                    } else {
                        0.0
                    }
                })
            }
            TruthFamily::BlockBanded { block, rho } => {
                let (b, rho) = (*block, *rho);
                if b == 0 || !rho.is_finite() || rho.abs() >= 1.0 {
                    return Err(Error::Config(format!(
                        "block-banded needs block >= 1 and |rho| < 1, got block = {b}, rho = {rho}"
                    )));
                }
                let width = b.min(p);
                check_radius((width - 1) as f64 * if width > 1 { rho.abs().powf(q) } else { 0.0 }, c, "block-banded")?;
                SymmetricMatrix::from_fn(p, |i, j| {
                    if i == j {
                        1.0
                    } else if i / b == j / b {
                        rho
                    } else {
                        0.0
                    }
                })
            }
            TruthFamily::CappedPolynomial { kappa } => {
                if q <= 0.0 {
                    return Err(Error::Config("capped-polynomial truth needs q > 0".into()));
                }
                if !kappa.is_finite() || *kappa <= 0.0 {
                    return Err(Error::Config(format!("kappa must be positive, got {kappa}")));
                }
                let cap = kappa * ((p as f64).ln() / n as f64).sqrt();
                let values: Vec<f64> = (0..p)
                    .map(|d| if d == 0 { 1.0 } else { cap.min((c / (2.0 * d as f64)).powf(1.0 / q)) })
                    .collect();
                SymmetricMatrix::from_fn(p, |i, j| values[i.abs_diff(j)])
            }
            TruthFamily::LeastFavorable { upsilon } => {
                let cfg = LeastFavorableConfig::build(p, n, q, c, *upsilon)?;
                let theta = sample_theta(&cfg, seed)?;
                cfg.materialize_sigma(&theta)?
            }
            TruthFamily::Csv { path } => {
                let m = read_matrix_csv(File::open(path)?)?;
                if m.dim() != p {
                    return Err(Error::DimensionMismatch {
                        expected: p,
                        found: m.dim(),
                    });
                }
                m
            }
        };
        let min = sigma.eigenvalues()?.last().copied().unwrap_or(0.0);
        if min <= 0.0 {
            return Err(Error::Config(format!(
                "{} at p = {p} is not positive definite (minimum eigenvalue {min:e})",
                self.describe()
            )));
        }
        Ok(TruthMatrix {
            model: self.describe(),
            q: Some(q),
            c: Some(c),
            sigma,
        })
    }
}

fn check_radius(radius: f64, c: f64, name: &str) -> Result<()> {
    if radius > c {
        return Err(Error::Config(format!(
            "{name} truth has column radius {radius} above c = {c}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{class_membership, SparsityClassSpec};

    fn member(t: &TruthMatrix, q: f64, c: f64) -> bool {
        class_membership(&t.sigma, &SparsityClassSpec::weak(q, c).unwrap()).member
    }

    #[test]
    fn block_banded_is_sparse_member() {
        let fam = TruthFamily::BlockBanded { block: 5, rho: 0.65 };
        let t = fam.materialize(0.0, 4.0, 100, 20, RngSeed::new(0)).unwrap();
        assert!(member(&t, 0.0, 4.0));
        let min = t.sigma.eigenvalues().unwrap()[19];
        assert!((min - 0.35).abs() < 1e-12);
        assert!(fam.materialize(0.0, 3.0, 100, 20, RngSeed::new(0)).is_err());
    }

    #[test]
    fn banded_default_bandwidth() {
        let fam = TruthFamily::Banded {
            epsilon: 0.2,
            bandwidth: None,
        };
        let t = fam.materialize(0.0, 4.0, 100, 12, RngSeed::new(0)).unwrap();
        assert_eq!(t.sigma.get(0, 2), 0.2);
        assert_eq!(t.sigma.get(0, 3), 0.0);
        assert!(member(&t, 0.0, 4.0));
    }

    #[test]
    fn capped_polynomial_is_weak_member() {
        let fam = TruthFamily::CappedPolynomial { kappa: 1.0 };
        for (n, p) in [(50, 50), (200, 200)] {
            let t = fam.materialize(0.5, 2.0, n, p, RngSeed::new(0)).unwrap();
            assert!(member(&t, 0.5, 2.0));
        }
        assert!(fam.materialize(0.0, 2.0, 50, 50, RngSeed::new(0)).is_err());
    }

    #[test]
    fn least_favorable_depends_on_seed_only() {
        let fam = TruthFamily::LeastFavorable { upsilon: 0.1 };
        let a = fam.materialize(0.0, 4.0, 20, 8, RngSeed::new(3)).unwrap();
        let b = fam.materialize(0.0, 4.0, 20, 8, RngSeed::new(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn family_json_is_tagged() {
        let fam: TruthFamily = serde_json::from_str(r#"{"family":"block-banded","block":5,"rho":0.65}"#).unwrap();
        assert_eq!(fam, TruthFamily::BlockBanded { block: 5, rho: 0.65 });
        let lf: TruthFamily = serde_json::from_str(r#"{"family":"least-favorable"}"#).unwrap();
        assert_eq!(lf, TruthFamily::LeastFavorable { upsilon: 0.1 });
    }
}
