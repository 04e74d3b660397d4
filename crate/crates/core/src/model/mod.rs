//! Sparsity classes and the least-favorable covariance family.

mod theta;

use serde::{Deserialize, Serialize};

pub use theta::{count_lambda, enumerate_lambda, enumerate_theta, sample_theta, LambdaCount, ThetaIndex};

use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;

/// Default enumeration budget for Θ and pair traversals.
pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// Smallest `c` with `v ∈ B_q(c)`: `max_k k·|v|_(k)^q` for `q > 0`, the
/// number of nonzero entries for `q = 0`.
pub fn weak_lq_radius(v: &[f64], q: f64) -> f64 {
    if q == 0.0 {
        return v.iter().filter(|x| **x != 0.0).count() as f64;
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    mags.iter()
        .enumerate()
        .map(|(k, m)| (k + 1) as f64 * m.powf(q))
        .fold(0.0, f64::max)
}

fn strong_lq_sum(v: &[f64], q: f64) -> f64 {
    if q == 0.0 {
        return weak_lq_radius(v, 0.0);
    }
    v.iter().filter(|x| **x != 0.0).map(|x| x.abs().powf(q)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparsityKind {
    /// Columns in a weak ℓq ball.
    Weak,
    /// Column ℓq sums bounded (the uniformity class).
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityClassSpec {
    q: f64,
    radius: f64,
    kind: SparsityKind,
}

impl SparsityClassSpec {
    pub fn new(q: f64, radius: f64, kind: SparsityKind) -> Result<Self> {
        check_q(q)?;
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
        }
        Ok(Self { q, radius, kind })
    }

    pub fn weak(q: f64, radius: f64) -> Result<Self> {
        Self::new(q, radius, SparsityKind::Weak)
    }

    pub fn strong(q: f64, radius: f64) -> Result<Self> {
        Self::new(q, radius, SparsityKind::Strong)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn kind(&self) -> SparsityKind {
        self.kind
    }
}

fn check_q(q: f64) -> Result<()> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("q must lie in [0, 1), got {q}")));
    }
    Ok(())
}

/// Outcome of a class-membership check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Membership {
    pub member: bool,
    /// First (0-based) column whose radius exceeds the class radius.
    pub witness: Option<usize>,
    /// Largest column radius observed.
    pub max_radius: f64,
}

/// Checks every off-diagonal column of `s` against the class radius.
pub fn class_membership(s: &SymmetricMatrix, spec: &SparsityClassSpec) -> Membership {
    let p = s.dim();
    let mut witness = None;
    let mut max_radius = 0.0f64;
    let mut column = Vec::with_capacity(p.saturating_sub(1));
    for j in 0..p {
        column.clear();
        // symmetric: column j equals row j
        column.extend(s.row(j).iter().enumerate().filter(|(i, _)| *i != j).map(|(_, v)| *v));
        let radius = match spec.kind {
            SparsityKind::Weak => weak_lq_radius(&column, spec.q),
            SparsityKind::Strong => strong_lq_sum(&column, spec.q),
        };
        max_radius = max_radius.max(radius);
        if radius > spec.radius && witness.is_none() {
            witness = Some(j);
        }
    }
    Membership {
        member: witness.is_none(),
        witness,
        max_radius,
    }
}

/// Parameters of the least-favorable family: dimension, sample size, class
/// `(q, c)`, scale `υ`, and the derived `r = ⌊p/2⌋`, `ε = υ·sqrt(ln p / n)`,
/// `k = max(⌈c·ε^{-q}/2⌉ - 1, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeastFavorableConfig {
    pub p: usize,
    pub n: usize,
    pub q: f64,
    pub c: f64,
    pub upsilon: f64,
    pub r: usize,
    pub k: usize,
    pub epsilon: f64,
}

/// Default `υ`.
pub const DEFAULT_UPSILON: f64 = 0.1;

impl LeastFavorableConfig {
    pub fn build(p: usize, n: usize, q: f64, c: f64, upsilon: f64) -> Result<Self> {
        if p < 2 {
            return Err(Error::Config(format!("p must be at least 2, got {p}")));
        }
        if n < 1 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        check_q(q).map_err(|e| Error::Config(e.to_string()))?;
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Config(format!("c must be positive, got {c}")));
        }
        if !(upsilon > 0.0) || !upsilon.is_finite() {
            return Err(Error::Config(format!("upsilon must be positive, got {upsilon}")));
        }
        let r = p / 2;
        let epsilon = upsilon * ((p as f64).ln() / n as f64).sqrt();
        let raw = (c * epsilon.powf(-q) / 2.0).ceil() - 1.0;
        let k = if raw > 0.0 { raw as usize } else { 0 };
        let product = 2.0 * k as f64 * epsilon;
        if product >= 1.0 / 3.0 {
            return Err(Error::Config(format!(
                "2·k·epsilon = 2·{k}·{epsilon:.6} = {product:.6} is not below 1/3; members would not be diagonally dominant"
            )));
        }
        if k > r {
            return Err(Error::Config(format!(
                "row patterns need k = {k} columns but only r = {r} are available"
            )));
        }
        Ok(Self {
            p,
            n,
            q,
            c,
            upsilon,
            r,
            k,
            epsilon,
        })
    }

    /// Whether `c ≤ M·n^{(1-q)/2}·(ln p)^{-(3-q)/2}` holds for the supplied `M`.
    pub fn radius_condition_holds(&self, m: f64) -> bool {
        let (n, lp) = (self.n as f64, (self.p as f64).ln());
        self.c <= m * n.powf((1.0 - self.q) / 2.0) * lp.powf(-(3.0 - self.q) / 2.0)
    }

    /// The two admissibility conditions on `υ`, for given `M`, `τ > 1` and `β > 1`:
    /// `υ^{1-q} < min(1/3, τ-1)/M` and `υ² < (β-1)/(54β)`.
    pub fn upsilon_conditions(&self, m: f64, tau: f64, beta: f64) -> (bool, bool) {
        let first = self.upsilon.powf(1.0 - self.q) < (1.0f64 / 3.0).min(tau - 1.0) / m;
        let second = self.upsilon * self.upsilon < (beta - 1.0) / (54.0 * beta);
        (first, second)
    }

    /// First column index (1-based) available to row patterns.
    pub fn first_pattern_column(&self) -> usize {
        self.p - self.r + 1
    }

    /// `Σ(θ) = I + ε·Σ_m γ_m A_m(λ_m)`.
    pub fn materialize_sigma(&self, theta: &ThetaIndex) -> Result<SymmetricMatrix> {
        theta.validate(self)?;
        Ok(self.materialize_unchecked(&theta.gamma, &theta.lambda))
    }

    pub(crate) fn materialize_unchecked(&self, gamma: &[u8], lambda: &[Vec<usize>]) -> SymmetricMatrix {
        let p = self.p;
        let mut data = vec![0.0; p * p];
        for i in 0..p {
            data[i * p + i] = 1.0;
        }
        for (m, (g, row)) in gamma.iter().zip(lambda).enumerate() {
            if *g == 1 {
                for &col in row {
                    let j = col - 1;
                    data[m * p + j] = self.epsilon;
                    data[j * p + m] = self.epsilon;
                }
            }
        }
        SymmetricMatrix::from_upper(p, data)
    }
}

impl<'de> Deserialize<'de> for LeastFavorableConfig {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            p: usize,
            n: usize,
            q: f64,
            c: f64,
            #[serde(default = "default_upsilon")]
            upsilon: f64,
            r: Option<usize>,
            k: Option<usize>,
            epsilon: Option<f64>,
        }
        fn default_upsilon() -> f64 {
            DEFAULT_UPSILON
        }
        let raw = Raw::deserialize(de)?;
        let cfg = LeastFavorableConfig::build(raw.p, raw.n, raw.q, raw.c, raw.upsilon)
            .map_err(serde::de::Error::custom)?;
        let eps_ok = raw.epsilon.is_none_or(|e| (e - cfg.epsilon).abs() <= 1e-12 * cfg.epsilon.max(1.0));
        if raw.r.is_some_and(|r| r != cfg.r) || raw.k.is_some_and(|k| k != cfg.k) || !eps_ok {
            return Err(serde::de::Error::custom(
                "derived fields r, k, epsilon disagree with p, n, q, c, upsilon",
            ));
        }
        Ok(cfg)
    }
}
