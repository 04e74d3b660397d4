//! Numerical evaluation of the minimax lower-bound machinery over the
//! least-favorable family.

mod affinity;
mod chi_square;
mod gaussian;

pub use affinity::{
    row_mixtures, tv_affinity_mc, AffinityEstimate, MixtureComponent, MixtureSpec, MIN_AFFINITY_SAMPLES,
};
pub use chi_square::{
    chi_square_mixture_bound, exact_chi_square_small, overlap_distribution, ChiSquareEnvelope, CHI_SQUARE_TARGET,
    SERIES_MAX_TERMS, SERIES_TOLERANCE,
};
pub use gaussian::{cross_product_integral, overlap_structure, OverlapStructure};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::NormIndex;
use crate::model::{enumerate_theta, LeastFavorableConfig};
use crate::sampling::RngSeed;

/// Floor `1 − sqrt(3)/2` implied for the affinity constant when the
/// chi-square distance stays below 3/4.
pub fn affinity_floor() -> f64 {
    1.0 - CHI_SQUARE_TARGET.sqrt()
}

/// Per-comparison loss: the closed-form bound `(kε)²/p` and, when the number
/// of pairs fits `exact_budget`, the brute-force minimum of
/// `‖Σ(θ) − Σ(θ′)‖₂² / H(γ, γ′)` over pairs with `H ≥ 1`.
pub fn per_comparison_alpha(cfg: &LeastFavorableConfig, exact_budget: u64) -> (f64, Option<f64>) {
    let bound = (cfg.k as f64 * cfg.epsilon).powi(2) / cfg.p as f64;
    (bound, exact_alpha(cfg, exact_budget).ok())
}

fn exact_alpha(cfg: &LeastFavorableConfig, budget: u64) -> Result<f64> {
    let thetas = enumerate_theta(cfg, budget)?;
    let m = thetas.len() as u128;
    let pairs = m * m.saturating_sub(1) / 2;
    if pairs > budget as u128 {
        return Err(Error::BudgetExceeded {
            what: "per-comparison pairs".into(),
            count: pairs.to_string(),
            budget,
        });
    }
    let sigmas: Vec<_> = thetas
        .iter()
        .map(|t| cfg.materialize_unchecked(&t.gamma, &t.lambda))
        .collect();
    let mut best = f64::INFINITY;
    for a in 0..thetas.len() {
        for b in a + 1..thetas.len() {
            let h = thetas[a]
                .gamma
                .iter()
                .zip(&thetas[b].gamma)
                .filter(|(x, y)| x != y)
                .count();
            if h == 0 {
                continue;
            }
            let diff = sigmas[a].sub(&sigmas[b])?;
            let loss = diff.operator_norm(NormIndex::Two)?.powi(2) / h as f64;
            best = best.min(loss);
        }
    }
    Ok(best)
}

/// Risk lower bound for squared spectral loss, `(1/4)·α·(r/2)·affinity`,
/// using the closed-form `α = (kε)²/p`.
pub fn assemble_lower_bound(cfg: &LeastFavorableConfig, affinity: f64) -> f64 {
    let alpha = (cfg.k as f64 * cfg.epsilon).powi(2) / cfg.p as f64;
    0.25 * alpha * (cfg.r as f64 / 2.0) * affinity
}

/// The minimax rate `c²(ln p / n)^{1−q}`.
pub fn rate_target(cfg: &LeastFavorableConfig) -> f64 {
    cfg.c * cfg.c * ((cfg.p as f64).ln() / cfg.n as f64).powf(1.0 - cfg.q)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundReport {
    pub config: LeastFavorableConfig,
    pub alpha_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_exact: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi_square_exact: Option<f64>,
    /// Envelope value; `null` when the series diverges.
    pub chi_square_envelope: Option<f64>,
    pub envelope_divergent: bool,
    pub envelope_ratio: f64,
    pub envelope_below_target: bool,
    pub affinity_estimate: AffinityEstimate,
    pub affinity_floor: f64,
    pub lower_bound: f64,
    pub rate_target: f64,
}

/// Runs every lower-bound computation for `cfg` at its own sample size.
///
/// The affinity is measured between the two halves of the mixture split on
/// the first row. This needs Θ enumerated within `budget`; with `k = 0` every
/// member is the identity and the affinity is 1 without enumeration.
pub fn lower_bound_report(
    cfg: &LeastFavorableConfig,
    samples: usize,
    seed: RngSeed,
    budget: u64,
) -> Result<LowerBoundReport> {
    let (alpha_bound, alpha_exact) = per_comparison_alpha(cfg, budget);
    let envelope = chi_square_mixture_bound(cfg);
    let (chi_square_exact, affinity) = if cfg.k == 0 {
        let trivial = AffinityEstimate {
            value: 1.0,
            std_error: 0.0,
            samples: 0,
            seed,
        };
        (Some(0.0), trivial)
    } else {
        let chi = exact_chi_square_small(cfg, cfg.n, budget)?;
        let (p0, p1) = row_mixtures(cfg, 0, cfg.n, budget)?;
        (Some(chi), tv_affinity_mc(&p0, &p1, samples, seed)?)
    };
    Ok(LowerBoundReport {
        config: *cfg,
        alpha_bound,
        alpha_exact,
        chi_square_exact,
        chi_square_envelope: envelope.value,
        envelope_divergent: envelope.divergent,
        envelope_ratio: envelope.ratio,
        envelope_below_target: envelope.below_target,
        affinity_estimate: affinity,
        affinity_floor: affinity_floor(),
        lower_bound: assemble_lower_bound(cfg, affinity.value),
        rate_target: rate_target(cfg),
    })
}
