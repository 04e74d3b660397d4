use std::collections::BTreeMap;

use serde::Serialize;

use super::gaussian::{cross_product_integral_with, spd_inverse};
use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;
use crate::model::{enumerate_lambda, LeastFavorableConfig};

/// Terms smaller than this end the envelope series.
pub const SERIES_TOLERANCE: f64 = 1e-15;
/// Hard cap on envelope series terms.
pub const SERIES_MAX_TERMS: usize = 10_000;
/// Target the envelope is compared against.
pub const CHI_SQUARE_TARGET: f64 = 0.75;

/// Hypergeometric law of the overlap `J` of two independent uniform
/// `k`-subsets of a `p_λ`-set: `P(J = j) = C(k,j)·C(p_λ−k, k−j)/C(p_λ, k)` for
/// `j = 0..=k`. Entries outside the support are zero.
pub fn overlap_distribution(k: usize, p_lambda: usize) -> Result<Vec<f64>> {
    if p_lambda < k {
        return Err(Error::InvalidArgument(format!(
            "overlap law needs p_lambda >= k, got p_lambda = {p_lambda}, k = {k}"
        )));
    }
    let mut out = vec![0.0; k + 1];
    let lo = (2 * k).saturating_sub(p_lambda);
    // log-weights by the ratio P(j+1)/P(j) = (k-j)² / ((j+1)(p_λ - 2k + j + 1))
    let mut logw = vec![0.0f64; k + 1 - lo];
    for j in lo..k {
        let kj = (k - j) as f64;
        let denom = (j + 1) as f64 * (p_lambda + j + 1 - 2 * k) as f64;
        logw[j + 1 - lo] = logw[j - lo] + 2.0 * kj.ln() - denom.ln();
    }
    let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logw.iter().map(|w| (w - top).exp()).sum();
    for (idx, w) in logw.iter().enumerate() {
        out[lo + idx] = (w - top).exp() / total;
    }
    Ok(out)
}

/// The dominating series for the mixture chi-square distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareEnvelope {
    /// `1/2 + (3/2)·Σ_{j≥1} (ratio·growth)^j`, absent when the series diverges.
    pub value: Option<f64>,
    /// `k² / (p/4 − 1 − k)`; infinite when the denominator is not positive.
    pub ratio: f64,
    /// `p^{2υ²}`, the per-term growth factor.
    pub growth: f64,
    pub terms: usize,
    pub divergent: bool,
    /// Whether the value is below 3/4.
    pub below_target: bool,
}

/// Evaluates the chi-square envelope series for `cfg`, truncating once a term
/// drops below 1e-15 (at most 10⁴ terms).
pub fn chi_square_mixture_bound(cfg: &LeastFavorableConfig) -> ChiSquareEnvelope {
    let p = cfg.p as f64;
    let k = cfg.k as f64;
    let growth = (2.0 * cfg.upsilon * cfg.upsilon * p.ln()).exp();
    if cfg.k == 0 {
        return ChiSquareEnvelope {
            value: Some(0.5),
            ratio: 0.0,
            growth,
            terms: 0,
            divergent: false,
            below_target: 0.5 < CHI_SQUARE_TARGET,
        };
    }
    let denom = p / 4.0 - 1.0 - k;
    let ratio = if denom > 0.0 { k * k / denom } else { f64::INFINITY };
    let step = ratio * growth;
    if !(step < 1.0) {
        return ChiSquareEnvelope {
            value: None,
            ratio,
            growth,
            terms: 0,
            divergent: true,
            below_target: false,
        };
    }
    let mut sum = 0.0;
    let mut term = 1.0;
    let mut terms = 0;
    while terms < SERIES_MAX_TERMS {
        term *= step;
        terms += 1;
        sum += term;
        if term < SERIES_TOLERANCE {
            break;
        }
    }
    let value = 0.5 + 1.5 * sum;
    ChiSquareEnvelope {
        value: Some(value),
        ratio,
        growth,
        terms,
        divergent: false,
        below_target: value < CHI_SQUARE_TARGET,
    }
}

/// Exact chi-square distance between the two halves of the mixture for row
/// `i = 1`, averaged over the remaining coordinates:
///
/// `Σ_{(b, c)} w(b, c)·[ (1/D(c)²) Σ_{a, a'} I(a, a')ⁿ − 1 ]`,
///
/// where `b` ranges over `{0,1}^{r−1}`, `c` over the distinct tails of Λ,
/// `D(c)` counts the first rows compatible with `c`, the weight is
/// `D(c) / (2^{r−1}·|Λ|)`, and `I` is the cross-product integral with base
/// `Σ₀(b, c)` (first row switched off).
pub fn exact_chi_square_small(cfg: &LeastFavorableConfig, n: usize, budget: u64) -> Result<f64> {
    let r = cfg.r;
    if r >= 32 || (1u64 << r) > budget {
        return Err(Error::BudgetExceeded {
            what: "exact chi-square over gamma".into(),
            count: format!("2^{r}"),
            budget,
        });
    }
    let lambdas = enumerate_lambda(cfg, budget)?;
    let total = lambdas.len() as f64;
    let mut by_tail: BTreeMap<&[Vec<usize>], Vec<&Vec<usize>>> = BTreeMap::new();
    for lam in &lambdas {
        by_tail.entry(&lam[1..]).or_default().push(&lam[0]);
    }
    let pair_count: u128 = by_tail.values().map(|v| (v.len() as u128).pow(2)).sum::<u128>() << (r - 1);
    if pair_count > budget as u128 {
        return Err(Error::BudgetExceeded {
            what: "exact chi-square integrals".into(),
            count: pair_count.to_string(),
            budget,
        });
    }
    let gammas = 1u64 << (r - 1);
    let mut acc = 0.0;
    for bits in 0..gammas {
        let mut gamma = vec![0u8; r];
        for m in 1..r {
            gamma[m] = ((bits >> (r - 1 - m)) & 1) as u8;
        }
        for (tail, heads) in &by_tail {
            let mut rows: Vec<Vec<usize>> = Vec::with_capacity(r);
            rows.push(heads[0].clone());
            rows.extend(tail.iter().cloned());
            let s0 = cfg.materialize_unchecked(&gamma, &rows);
            let inv0 = spd_inverse(&s0, "base covariance")?;
            let alt: Vec<SymmetricMatrix> = heads
                .iter()
                .map(|head| {
                    rows[0] = (*head).clone();
                    let mut g = gamma.clone();
                    g[0] = 1;
                    cfg.materialize_unchecked(&g, &rows)
                })
                .collect();
            let d = heads.len();
            let mut inner = 0.0;
            for a in 0..d {
                for b in a..d {
                    let v = cross_product_integral_with(&inv0, &s0, &alt[a], &alt[b])?.powi(n as i32);
                    inner += if a == b { v } else { 2.0 * v };
                }
            }
            let chi = inner / (d * d) as f64 - 1.0;
            acc += (d as f64 / total) * chi;
        }
    }
    Ok(acc / gammas as f64)
}
