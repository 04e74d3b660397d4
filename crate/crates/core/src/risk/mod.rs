//! Monte Carlo risk estimation over simulation grids, rate fits and
//! persistence of results.

mod export;
mod fit;
mod grid;
mod truth;

pub use export::{export, read_csv, read_json, write_csv, write_json, ExportFormat, CSV_COLUMNS};
pub use fit::{fit_groups, rate_fit, GroupFit, RateFit, MIN_FIT_RECORDS, MIN_REGRESSOR_SPREAD};
pub use grid::{run_grid, GridCell, GridConfig, Pairing};
pub use truth::{TruthFamily, TruthMatrix};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ErrorCategory, Result};
use crate::estimators::{estimate, EstimatorSpec};
use crate::losses::LossSpec;
use crate::sampling::{mle_covariance, GaussianSampler, RngSeed};

/// Largest tolerated fraction of failed replicates in a cell.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

/// Monte Carlo risk of one estimator under one loss at one `(n, p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRecord {
    pub cell_id: String,
    /// Description of the truth.
    pub model: String,
    pub q: Option<f64>,
    pub c: Option<f64>,
    pub estimator: EstimatorSpec,
    pub loss: LossSpec,
    pub n: usize,
    pub p: usize,
    pub replicates: usize,
    /// Replicates whose loss was undefined; excluded from the statistics.
    #[serde(default)]
    pub failures: usize,
    pub mean_risk: f64,
    pub std_error: f64,
    #[serde(default)]
    pub median_risk: Option<f64>,
    pub seed: RngSeed,
    /// Seconds spent on the cell; zero unless timing was requested.
    pub wall_time: f64,
}

/// Estimator actually run for `loss`: losses that need a positive definite
/// estimate force the Bregman guard on.
pub fn effective_estimator(est: &EstimatorSpec, loss: &LossSpec) -> EstimatorSpec {
    if loss.needs_positive_definite() {
        est.with_bregman_guard(true)
    } else {
        *est
    }
}

/// Risk of a single estimator and loss; see [`run_risk_cell_multi`].
pub fn run_risk_cell(
    truth: &TruthMatrix,
    est: &EstimatorSpec,
    loss: &LossSpec,
    n: usize,
    replicates: usize,
    seed: RngSeed,
) -> Result<RiskRecord> {
    let mut records = run_risk_cell_multi(
        truth,
        std::slice::from_ref(est),
        std::slice::from_ref(loss),
        n,
        replicates,
        seed,
        "0",
        false,
    )?;
    Ok(records.remove(0))
}

/// Risks of several estimators under several losses, all evaluated on the
/// same replicate samples.
///
/// Replicate `r` draws its sample from `seed.replicate(r)`. Replicates run in
/// parallel on the current rayon pool and are reduced in index order, so the
/// result does not depend on the number of threads. Records come out
/// estimator-major with ids `{cell_id}.{estimator}.{loss}`.
#[allow(clippy::too_many_arguments)]
pub fn run_risk_cell_multi(
    truth: &TruthMatrix,
    estimators: &[EstimatorSpec],
    losses: &[LossSpec],
    n: usize,
    replicates: usize,
    seed: RngSeed,
    cell_id: &str,
    record_wall_time: bool,
) -> Result<Vec<RiskRecord>> {
    if replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be at least 1".into()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("sample size must be at least 2, got {n}")));
    }
    if estimators.is_empty() || losses.is_empty() {
        return Err(Error::InvalidArgument("a cell needs at least one estimator and one loss".into()));
    }
    for est in estimators {
        est.validate()?;
    }
    let start = Instant::now();
    let sampler = GaussianSampler::new(&truth.sigma)?;
    let pairs: Vec<(EstimatorSpec, &LossSpec)> = estimators
        .iter()
        .flat_map(|e| losses.iter().map(move |l| (effective_estimator(e, l), l)))
        .collect();
    let mut distinct: Vec<EstimatorSpec> = Vec::new();
    for (e, _) in &pairs {
        if !distinct.contains(e) {
            distinct.push(*e);
        }
    }

    let outcomes: Vec<Result<Vec<std::result::Result<f64, String>>>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let x = sampler.sample(n, seed.replicate(r as u64))?;
            let s = mle_covariance(&x);
            let estimates: Vec<Result<_>> = distinct.iter().map(|e| estimate(&s, e, n)).collect();
            pairs
                .iter()
                .map(|(e, loss)| {
                    let idx = distinct.iter().position(|d| d == e).expect("estimator is listed");
                    let value = match &estimates[idx] {
                        Ok(est) => loss.evaluate(est, &truth.sigma),
                        Err(err) => Err(clone_domain(err)),
                    };
                    match value {
                        Ok(v) if v.is_finite() => Ok(Ok(v)),
                        Ok(v) => Ok(Err(format!("loss evaluated to {v}"))),
                        Err(err) if err.category() == ErrorCategory::Domain => Ok(Err(err.to_string())),
                        Err(err) => Err(err),
                    }
                })
                .collect()
        })
        .collect();

    let mut per_pair: Vec<Vec<f64>> = vec![Vec::with_capacity(replicates); pairs.len()];
    let mut first_failure: Vec<Option<String>> = vec![None; pairs.len()];
    for outcome in outcomes {
        for (k, value) in outcome?.into_iter().enumerate() {
            match value {
                Ok(v) => per_pair[k].push(v),
                Err(msg) => {
                    first_failure[k].get_or_insert(msg);
                }
            }
        }
    }
    let wall_time = if record_wall_time {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    };

    let mut records = Vec::with_capacity(pairs.len());
    for (k, ((est, loss), values)) in pairs.iter().zip(per_pair).enumerate() {
        let failures = replicates - values.len();
        if failures as f64 > MAX_FAILURE_FRACTION * replicates as f64 {
            return Err(Error::CellFailed {
                failures,
                replicates,
                first: first_failure[k].take().unwrap_or_default(),
            });
        }
        let (mean, se, median) = summarize(&values);
        records.push(RiskRecord {
            cell_id: format!("{cell_id}.{}.{}", k / losses.len(), k % losses.len()),
            model: truth.model.clone(),
            q: truth.q,
            c: truth.c,
            estimator: *est,
            loss: (*loss).clone(),
            n,
            p: truth.sigma.dim(),
            replicates,
            failures,
            mean_risk: mean,
            std_error: se,
            median_risk: Some(median),
            seed,
            wall_time,
        });
    }
    Ok(records)
}

// Estimator errors are shared by every loss that uses the estimate, so the
// domain ones are rebuilt from their message.
fn clone_domain(err: &Error) -> Error {
    match err {
        Error::Domain { context, eigenvalue } => Error::Domain {
            context: context.clone(),
            eigenvalue: *eigenvalue,
        },
        Error::NotPositiveSemidefinite { min_eigenvalue } => Error::NotPositiveSemidefinite {
            min_eigenvalue: *min_eigenvalue,
        },
        Error::NoConvergence { iterations, residual } => Error::NoConvergence {
            iterations: *iterations,
            residual: *residual,
        },
        other => Error::InvalidArgument(other.to_string()),
    }
}

/// Mean, standard error of the mean, and median. The sums run in index order.
fn summarize(values: &[f64]) -> (f64, f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    (mean, (var / m).sqrt(), median)
}
