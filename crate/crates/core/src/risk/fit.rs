use serde::Serialize;

use super::RiskRecord;
use crate::error::{Error, Result};

/// Fewest records a rate fit accepts.
pub const MIN_FIT_RECORDS: usize = 3;
/// Smallest accepted ratio between the extreme values of `ln p / n`.
pub const MIN_REGRESSOR_SPREAD: f64 = 4.0;

/// Least-squares fit of `ln(mean_risk)` on `ln(ln p / n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub cell_ids: Vec<String>,
    pub records: usize,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub target_exponent: f64,
}

impl RateFit {
    pub fn slope_error(&self) -> f64 {
        self.slope - self.target_exponent
    }
}

/// Fits the rate exponent over cells that share `(q, c, estimator, loss)`
/// and vary `(n, p)`. The target is `1 − q` for operator losses and
/// `1 − q/2` otherwise.
pub fn rate_fit(records: &[RiskRecord]) -> Result<RateFit> {
    if records.len() < MIN_FIT_RECORDS {
        return Err(Error::IllConditioned(format!(
            "a rate fit needs at least {MIN_FIT_RECORDS} records, got {}",
            records.len()
        )));
    }
    let first = &records[0];
    for r in records {
        if r.q != first.q || r.c != first.c || r.estimator != first.estimator || r.loss != first.loss {
            return Err(Error::InvalidArgument(format!(
                "record {} differs from {} in class, estimator or loss",
                r.cell_id, first.cell_id
            )));
        }
        if !(r.mean_risk > 0.0) || !r.mean_risk.is_finite() {
            return Err(Error::IllConditioned(format!(
                "record {} has non-positive mean risk {}",
                r.cell_id, r.mean_risk
            )));
        }
        if r.n == 0 || r.p < 2 {
            return Err(Error::IllConditioned(format!("record {} has n = {}, p = {}", r.cell_id, r.n, r.p)));
        }
    }
    let ratio: Vec<f64> = records.iter().map(|r| (r.p as f64).ln() / r.n as f64).collect();
    let lo = ratio.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratio.iter().copied().fold(0.0, f64::max);
    if hi < MIN_REGRESSOR_SPREAD * lo {
        return Err(Error::IllConditioned(format!(
            "ln p / n spans only a factor {:.3}, need at least {MIN_REGRESSOR_SPREAD}",
            hi / lo
        )));
    }
    let x: Vec<f64> = ratio.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = records.iter().map(|r| r.mean_risk.ln()).collect();
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    let q = first.q.unwrap_or(0.0);
    Ok(RateFit {
        cell_ids: records.iter().map(|r| r.cell_id.clone()).collect(),
        records: records.len(),
        slope,
        intercept,
        r_squared,
        target_exponent: first.loss.rate_exponent(q),
    })
}

/// A rate fit, or the reason it failed, for one `(q, c, estimator, loss)` group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupFit {
    pub q: Option<f64>,
    pub c: Option<f64>,
    pub estimator: String,
    pub loss: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<RateFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Groups records by `(q, c, estimator, loss)` in first-seen order and fits each group.
pub fn fit_groups(records: &[RiskRecord]) -> Vec<GroupFit> {
    let mut groups: Vec<Vec<RiskRecord>> = Vec::new();
    for r in records {
        match groups.iter_mut().find(|g| {
            let f = &g[0];
            f.q == r.q && f.c == r.c && f.estimator == r.estimator && f.loss == r.loss
        }) {
            Some(g) => g.push(r.clone()),
            None => groups.push(vec![r.clone()]),
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let f = &g[0];
            let (fit, error) = match rate_fit(&g) {
                Ok(fit) => (Some(fit), None),
                Err(e) => (None, Some(e.to_string())),
            };
            GroupFit {
                q: f.q,
                c: f.c,
                estimator: f.estimator.label(),
                loss: f.loss.label(),
                fit,
                error,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::EstimatorSpec;
    use crate::losses::LossSpec;
    use crate::matrix::NormIndex;
    use crate::sampling::RngSeed;

    fn record(n: usize, p: usize, risk: f64) -> RiskRecord {
        RiskRecord {
            cell_id: format!("{n}"),
            model: "synthetic".into(),
            q: Some(0.0),
            c: Some(4.0),
            estimator: EstimatorSpec::hard(2.0),
            loss: LossSpec::operator(NormIndex::Two),
            n,
            p,
            replicates: 1,
            failures: 0,
            mean_risk: risk,
            std_error: 0.0,
            median_risk: None,
            seed: RngSeed::new(0),
            wall_time: 0.0,
        }
    }

    #[test]
    fn exact_power_law_recovered() {
        let recs: Vec<_> = [100, 400, 1600, 6400]
            .iter()
            .map(|&n| {
                let x = (n as f64).ln() / n as f64;
                record(n, n, 3.0 * x.powf(0.8))
            })
            .collect();
        let fit = rate_fit(&recs).unwrap();
        assert!((fit.slope - 0.8).abs() < 1e-10);
        assert!((fit.intercept - 3.0f64.ln()).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.target_exponent, 1.0);
    }

    #[test]
    fn too_few_records_or_spread() {
        assert!(rate_fit(&[record(100, 100, 1.0), record(200, 200, 0.5)]).is_err());
        let narrow = [record(100, 100, 1.0), record(120, 120, 0.9), record(150, 150, 0.8)];
        assert!(matches!(rate_fit(&narrow), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn groups_are_fitted_separately() {
        let mut recs: Vec<_> = [100, 400, 1600]
            .iter()
            .map(|&n| record(n, n, 1.0 / n as f64))
            .collect();
        let mut other = record(100, 100, 1.0);
        other.loss = LossSpec::frobenius_squared(true);
        recs.push(other);
        let fits = fit_groups(&recs);
        assert_eq!(fits.len(), 2);
        assert!(fits[0].fit.is_some());
        assert!(fits[1].error.is_some());
    }
}
