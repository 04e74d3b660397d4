use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;
use crate::model::{enumerate_theta, LeastFavorableConfig};
use crate::sampling::RngSeed;

/// Minimum sample count accepted by [`tv_affinity_mc`].
pub const MIN_AFFINITY_SAMPLES: usize = 1000;

const CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    /// Mean vector; `None` means zero.
    pub mean: Option<Vec<f64>>,
    pub covariance: SymmetricMatrix,
}

/// Finite Gaussian mixture whose observation is `n` i.i.d. draws from one
/// component picked once by weight.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    n: usize,
    components: Vec<MixtureComponent>,
}

impl MixtureSpec {
    /// Zero-mean mixture. Components with bit-identical covariances are merged.
    pub fn new(n: usize, components: Vec<(f64, SymmetricMatrix)>) -> Result<Self> {
        Self::with_means(
            n,
            components
                .into_iter()
                .map(|(weight, covariance)| MixtureComponent {
                    weight,
                    mean: None,
                    covariance,
                })
                .collect(),
        )
    }

    pub fn with_means(n: usize, components: Vec<MixtureComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("mixture needs at least one component".into()))?;
        let p = first.covariance.dim();
        let mut total = 0.0;
        for c in &components {
            if c.covariance.dim() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: c.covariance.dim(),
                });
            }
            if let Some(mu) = &c.mean {
                if mu.len() != p {
                    return Err(Error::DimensionMismatch {
                        expected: p,
                        found: mu.len(),
                    });
                }
            }
            if !(c.weight >= 0.0) || !c.weight.is_finite() {
                return Err(Error::InvalidArgument(format!("mixture weight {} is invalid", c.weight)));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}, not 1")));
        }
        let mut merged: Vec<MixtureComponent> = Vec::new();
        let mut seen: HashMap<(Vec<u64>, Vec<u64>), usize> = HashMap::new();
        for c in components {
            let key = (
                c.covariance.as_slice().iter().map(|v| v.to_bits()).collect(),
                c.mean.iter().flatten().map(|v| v.to_bits()).collect(),
            );
            match seen.get(&key) {
                Some(&idx) => merged[idx].weight += c.weight,
                None => {
                    seen.insert(key, merged.len());
                    merged.push(c);
                }
            }
        }
        Ok(Self { n, components: merged })
    }

    pub fn dim(&self) -> usize {
        self.components[0].covariance.dim()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffinityEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: RngSeed,
}

struct Prepared {
    log_weight: f64,
    // log normalising constant of one observation: -(p ln 2π + ln det Σ)/2
    log_norm: f64,
    inv: Vec<f64>,
    inv_mean: Option<Vec<f64>>,
    mean_quad: f64,
    mean: Option<Vec<f64>>,
    root: Vec<f64>,
}

fn prepare(m: &MixtureSpec) -> Result<(Vec<Prepared>, Vec<f64>)> {
    let p = m.dim();
    let mut out = Vec::with_capacity(m.components.len());
    for c in &m.components {
        let eig = c.covariance.sym_eigen()?;
        if eig.min_eigenvalue() <= 0.0 {
            return Err(Error::domain("mixture covariance must be positive definite", eig.min_eigenvalue()));
        }
        let logdet: f64 = eig.eigenvalues().iter().map(|l| l.ln()).sum();
        let inv = eig.map_spectrum(|l| 1.0 / l)?;
        let root = eig.map_spectrum(f64::sqrt)?;
        let inv_mean = c.mean.as_ref().map(|mu| {
            (0..p)
                .map(|i| inv.row(i).iter().zip(mu).map(|(a, b)| a * b).sum())
                .collect::<Vec<f64>>()
        });
        let mean_quad = match (&c.mean, &inv_mean) {
            (Some(mu), Some(im)) => mu.iter().zip(im).map(|(a, b)| a * b).sum(),
            _ => 0.0,
        };
        out.push(Prepared {
            log_weight: c.weight.ln(),
            log_norm: -0.5 * (p as f64 * (2.0 * std::f64::consts::PI).ln() + logdet),
            inv: inv.as_slice().to_vec(),
            inv_mean,
            mean_quad,
            mean: c.mean.clone(),
            root: root.as_slice().to_vec(),
        });
    }
    let mut cumulative = Vec::with_capacity(m.components.len());
    let mut acc = 0.0;
    for c in &m.components {
        acc += c.weight;
        cumulative.push(acc);
    }
    Ok((out, cumulative))
}

/// Log density of `n` observations summarised by the scatter `t = Σ x xᵀ` and the sum `s = Σ x`.
fn log_density(comps: &[Prepared], n: usize, t: &[f64], s: &[f64]) -> f64 {
    let mut terms = Vec::with_capacity(comps.len());
    for c in comps {
        if c.log_weight == f64::NEG_INFINITY {
            continue;
        }
        let trace: f64 = c.inv.iter().zip(t).map(|(a, b)| a * b).sum();
        let mut quad = trace;
        if let Some(im) = &c.inv_mean {
            let cross: f64 = im.iter().zip(s).map(|(a, b)| a * b).sum();
            quad += -2.0 * cross + n as f64 * c.mean_quad;
        }
        terms.push(c.log_weight + n as f64 * c.log_norm - 0.5 * quad);
    }
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    top + terms.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
}

fn pick(cumulative: &[f64], u: f64) -> usize {
    let target = u * cumulative[cumulative.len() - 1];
    cumulative
        .iter()
        .position(|&c| target < c)
        .unwrap_or(cumulative.len() - 1)
}

/// Monte Carlo estimate of `‖P ∧ Q‖ = ∫ min(p, q)`.
///
/// Draws from `M = (P + Q)/2` and averages `min(p, q)/m = 2/(1 + e^{|ln p − ln q|})`,
/// which lies in `[0, 1]`. Samples are processed in fixed chunks, chunk `c`
/// on `seed.replicate(c)`, so the estimate does not depend on thread count.
pub fn tv_affinity_mc(pm: &MixtureSpec, qm: &MixtureSpec, samples: usize, seed: RngSeed) -> Result<AffinityEstimate> {
    if pm.dim() != qm.dim() {
        return Err(Error::DimensionMismatch {
            expected: pm.dim(),
            found: qm.dim(),
        });
    }
    if pm.n() != qm.n() {
        return Err(Error::InvalidArgument(format!(
            "mixtures use different sample sizes {} and {}",
            pm.n(),
            qm.n()
        )));
    }
    if samples < MIN_AFFINITY_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "affinity estimation needs at least {MIN_AFFINITY_SAMPLES} samples, got {samples}"
        )));
    }
    let (p, n) = (pm.dim(), pm.n());
    let (pc, pcum) = prepare(pm)?;
    let (qc, qcum) = prepare(qm)?;
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<Result<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = seed.replicate(chunk as u64).rng();
            let count = CHUNK.min(samples - chunk * CHUNK);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            let mut z = vec![0.0; p];
            let mut x = vec![0.0; p];
            let mut t = vec![0.0; p * p];
            let mut s = vec![0.0; p];
            for _ in 0..count {
                let from_p = rng.random::<bool>();
                let (comps, cum) = if from_p { (&pc, &pcum) } else { (&qc, &qcum) };
                let comp = &comps[pick(cum, rng.random::<f64>())];
                t.iter_mut().for_each(|v| *v = 0.0);
                s.iter_mut().for_each(|v| *v = 0.0);
                for _ in 0..n {
                    z.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
                    for i in 0..p {
                        x[i] = comp.root[i * p..(i + 1) * p].iter().zip(&z).map(|(a, b)| a * b).sum();
                    }
                    if let Some(mu) = &comp.mean {
                        x.iter_mut().zip(mu).for_each(|(a, b)| *a += b);
                    }
                    for i in 0..p {
                        s[i] += x[i];
                        let xi = x[i];
                        for (tv, xj) in t[i * p..(i + 1) * p].iter_mut().zip(&x) {
                            *tv += xi * xj;
                        }
                    }
                }
                let lp = log_density(&pc, n, &t, &s);
                let lq = log_density(&qc, n, &t, &s);
                if lp.is_nan() || lq.is_nan() || (lp.is_infinite() && lq.is_infinite()) {
                    return Err(Error::InvalidArgument(format!(
                        "non-finite log-densities ({lp}, {lq}) in affinity estimation"
                    )));
                }
                let v = 2.0 / (1.0 + (lp - lq).abs().exp());
                sum += v;
                sum_sq += v * v;
            }
            Ok((sum, sum_sq))
        })
        .collect();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for part in partial {
        let (a, b) = part?;
        sum += a;
        sum_sq += b;
    }
    let count = samples as f64;
    let mean = sum / count;
    let var = ((sum_sq - count * mean * mean) / (count - 1.0)).max(0.0);
    Ok(AffinityEstimate {
        value: mean.clamp(0.0, 1.0),
        std_error: (var / count).sqrt(),
        samples,
        seed,
    })
}

/// The two halves `P̄_{row,0}` and `P̄_{row,1}` of the uniform mixture over Θ,
/// split by the value of `γ_row` (0-based `row`).
pub fn row_mixtures(cfg: &LeastFavorableConfig, row: usize, n: usize, budget: u64) -> Result<(MixtureSpec, MixtureSpec)> {
    if row >= cfg.r {
        return Err(Error::InvalidArgument(format!("row {row} is outside 0..{}", cfg.r)));
    }
    let all = enumerate_theta(cfg, budget)?;
    let (mut zero, mut one) = (Vec::new(), Vec::new());
    for theta in &all {
        let sigma = cfg.materialize_unchecked(&theta.gamma, &theta.lambda);
        if theta.gamma[row] == 0 {
            zero.push(sigma);
        } else {
            one.push(sigma);
        }
    }
    let uniform = |v: Vec<SymmetricMatrix>| {
        let w = 1.0 / v.len() as f64;
        let comps: Vec<(f64, SymmetricMatrix)> = v.into_iter().map(|s| (w, s)).collect();
        // exact 1/len weights can sum to 1 ± a few ulps
        MixtureSpec::new(n, comps)
    };
    Ok((uniform(zero)?, uniform(one)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_mixtures_have_unit_affinity() {
        let s = SymmetricMatrix::from_rows(&[[1.0, 0.2], [0.2, 1.0]]).unwrap();
        let m = MixtureSpec::new(3, vec![(0.5, s.clone()), (0.5, SymmetricMatrix::identity(2))]).unwrap();
        let est = tv_affinity_mc(&m, &m, 2000, RngSeed::new(1)).unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn shifted_normals_match_closed_form() {
        let one = SymmetricMatrix::identity(1);
        let p = MixtureSpec::new(1, vec![(1.0, one.clone())]).unwrap();
        let q = MixtureSpec::with_means(
            1,
            vec![MixtureComponent {
                weight: 1.0,
                mean: Some(vec![1.0]),
                covariance: one,
            }],
        )
        .unwrap();
        let est = tv_affinity_mc(&p, &q, 100_000, RngSeed::new(4)).unwrap();
        // 2Φ(−1/2)
        let expected = 0.617_075_077_117_9;
        assert!((est.value - expected).abs() < 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn duplicate_components_are_merged() {
        let i = SymmetricMatrix::identity(2);
        let m = MixtureSpec::new(1, vec![(0.25, i.clone()), (0.25, i.clone()), (0.5, i.scale(2.0))]).unwrap();
        assert_eq!(m.components().len(), 2);
        assert_eq!(m.components()[0].weight, 0.5);
    }

    #[test]
    fn invalid_inputs() {
        let i = SymmetricMatrix::identity(2);
        assert!(MixtureSpec::new(1, vec![(0.4, i.clone())]).is_err());
        assert!(MixtureSpec::new(1, vec![]).is_err());
        let m = MixtureSpec::new(1, vec![(1.0, i)]).unwrap();
        assert!(tv_affinity_mc(&m, &m, 10, RngSeed::new(0)).is_err());
    }

    #[test]
    fn deterministic_across_thread_pools() {
        let cfg = LeastFavorableConfig::build(6, 10, 0.0, 4.0, 0.3).unwrap();
        let (p0, p1) = row_mixtures(&cfg, 0, 10, 1_000_000).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| tv_affinity_mc(&p0, &p1, 3000, RngSeed::new(9)).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
