//! Entrywise thresholding estimators and their spectral corrections.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;

pub const DEFAULT_GAMMA: f64 = 2.0;
pub const DEFAULT_ETA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdRule {
    /// Keep entries with `|σ*| ≥ t`, zero the rest.
    Hard,
    /// `sign(σ*)(|σ*| − t)₊`.
    Soft,
    /// `σ*(1 − |t/σ*|^η)₊`.
    AdaptiveLasso { eta: f64 },
}

impl ThresholdRule {
    pub fn name(&self) -> &'static str {
        match self {
            ThresholdRule::Hard => "hard",
            ThresholdRule::Soft => "soft",
            ThresholdRule::AdaptiveLasso { .. } => "alasso",
        }
    }

    fn apply(&self, x: f64, t: f64) -> f64 {
        match *self {
            ThresholdRule::Hard => {
                if x.abs() >= t {
                    x
                } else {
                    0.0
                }
            }
            ThresholdRule::Soft => x.signum() * (x.abs() - t).max(0.0),
            ThresholdRule::AdaptiveLasso { eta } => {
                if x == 0.0 {
                    0.0
                } else {
                    x * (1.0 - (t / x).abs().powf(eta)).max(0.0)
                }
            }
        }
    }
}

/// How the eigenvalue window of the Bregman guard is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuardReading {
    /// `1/L ≤ λ_min` and `λ_max ≤ L`.
    #[default]
    BothEigenvalues,
    /// `1/L ≤ λ_min ≤ L`; bounds only the smallest eigenvalue.
    LambdaMinOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Correction {
    PsdProject,
    BregmanGuard,
}

/// Threshold rule, its constant γ, and optional corrections applied in the
/// order threshold, PSD projection, Bregman guard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSpec {
    pub rule: ThresholdRule,
    pub gamma: f64,
    pub psd_project: bool,
    pub bregman_guard: bool,
    pub keep_diagonal: bool,
    pub guard_reading: GuardReading,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self::hard(DEFAULT_GAMMA)
    }
}

impl EstimatorSpec {
    pub fn new(rule: ThresholdRule, gamma: f64) -> Result<Self> {
        let spec = Self {
            rule,
            gamma,
            psd_project: false,
            bregman_guard: false,
            keep_diagonal: false,
            guard_reading: GuardReading::BothEigenvalues,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn hard(gamma: f64) -> Self {
        Self::new(ThresholdRule::Hard, gamma).expect("gamma must be positive")
    }

    pub fn with_psd_project(mut self, on: bool) -> Self {
        self.psd_project = on;
        self
    }

    pub fn with_bregman_guard(mut self, on: bool) -> Self {
        self.bregman_guard = on;
        self
    }

    pub fn with_keep_diagonal(mut self, on: bool) -> Self {
        self.keep_diagonal = on;
        self
    }

    pub fn with_guard_reading(mut self, reading: GuardReading) -> Self {
        self.guard_reading = reading;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {}", self.gamma)));
        }
        if let ThresholdRule::AdaptiveLasso { eta } = self.rule {
            if !(eta >= 1.0) || !eta.is_finite() {
                return Err(Error::InvalidArgument(format!("adaptive-lasso eta must be >= 1, got {eta}")));
            }
        }
        Ok(())
    }

    pub fn corrections(&self) -> Vec<Correction> {
        let mut out = Vec::new();
        if self.psd_project {
            out.push(Correction::PsdProject);
        }
        if self.bregman_guard {
            out.push(Correction::BregmanGuard);
        }
        out
    }

    /// Short label such as `hard(2)+psd`.
    pub fn label(&self) -> String {
        let mut s = match self.rule {
            ThresholdRule::AdaptiveLasso { eta } => format!("alasso{eta}({})", self.gamma),
            r => format!("{}({})", r.name(), self.gamma),
        };
        if self.keep_diagonal {
            s.push_str("+diag");
        }
        if self.psd_project {
            s.push_str("+psd");
        }
        if self.bregman_guard {
            s.push_str("+guard");
            if self.guard_reading == GuardReading::LambdaMinOnly {
                s.push_str("-min");
            }
        }
        s
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Serialize, Deserialize)]
struct EstimatorSpecJson {
    rule: String,
    #[serde(default = "default_gamma")]
    gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    #[serde(default)]
    corrections: Vec<Correction>,
    #[serde(default)]
    keep_diagonal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    guard_reading: Option<GuardReading>,
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

impl Serialize for EstimatorSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let eta = match self.rule {
            ThresholdRule::AdaptiveLasso { eta } => Some(eta),
            _ => None,
        };
        EstimatorSpecJson {
            rule: self.rule.name().to_string(),
            gamma: self.gamma,
            eta,
            corrections: self.corrections(),
            keep_diagonal: self.keep_diagonal,
            guard_reading: self.bregman_guard.then_some(self.guard_reading),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for EstimatorSpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = EstimatorSpecJson::deserialize(de)?;
        let rule = match raw.rule.as_str() {
            "hard" => ThresholdRule::Hard,
            "soft" => ThresholdRule::Soft,
            "alasso" | "adaptive-lasso" => ThresholdRule::AdaptiveLasso {
                eta: raw.eta.unwrap_or(DEFAULT_ETA),
            },
            other => return Err(D::Error::custom(format!("unknown threshold rule '{other}'"))),
        };
        let spec = EstimatorSpec {
            rule,
            gamma: raw.gamma,
            psd_project: raw.corrections.contains(&Correction::PsdProject),
            bregman_guard: raw.corrections.contains(&Correction::BregmanGuard),
            keep_diagonal: raw.keep_diagonal,
            guard_reading: raw.guard_reading.unwrap_or_default(),
        };
        spec.validate().map_err(D::Error::custom)?;
        Ok(spec)
    }
}

/// `t = γ·sqrt(ln p / n)`.
pub fn threshold_level(gamma: f64, p: usize, n: usize) -> f64 {
    gamma * ((p as f64).ln() / n as f64).sqrt()
}

/// Applies the entrywise rule at level `γ·sqrt(ln p / n)`. The diagonal is
/// thresholded too unless `keep_diagonal` is set.
pub fn threshold_estimate(sigma_star: &SymmetricMatrix, spec: &EstimatorSpec, n: usize) -> Result<SymmetricMatrix> {
    spec.validate()?;
    let p = sigma_star.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    if p < 2 {
        return Err(Error::InvalidArgument("thresholding needs p >= 2".into()));
    }
    let t = threshold_level(spec.gamma, p, n);
    Ok(sigma_star.map_entries(|i, j, x| {
        if i == j && spec.keep_diagonal {
            x
        } else {
            spec.rule.apply(x, t)
        }
    }))
}

/// Clips negative eigenvalues to zero.
pub fn psd_project(sigma_hat: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let eig = sigma_hat.sym_eigen()?;
    if eig.min_eigenvalue() >= 0.0 {
        return Ok(sigma_hat.clone());
    }
    let clipped: Vec<f64> = eig.eigenvalues().iter().map(|&l| l.max(0.0)).collect();
    eig.reconstruct_with(&clipped)
}

/// Returns `Σ̂` when its spectrum sits inside `[1/L, L]` with `L = max(ln n, ln p)`
/// (under the chosen reading), and `I_p` otherwise.
pub fn bregman_guard(sigma_hat: &SymmetricMatrix, n: usize, reading: GuardReading) -> Result<SymmetricMatrix> {
    if n < 2 {
        return Err(Error::InvalidArgument("the Bregman guard needs n >= 2".into()));
    }
    let p = sigma_hat.dim();
    let l = (n as f64).ln().max((p as f64).ln());
    let ev = sigma_hat.eigenvalues()?;
    let (max, min) = (ev[0], ev[ev.len() - 1]);
    let inside = match reading {
        GuardReading::BothEigenvalues => 1.0 / l <= min && max <= l,
        GuardReading::LambdaMinOnly => 1.0 / l <= min && min <= l,
    };
    Ok(if inside {
        sigma_hat.clone()
    } else {
        SymmetricMatrix::identity(p)
    })
}

/// Full pipeline: threshold, then the enabled corrections.
pub fn estimate(sigma_star: &SymmetricMatrix, spec: &EstimatorSpec, n: usize) -> Result<SymmetricMatrix> {
    let mut out = threshold_estimate(sigma_star, spec, n)?;
    if spec.psd_project {
        out = psd_project(&out)?;
    }
    if spec.bregman_guard {
        out = bregman_guard(&out, n, spec.guard_reading)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_survives_hard_threshold() {
        let i = SymmetricMatrix::identity(5);
        assert_eq!(threshold_estimate(&i, &EstimatorSpec::hard(2.0), 100).unwrap(), i);
    }

    #[test]
    fn rule_cases() {
        assert_eq!(ThresholdRule::Hard.apply(0.05, 0.1), 0.0);
        assert_eq!(ThresholdRule::Hard.apply(-0.05, 0.01), -0.05);
        assert_eq!(ThresholdRule::Hard.apply(0.1, 0.1), 0.1);
        assert!((ThresholdRule::Soft.apply(-0.5, 0.2) + 0.3).abs() < 1e-15);
        assert_eq!(ThresholdRule::Soft.apply(0.1, 0.2), 0.0);
        let al = ThresholdRule::AdaptiveLasso { eta: 3.0 };
        assert!((al.apply(0.2, 0.1) - 0.2 * (1.0 - 0.125)).abs() < 1e-15);
        assert_eq!(al.apply(0.05, 0.1), 0.0);
        assert_eq!(al.apply(0.0, 0.1), 0.0);
    }

    #[test]
    fn threshold_arithmetic() {
        assert!((threshold_level(2.0, 100, 400) - 0.21460).abs() < 1e-5);
    }

    #[test]
    fn diagonal_is_thresholded_unless_kept() {
        let s = SymmetricMatrix::from_diagonal(&[0.01, 1.0]);
        let spec = EstimatorSpec::hard(2.0);
        assert_eq!(threshold_estimate(&s, &spec, 100).unwrap().get(0, 0), 0.0);
        let keep = spec.with_keep_diagonal(true);
        assert_eq!(threshold_estimate(&s, &keep, 100).unwrap().get(0, 0), 0.01);
    }

    #[test]
    fn psd_projection_examples() {
        let d = SymmetricMatrix::from_diagonal(&[2.0, -1.0]);
        let p = psd_project(&d).unwrap();
        assert!(p.sub(&SymmetricMatrix::from_diagonal(&[2.0, 0.0])).unwrap().max_abs() < 1e-15);
        let pd = SymmetricMatrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap();
        assert!(psd_project(&pd).unwrap().sub(&pd).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn guard_examples() {
        let i = SymmetricMatrix::identity(50);
        assert_eq!(bregman_guard(&i, 100, GuardReading::BothEigenvalues).unwrap(), i);
        let neg = SymmetricMatrix::from_diagonal(&[1.0, -0.2]);
        assert_eq!(
            bregman_guard(&neg, 100, GuardReading::BothEigenvalues).unwrap(),
            SymmetricMatrix::identity(2)
        );
        let l = 100f64.ln();
        let big = SymmetricMatrix::identity(50).scale(2.0 * l);
        assert_eq!(
            bregman_guard(&big, 100, GuardReading::BothEigenvalues).unwrap(),
            SymmetricMatrix::identity(50)
        );
        // 2L·I has λ_min = 2L > L, so the λ_min-only window rejects it as well
        assert_eq!(
            bregman_guard(&big, 100, GuardReading::LambdaMinOnly).unwrap(),
            SymmetricMatrix::identity(50)
        );
        // a spread spectrum separates the readings
        let mut diag = vec![1.0; 50];
        diag[0] = 2.0 * l;
        let spread = SymmetricMatrix::from_diagonal(&diag);
        assert_eq!(
            bregman_guard(&spread, 100, GuardReading::BothEigenvalues).unwrap(),
            SymmetricMatrix::identity(50)
        );
        assert_eq!(bregman_guard(&spread, 100, GuardReading::LambdaMinOnly).unwrap(), spread);
    }

    #[test]
    fn json_shape_and_round_trip() {
        let spec = EstimatorSpec::new(ThresholdRule::AdaptiveLasso { eta: 3.0 }, 1.5)
            .unwrap()
            .with_psd_project(true)
            .with_bregman_guard(true);
        let v = serde_json::to_value(spec).unwrap();
        assert_eq!(v["rule"], "alasso");
        assert_eq!(v["eta"], 3.0);
        assert_eq!(v["corrections"], serde_json::json!(["psd-project", "bregman-guard"]));
        assert_eq!(v["keep_diagonal"], false);
        let back: EstimatorSpec = serde_json::from_value(v).unwrap();
        assert_eq!(back, spec);
        let hard: EstimatorSpec = serde_json::from_str(r#"{"rule":"hard"}"#).unwrap();
        assert_eq!(hard, EstimatorSpec::hard(2.0));
        assert!(serde_json::from_str::<EstimatorSpec>(r#"{"rule":"hard","gamma":-1}"#).is_err());
        assert!(serde_json::from_str::<EstimatorSpec>(r#"{"rule":"alasso","eta":0.5}"#).is_err());
    }
}
