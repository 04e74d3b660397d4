//! Operator-norm, Frobenius and eigen-separable Bregman losses.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{NormIndex, SymmetricMatrix};

/// Eigenvalues below this are outside the Stein and von Neumann domains.
pub const MIN_POSITIVE_EIGENVALUE: f64 = 1e-12;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied generator `φ` with derivative `φ′` on a closed interval.
#[derive(Clone)]
pub struct CustomPhi {
    name: String,
    phi: ScalarFn,
    derivative: ScalarFn,
    domain: (f64, f64),
}

impl CustomPhi {
    /// Checks strict convexity and the derivative numerically on a grid over
    /// the domain (capped to a finite window when unbounded).
    pub fn new(
        name: impl Into<String>,
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
        domain: (f64, f64),
    ) -> Result<Self> {
        let name = name.into();
        let (lo, hi) = domain;
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::InvalidArgument(format!("phi '{name}': empty domain [{lo}, {hi}]")));
        }
        let a = if lo.is_finite() { lo } else { hi.min(0.0) - 100.0 };
        let b = if hi.is_finite() { hi } else { a.max(0.0) + 100.0 };
        let grid = 256;
        let h = (b - a) / grid as f64;
        for s in 1..grid {
            let x = a + s as f64 * h;
            let (f0, fm, fp) = (phi(x), phi(x - h), phi(x + h));
            let second = fp - 2.0 * f0 + fm;
            let scale = f0.abs().max(fm.abs()).max(fp.abs()).max(1.0);
            if !(second > 1e-13 * scale) {
                return Err(Error::InvalidArgument(format!(
                    "phi '{name}' is not strictly convex near {x}"
                )));
            }
            let hd = 1e-5 * (1.0 + x.abs());
            let dd = (phi(x + hd) - phi(x - hd)) / (2.0 * hd);
            let d = derivative(x);
            if !((dd - d).abs() <= 1e-4 * dd.abs().max(d.abs()).max(1.0)) {
                return Err(Error::InvalidArgument(format!(
                    "phi '{name}': derivative {d} disagrees with finite difference {dd} at {x}"
                )));
            }
        }
        Ok(Self {
            name,
            phi: Arc::new(phi),
            derivative: Arc::new(derivative),
            domain,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for CustomPhi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPhi")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .finish()
    }
}

impl PartialEq for CustomPhi {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.domain == other.domain
    }
}

/// Scalar generator of an eigen-separable Bregman divergence.
#[derive(Debug, Clone, PartialEq)]
pub enum Phi {
    /// `φ(λ) = −ln λ`; the divergence is Stein's loss.
    Stein,
    /// `φ(λ) = λ ln λ − λ`.
    VonNeumann,
    /// `φ(λ) = λ²`; the divergence is the squared Frobenius distance.
    SquaredFrobenius,
    Custom(CustomPhi),
}

impl Phi {
    pub fn name(&self) -> &str {
        match self {
            Phi::Stein => "stein",
            Phi::VonNeumann => "von-neumann",
            Phi::SquaredFrobenius => "squared-frobenius",
            Phi::Custom(c) => c.name(),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Phi::Stein => -x.ln(),
            Phi::VonNeumann => x * x.ln() - x,
            Phi::SquaredFrobenius => x * x,
            Phi::Custom(c) => (c.phi)(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Phi::Stein => -1.0 / x,
            Phi::VonNeumann => x.ln(),
            Phi::SquaredFrobenius => 2.0 * x,
            Phi::Custom(c) => (c.derivative)(x),
        }
    }

    /// Half the extreme values of `φ″` over `[lo, hi]`, for the built-in generators.
    pub fn sandwich_constants(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        match self {
            Phi::Stein => Some((0.5 / (hi * hi), 0.5 / (lo * lo))),
            Phi::VonNeumann => Some((0.5 / hi, 0.5 / lo)),
            Phi::SquaredFrobenius => Some((1.0, 1.0)),
            Phi::Custom(_) => None,
        }
    }

    fn check_domain(&self, eigenvalues: &[f64], which: &str) -> Result<()> {
        let (lo, hi) = match self {
            Phi::Stein | Phi::VonNeumann => (MIN_POSITIVE_EIGENVALUE, f64::INFINITY),
            Phi::SquaredFrobenius => (f64::NEG_INFINITY, f64::INFINITY),
            Phi::Custom(c) => c.domain,
        };
        for &l in eigenvalues {
            if l < lo || l > hi {
                return Err(Error::domain(format!("{} divergence, {which}", self.name()), l));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossKind {
    /// Squared ℓ_w operator norm of the difference.
    Operator(NormIndex),
    FrobeniusSquared,
    Bregman(Phi),
}

/// A loss and whether it is divided by `p`. The flag has no effect on
/// operator-norm losses.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub normalized: bool,
}

impl LossSpec {
    pub fn operator(w: NormIndex) -> Self {
        Self {
            kind: LossKind::Operator(w),
            normalized: false,
        }
    }

    pub fn frobenius_squared(normalized: bool) -> Self {
        Self {
            kind: LossKind::FrobeniusSquared,
            normalized,
        }
    }

    pub fn bregman(phi: Phi, normalized: bool) -> Self {
        Self {
            kind: LossKind::Bregman(phi),
            normalized,
        }
    }

    /// Parses the short names `op1`, `op2`, `opinf`, `fro`, `stein`, `vn`.
    pub fn from_short(name: &str, normalized: bool) -> Result<Self> {
        Ok(match name {
            "op1" => Self::operator(NormIndex::One),
            "op2" => Self::operator(NormIndex::Two),
            "opinf" => Self::operator(NormIndex::Infinity),
            "fro" => Self::frobenius_squared(normalized),
            "stein" => Self::bregman(Phi::Stein, normalized),
            "vn" => Self::bregman(Phi::VonNeumann, normalized),
            other => return Err(Error::Parse(format!("unknown loss '{other}'"))),
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            LossKind::Operator(_) => "operator",
            LossKind::FrobeniusSquared => "frobenius-squared",
            LossKind::Bregman(_) => "bregman",
        }
    }

    /// The `w` or `φ` qualifier, empty for the Frobenius loss.
    pub fn qualifier(&self) -> String {
        match &self.kind {
            LossKind::Operator(w) => w.to_string(),
            LossKind::FrobeniusSquared => String::new(),
            LossKind::Bregman(phi) => phi.name().to_string(),
        }
    }

    pub fn label(&self) -> String {
        let base = match &self.kind {
            LossKind::Operator(w) => format!("op{w}"),
            LossKind::FrobeniusSquared => "fro".to_string(),
            LossKind::Bregman(Phi::Stein) => "stein".to_string(),
            LossKind::Bregman(Phi::VonNeumann) => "vn".to_string(),
            LossKind::Bregman(phi) => phi.name().to_string(),
        };
        if self.normalized && !matches!(self.kind, LossKind::Operator(_)) {
            format!("{base}-per-p")
        } else {
            base
        }
    }

    /// Whether the loss needs strictly positive eigenvalues of the estimate.
    pub fn needs_positive_definite(&self) -> bool {
        matches!(self.kind, LossKind::Bregman(Phi::Stein | Phi::VonNeumann))
    }

    /// Exponent of `(ln p)/n` in the minimax rate over the weak ℓq class.
    pub fn rate_exponent(&self, q: f64) -> f64 {
        match self.kind {
            LossKind::Operator(_) => 1.0 - q,
            _ => 1.0 - q / 2.0,
        }
    }

    /// Loss of `estimate` against `truth`.
    pub fn evaluate(&self, estimate: &SymmetricMatrix, truth: &SymmetricMatrix) -> Result<f64> {
        normalized_loss(estimate, truth, self)
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Serialize, Deserialize)]
struct LossSpecJson {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w: Option<NormIndex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phi: Option<String>,
    #[serde(default)]
    normalized: bool,
}

impl Serialize for LossSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (w, phi) = match &self.kind {
            LossKind::Operator(w) => (Some(*w), None),
            LossKind::FrobeniusSquared => (None, None),
            LossKind::Bregman(phi) => (None, Some(phi.name().to_string())),
        };
        LossSpecJson {
            kind: self.kind_name().to_string(),
            w,
            phi,
            normalized: self.normalized,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LossSpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = LossSpecJson::deserialize(de)?;
        let kind = match raw.kind.as_str() {
            "operator" => LossKind::Operator(raw.w.ok_or_else(|| D::Error::custom("operator loss needs w"))?),
            "frobenius-squared" => LossKind::FrobeniusSquared,
            "bregman" => LossKind::Bregman(match raw.phi.as_deref() {
                Some("stein") => Phi::Stein,
                Some("von-neumann") => Phi::VonNeumann,
                Some("squared-frobenius") => Phi::SquaredFrobenius,
                Some(other) => {
                    return Err(D::Error::custom(format!(
                        "phi '{other}' is not built in; custom generators cannot be read from JSON"
                    )))
                }
                None => return Err(D::Error::custom("bregman loss needs phi")),
            }),
            other => return Err(D::Error::custom(format!("unknown loss kind '{other}'"))),
        };
        Ok(LossSpec {
            kind,
            normalized: raw.normalized,
        })
    }
}

/// `|||A − B|||_w²`.
pub fn operator_loss(a: &SymmetricMatrix, b: &SymmetricMatrix, w: NormIndex) -> Result<f64> {
    let norm = a.sub(b)?.operator_norm(w)?;
    Ok(norm * norm)
}

/// `Σ_{i,j} (v_iᵀu_j)² [φ(λ_i) − φ(γ_j) − φ′(γ_j)(λ_i − γ_j)]` over the
/// eigenpairs `(λ_i, v_i)` of `x` and `(γ_j, u_j)` of `y`.
pub fn bregman_divergence(x: &SymmetricMatrix, y: &SymmetricMatrix, phi: &Phi) -> Result<f64> {
    x.check_dim(y)?;
    let p = x.dim();
    let ex = x.sym_eigen()?;
    let ey = y.sym_eigen()?;
    phi.check_domain(ex.eigenvalues(), "first argument")?;
    phi.check_domain(ey.eigenvalues(), "second argument")?;
    let fx: Vec<f64> = ex.eigenvalues().iter().map(|&l| phi.value(l)).collect();
    let fy: Vec<f64> = ey.eigenvalues().iter().map(|&g| phi.value(g)).collect();
    let dy: Vec<f64> = ey.eigenvalues().iter().map(|&g| phi.derivative(g)).collect();
    let mut total = 0.0;
    for i in 0..p {
        let vi = ex.eigenvector(i);
        let li = ex.eigenvalues()[i];
        for j in 0..p {
            let c: f64 = vi.iter().zip(ey.eigenvector(j)).map(|(a, b)| a * b).sum();
            let gj = ey.eigenvalues()[j];
            total += c * c * (fx[i] - fy[j] - dy[j] * (li - gj));
        }
    }
    Ok(total.max(0.0))
}

/// Closed forms of the built-in divergences, computed without the double sum.
///
/// - Stein: `tr(X Y⁻¹) − ln det X + ln det Y − p`, with the inverse and
///   determinants from LU elimination.
/// - von Neumann: `tr(X ln X − X ln Y − X + Y)`.
/// - squared Frobenius: `Σ (x_ij − y_ij)²`.
pub fn closed_form_divergence(x: &SymmetricMatrix, y: &SymmetricMatrix, phi: &Phi) -> Result<f64> {
    x.check_dim(y)?;
    let p = x.dim();
    match phi {
        Phi::SquaredFrobenius => Ok(x
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()),
        Phi::Stein => {
            require_spd(x, "stein closed form, first argument")?;
            require_spd(y, "stein closed form, second argument")?;
            let (xs, ys) = (x.to_square(), y.to_square());
            let trace = xs.matmul(&ys.inverse()?)?.trace();
            Ok(trace - xs.determinant().ln() + ys.determinant().ln() - p as f64)
        }
        Phi::VonNeumann => {
            require_spd(x, "von-neumann closed form, first argument")?;
            require_spd(y, "von-neumann closed form, second argument")?;
            let log_x = x.matrix_function(f64::ln)?;
            let log_y = y.matrix_function(f64::ln)?;
            let diff = log_x.sub(&log_y)?;
            Ok(x.matmul(&diff)?.trace() - x.trace() + y.trace())
        }
        Phi::Custom(c) => Err(Error::InvalidArgument(format!(
            "no closed form for custom phi '{}'",
            c.name()
        ))),
    }
}

fn require_spd(m: &SymmetricMatrix, what: &str) -> Result<()> {
    let ev = m.eigenvalues()?;
    let min = ev[ev.len() - 1];
    if min < MIN_POSITIVE_EIGENVALUE {
        return Err(Error::domain(what, min));
    }
    Ok(())
}

/// Evaluates `spec` on `(x, y)`; Frobenius and Bregman losses are divided by
/// `p` when `spec.normalized` is set, operator losses are returned unchanged.
pub fn normalized_loss(x: &SymmetricMatrix, y: &SymmetricMatrix, spec: &LossSpec) -> Result<f64> {
    x.check_dim(y)?;
    let p = x.dim() as f64;
    let scale = |v: f64| if spec.normalized { v / p } else { v };
    match &spec.kind {
        LossKind::Operator(w) => operator_loss(x, y, *w),
        LossKind::FrobeniusSquared => {
            let f = x.sub(y)?.frobenius_norm();
            Ok(scale(f * f))
        }
        LossKind::Bregman(phi) => Ok(scale(bregman_divergence(x, y, phi)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> SymmetricMatrix {
        SymmetricMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn operator_loss_examples() {
        let a = m(&[&[1.0, 0.2], &[0.2, 1.0]]);
        assert_eq!(operator_loss(&a, &a, NormIndex::Two).unwrap(), 0.0);
        let d = SymmetricMatrix::from_diagonal(&[0.3]);
        let z = SymmetricMatrix::zeros(1);
        assert!((operator_loss(&d, &z, NormIndex::Two).unwrap() - 0.09).abs() < 1e-15);
        let eps = 0.2;
        let off = m(&[&[0.0, eps], &[eps, 0.0]]);
        assert!((operator_loss(&off, &SymmetricMatrix::zeros(2), NormIndex::One).unwrap() - eps * eps).abs() < 1e-15);
        assert!(operator_loss(&a, &SymmetricMatrix::identity(3), NormIndex::One).is_err());
    }

    #[test]
    fn stein_of_scaled_identity() {
        let p = 5;
        let x = SymmetricMatrix::identity(p).scale(2.0);
        let y = SymmetricMatrix::identity(p);
        let expected = p as f64 * (1.0 - 2f64.ln());
        assert!((bregman_divergence(&x, &y, &Phi::Stein).unwrap() - expected).abs() < 1e-12);
        assert!((closed_form_divergence(&x, &y, &Phi::Stein).unwrap() - expected).abs() < 1e-12);
        let spec = LossSpec::bregman(Phi::Stein, true);
        assert!((normalized_loss(&x, &y, &spec).unwrap() - (1.0 - 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn von_neumann_example() {
        let x = SymmetricMatrix::from_diagonal(&[std::f64::consts::E, 1.0]);
        let y = SymmetricMatrix::identity(2);
        assert!((closed_form_divergence(&x, &y, &Phi::VonNeumann).unwrap() - 1.0).abs() < 1e-12);
        assert!((bregman_divergence(&x, &y, &Phi::VonNeumann).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frobenius_examples() {
        let x = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let y = SymmetricMatrix::identity(2);
        assert_eq!(closed_form_divergence(&x, &y, &Phi::SquaredFrobenius).unwrap(), 2.0);
        assert!((bregman_divergence(&x, &y, &Phi::SquaredFrobenius).unwrap() - 2.0).abs() < 1e-12);
        let eps = 0.3;
        let mut rows = vec![vec![0.0; 4]; 4];
        rows[0][2] = eps;
        rows[2][0] = eps;
        let d = SymmetricMatrix::from_rows(&rows).unwrap();
        let v = normalized_loss(&d, &SymmetricMatrix::zeros(4), &LossSpec::frobenius_squared(true)).unwrap();
        assert!((v - 2.0 * eps * eps / 4.0).abs() < 1e-15);
    }

    #[test]
    fn operator_loss_ignores_normalization() {
        let x = SymmetricMatrix::identity(3).scale(2.0);
        let y = SymmetricMatrix::identity(3);
        let mut spec = LossSpec::operator(NormIndex::Two);
        let plain = normalized_loss(&x, &y, &spec).unwrap();
        spec.normalized = true;
        assert_eq!(normalized_loss(&x, &y, &spec).unwrap(), plain);
    }

    #[test]
    fn domain_errors_name_the_kind() {
        let x = SymmetricMatrix::from_diagonal(&[1.0, 0.0]);
        let y = SymmetricMatrix::identity(2);
        let err = bregman_divergence(&x, &y, &Phi::Stein).unwrap_err();
        match err {
            Error::Domain { context, eigenvalue } => {
                assert!(context.contains("stein"));
                assert_eq!(eigenvalue, 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(closed_form_divergence(&y, &x, &Phi::VonNeumann).is_err());
    }

    #[test]
    fn custom_phi_matches_builtin() {
        let custom = CustomPhi::new("neg-log", |x: f64| -x.ln(), |x: f64| -1.0 / x, (1e-6, 1e6)).unwrap();
        let x = m(&[&[2.0, 0.3], &[0.3, 1.0]]);
        let y = m(&[&[1.0, -0.1], &[-0.1, 1.5]]);
        let a = bregman_divergence(&x, &y, &Phi::Custom(custom)).unwrap();
        let b = bregman_divergence(&x, &y, &Phi::Stein).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn custom_phi_rejects_nonconvex_or_wrong_derivative() {
        assert!(CustomPhi::new("linear", |x: f64| x, |_| 1.0, (0.0, 1.0)).is_err());
        assert!(CustomPhi::new("concave", |x: f64| -x * x, |x: f64| -2.0 * x, (-1.0, 1.0)).is_err());
        assert!(CustomPhi::new("bad-deriv", |x: f64| x * x, |x: f64| x, (-1.0, 1.0)).is_err());
        assert!(CustomPhi::new("empty", |x: f64| x * x, |x: f64| 2.0 * x, (1.0, 1.0)).is_err());
        assert!(CustomPhi::new("cosh", f64::cosh, f64::sinh, (f64::NEG_INFINITY, f64::INFINITY)).is_ok());
    }

    #[test]
    fn json_shapes() {
        let op = LossSpec::operator(NormIndex::Infinity);
        let v = serde_json::to_value(&op).unwrap();
        assert_eq!(v, serde_json::json!({"kind": "operator", "w": "inf", "normalized": false}));
        let st = LossSpec::bregman(Phi::Stein, true);
        let v = serde_json::to_value(&st).unwrap();
        assert_eq!(v, serde_json::json!({"kind": "bregman", "phi": "stein", "normalized": true}));
        for spec in [op, st, LossSpec::frobenius_squared(true), LossSpec::bregman(Phi::VonNeumann, false)] {
            let s = serde_json::to_string(&spec).unwrap();
            assert_eq!(serde_json::from_str::<LossSpec>(&s).unwrap(), spec);
        }
        let numeric: LossSpec = serde_json::from_str(r#"{"kind":"operator","w":2}"#).unwrap();
        assert_eq!(numeric, LossSpec::operator(NormIndex::Two));
        assert!(serde_json::from_str::<LossSpec>(r#"{"kind":"bregman","phi":"mine"}"#).is_err());
    }

    #[test]
    fn short_names() {
        assert_eq!(LossSpec::from_short("op2", false).unwrap().label(), "op2");
        assert_eq!(LossSpec::from_short("fro", true).unwrap().label(), "fro-per-p");
        assert_eq!(LossSpec::from_short("opinf", true).unwrap().label(), "opinf");
        assert!(LossSpec::from_short("l7", false).is_err());
    }
}
