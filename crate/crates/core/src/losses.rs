//! GLM-type loss families `h(x) ℓ(xᵀθ, y)` with closed-form curvature-ratio bounds.
//!
//! `cbound(u)` bounds `sup_{|s−t|≤u} ℓ″(s,y)/ℓ″(t,y)` uniformly in `y`. Nonnegative
//! combinations of families take the pointwise maximum of their bounds.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type BoundFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type WeightFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Built-in family selector, parsed from `squared | logistic | poisson | negbinomial:<α>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FamilySpec {
    Squared,
    Logistic,
    Poisson,
    NegBinomial { alpha: f64 },
}

impl FromStr for FamilySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (head, param) = match s.split_once(':') {
            Some((h, p)) => (h.to_string(), Some(p.to_string())),
            None => (s.clone(), None),
        };
        let no_param = |spec: FamilySpec| match &param {
            None => Ok(spec),
            Some(_) => Err(Error::InvalidInput(format!("family '{head}' takes no parameter"))),
        };
        match head.as_str() {
            "squared" | "gaussian" | "ols" => no_param(FamilySpec::Squared),
            "logistic" | "binomial" => no_param(FamilySpec::Logistic),
            "poisson" => no_param(FamilySpec::Poisson),
            "negbinomial" | "negbin" => {
                let p = param.ok_or_else(|| Error::InvalidInput("negbinomial needs ':<alpha>'".into()))?;
                let alpha: f64 = p
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad negbinomial alpha '{p}'")))?;
                Ok(FamilySpec::NegBinomial { alpha })
            }
            other => Err(Error::InvalidInput(format!("unknown family '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FamilyKind {
    Squared,
    Logistic,
    Poisson,
    NegBinomial { alpha: f64 },
    Custom,
    Combined,
}

#[derive(Clone)]
enum Scalar {
    Squared,
    Logistic,
    Poisson,
    NegBinomial { alpha: f64, log_alpha: f64 },
    Custom { l0: ScalarFn, l1: ScalarFn, l2: ScalarFn },
}

impl Scalar {
    fn derivs(&self, u: f64, y: f64) -> (f64, f64, f64) {
        match self {
            Scalar::Squared => {
                let r = u - y;
                (r * r, 2.0 * r, 2.0)
            }
            Scalar::Logistic => {
                let (sig, var) = sigmoid_and_var(u);
                let sig_neg = sigmoid_and_var(-u).0;
                (softplus(u) - y * u, (1.0 - y) * sig - y * sig_neg, var)
            }
            Scalar::Poisson => {
                let e = u.exp();
                (e - y * u, e - y, e)
            }
            Scalar::NegBinomial { alpha, log_alpha } => {
                let v = u + log_alpha;
                let m = y + 1.0 / alpha;
                let (sig, var) = sigmoid_and_var(v);
                let sig_neg = sigmoid_and_var(-v).0;
                (-y * u + m * softplus(v), (m - y) * sig - y * sig_neg, m * var)
            }
            Scalar::Custom { l0, l1, l2 } => (l0(u, y), l1(u, y), l2(u, y)),
        }
    }
}

/// `log(1 + e^t)` without overflow.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `σ(t)` and `σ(t)(1 − σ(t))`, stable in both tails.
///
/// Derivatives written as `(1 − y)σ(t) − yσ(−t)` rather than `σ(t) − y` keep
/// their relative accuracy in the tails, which is what lets a fit notice that it
/// is drifting to infinity.
pub fn sigmoid_and_var(t: f64) -> (f64, f64) {
    let e = (-t.abs()).exp();
    let d = 1.0 + e;
    let sig = if t >= 0.0 { 1.0 / d } else { e / d };
    (sig, e / (d * d))
}

#[derive(Clone)]
enum CBound {
    One,
    Exp(f64),
    Custom(BoundFn),
    Max(Vec<CBound>),
}

impl CBound {
    fn eval(&self, u: f64) -> f64 {
        match self {
            CBound::One => 1.0,
            CBound::Exp(k) => (k * u).exp(),
            CBound::Custom(f) => f(u),
            CBound::Max(parts) => parts.iter().fold(1.0f64, |m, c| m.max(c.eval(u))),
        }
    }

    fn flatten_into(&self, out: &mut Vec<CBound>) {
        match self {
            CBound::Max(parts) => parts.iter().for_each(|p| p.flatten_into(out)),
            other => out.push(other.clone()),
        }
    }

    /// True when the bound is a convex function with value 1 at the origin.
    fn is_convex_builtin(&self) -> bool {
        match self {
            CBound::One | CBound::Exp(_) => true,
            CBound::Custom(_) => false,
            CBound::Max(parts) => parts.iter().all(|p| p.is_convex_builtin()),
        }
    }
}

#[derive(Clone)]
struct Term {
    coef: f64,
    scalar: Scalar,
    weight: Option<WeightFn>,
    label: String,
}

/// Per-row loss value and derivatives in the linear predictor, weights applied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowDerivs {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
}

/// A loss family: evaluators, optional covariate weight, and a curvature-ratio bound.
#[derive(Clone)]
pub struct LossFamily {
    kind: FamilyKind,
    terms: Vec<Term>,
    cbound: CBound,
}

impl fmt::Debug for LossFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LossFamily").field("name", &self.name()).finish()
    }
}

/// Build one of the built-in families.
pub fn make_family(spec: FamilySpec) -> Result<LossFamily> {
    let (kind, scalar, cbound, label) = match spec {
        FamilySpec::Squared => (FamilyKind::Squared, Scalar::Squared, CBound::One, "squared".to_string()),
        FamilySpec::Logistic => (FamilyKind::Logistic, Scalar::Logistic, CBound::Exp(3.0), "logistic".to_string()),
        FamilySpec::Poisson => (FamilyKind::Poisson, Scalar::Poisson, CBound::Exp(1.0), "poisson".to_string()),
        FamilySpec::NegBinomial { alpha } => {
            if !(alpha > 0.0) || !alpha.is_finite() {
                return Err(Error::InvalidInput(format!("negbinomial alpha must be positive, got {alpha}")));
            }
            (
                FamilyKind::NegBinomial { alpha },
                Scalar::NegBinomial { alpha, log_alpha: alpha.ln() },
                CBound::Exp(3.0),
                format!("negbinomial({alpha})"),
            )
        }
    };
    Ok(LossFamily { kind, terms: vec![Term { coef: 1.0, scalar, weight: None, label }], cbound })
}

const GRID_LO: f64 = -3.0;
const GRID_HI: f64 = 3.0;
const GRID_STEP: f64 = 0.25;
const DEFAULT_Y_SAMPLES: [f64; 4] = [0.0, 0.5, 1.0, 2.0];

fn grid() -> Vec<f64> {
    let n = ((GRID_HI - GRID_LO) / GRID_STEP).round() as usize;
    (0..=n).map(|k| GRID_LO + k as f64 * GRID_STEP).collect()
}

impl LossFamily {
    /// User-supplied family. The asserted `cbound` is checked against the
    /// curvature ratio on the grid `u ∈ [−3, 3]` (step 0.25) for each sample `y`;
    /// any violation is an error.
    pub fn custom(l0: ScalarFn, l1: ScalarFn, l2: ScalarFn, cbound: BoundFn, y_samples: Option<&[f64]>) -> Result<Self> {
        let fam = LossFamily {
            kind: FamilyKind::Custom,
            terms: vec![Term {
                coef: 1.0,
                scalar: Scalar::Custom { l0, l1, l2 },
                weight: None,
                label: "custom".into(),
            }],
            cbound: CBound::Custom(cbound),
        };
        fam.grid_check(y_samples.unwrap_or(&DEFAULT_Y_SAMPLES))?;
        Ok(fam)
    }

    /// Verify strict convexity, `cbound(0)=1`, monotonicity and the ratio bound on the grid.
    pub fn grid_check(&self, ys: &[f64]) -> Result<()> {
        let g = grid();
        let c0 = self.cbound(0.0);
        if (c0 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("cbound(0) = {c0}, expected 1")));
        }
        let mut prev = c0;
        for k in 1..g.len() {
            let c = self.cbound(k as f64 * GRID_STEP);
            if !(c >= prev * (1.0 - 1e-12)) {
                return Err(Error::InvalidInput(format!("cbound decreases at u = {}", k as f64 * GRID_STEP)));
            }
            prev = c;
        }
        for &y in ys {
            let l2: Vec<f64> = g.iter().map(|&u| self.eval2(u, y)).collect();
            if let Some(k) = l2.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidInput(format!("second derivative not positive at u={}, y={y}", g[k])));
            }
            for i in 0..g.len() {
                for j in 0..g.len() {
                    let w = (g[i] - g[j]).abs();
                    let ratio = l2[i] / l2[j];
                    if ratio > self.cbound(w) * (1.0 + 1e-9) {
                        return Err(Error::InvalidInput(format!(
                            "curvature ratio {ratio} at (s={}, t={}, y={y}) exceeds cbound({w})",
                            g[i], g[j]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Attach a covariate weight `h(x) ≥ 0` to every term.
    pub fn with_weight(mut self, h: WeightFn) -> Self {
        for t in &mut self.terms {
            t.weight = Some(h.clone());
        }
        self
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn name(&self) -> String {
        if self.terms.len() == 1 && self.terms[0].coef == 1.0 {
            return self.terms[0].label.clone();
        }
        let parts: Vec<String> = self.terms.iter().map(|t| format!("{}*{}", t.coef, t.label)).collect();
        format!("combined({})", parts.join("+"))
    }

    pub fn cbound(&self, u: f64) -> f64 {
        self.cbound.eval(u)
    }

    /// Whether `cbound` is known to be convex with `cbound(0) = 1`.
    pub fn cbound_is_convex(&self) -> bool {
        self.cbound.is_convex_builtin()
    }

    pub fn has_weights(&self) -> bool {
        self.terms.iter().any(|t| t.weight.is_some())
    }

    /// Unweighted `ℓ(u, y)`.
    pub fn eval0(&self, u: f64, y: f64) -> f64 {
        self.terms.iter().map(|t| t.coef * t.scalar.derivs(u, y).0).sum()
    }

    /// Unweighted `ℓ′(u, y)`.
    pub fn eval1(&self, u: f64, y: f64) -> f64 {
        self.terms.iter().map(|t| t.coef * t.scalar.derivs(u, y).1).sum()
    }

    /// Unweighted `ℓ″(u, y)`.
    pub fn eval2(&self, u: f64, y: f64) -> f64 {
        self.terms.iter().map(|t| t.coef * t.scalar.derivs(u, y).2).sum()
    }

    /// Weighted derivatives for one observation with covariates `x` and predictor `u = xᵀθ`.
    pub fn row(&self, x: &[f64], u: f64, y: f64) -> Result<RowDerivs> {
        let mut out = RowDerivs { d0: 0.0, d1: 0.0, d2: 0.0 };
        for t in &self.terms {
            let h = match &t.weight {
                None => 1.0,
                Some(w) => {
                    let h = w(x);
                    if !(h >= 0.0) || !h.is_finite() {
                        return Err(Error::InvalidInput(format!("weight h(x) = {h} must be finite and nonnegative")));
                    }
                    h
                }
            };
            let (a, b, c) = t.scalar.derivs(u, y);
            let w = t.coef * h;
            out.d0 += w * a;
            out.d1 += w * b;
            out.d2 += w * c;
        }
        Ok(out)
    }
}

/// `a·F1 + b·F2`, with curvature bound `max(F1.cbound, F2.cbound)`.
pub fn combine_families(a: f64, f1: &LossFamily, b: f64, f2: &LossFamily) -> Result<LossFamily> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidInput(format!("combination weights must be positive, got {a} and {b}")));
    }
    let mut terms = Vec::with_capacity(f1.terms.len() + f2.terms.len());
    for (c, f) in [(a, f1), (b, f2)] {
        for t in &f.terms {
            terms.push(Term { coef: c * t.coef, ..t.clone() });
        }
    }
    let mut parts = Vec::new();
    f1.cbound.flatten_into(&mut parts);
    f2.cbound.flatten_into(&mut parts);
    Ok(LossFamily { kind: FamilyKind::Combined, terms, cbound: CBound::Max(parts) })
}

/// `max(|Δℓ/Δu − ℓ′|, |Δℓ′/Δu − ℓ″|)` with central differences of step `h`.
pub fn loss_derivative_check(f: &LossFamily, u: f64, y: f64, h: f64) -> f64 {
    let d1 = (f.eval0(u + h, y) - f.eval0(u - h, y)) / (2.0 * h);
    let d2 = (f.eval1(u + h, y) - f.eval1(u - h, y)) / (2.0 * h);
    (d1 - f.eval1(u, y)).abs().max((d2 - f.eval2(u, y)).abs())
}
