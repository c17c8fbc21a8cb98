//! Root-existence and Newton-step certificates for a generic map `f: Rᵖ → Rᵖ`.
//!
//! The ball supremum in the contraction hypothesis cannot be checked by sampling,
//! so callers pass a certified bound `r ↦ ε(r)`. The glm, cox and nls modules
//! supply closed-form ones.

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::numkit::{op_norm, DenseMatrix, Lu, Vector};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RootCertificate {
    pub center: Vector,
    pub radius: f64,
    pub epsilon: f64,
    /// `‖A⁻¹ f(θ₀)‖₂`
    pub step_norm: f64,
    /// `step_norm / (1 + ε)`; a lower bound on `‖θ⋆ − θ₀‖₂` when valid.
    pub bracket_lo: f64,
    /// `step_norm / (1 − ε)`; infinite at `ε = 1`.
    pub bracket_hi: f64,
    pub valid: bool,
    pub failure_reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpansionCertificate {
    pub center: Vector,
    /// `−[∇f(θ₀)]⁻¹ f(θ₀)`
    pub newton_step: Vector,
    pub step_norm: f64,
    #[serde(rename = "lipschitz")]
    pub l: f64,
    pub alpha: f64,
    /// Largest step norm the certificate accepts, `2 / (3 (3L)^{1/α})`.
    pub step_threshold: f64,
    /// `1.5 · step_norm`; the unique root lies in this ball when valid.
    pub ball_radius: f64,
    /// `1.5^{1+α} L step_norm^{1+α}`
    pub remainder_bound: f64,
    pub valid: bool,
}

/// Contraction certificate for `f(θ) = 0` around `θ₀` with preconditioner `A`.
///
/// `variation_bound(r)` must upper-bound `sup_{θ ∈ B(θ₀, r)} ‖A⁻¹(A − ∇f(θ))‖_op`.
/// The Jacobian is only evaluated at the center as a consistency check: a bound
/// smaller than the variation at `θ₀` itself is rejected as invalid.
pub fn contraction_certificate<F, J, E>(
    f: F,
    jac: J,
    a: &DenseMatrix,
    theta0: &Vector,
    r: f64,
    variation_bound: E,
) -> Result<RootCertificate>
where
    F: Fn(&Vector) -> Result<Vector>,
    J: Fn(&Vector) -> Result<DenseMatrix>,
    E: Fn(f64) -> f64,
{
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::InvalidInput(format!("radius must be finite and nonnegative, got {r}")));
    }
    let p = theta0.len();
    check_dim(p, a.rows())?;
    let lu = Lu::factor(a)?;
    let f0 = f(theta0)?;
    check_dim(p, f0.len())?;
    let step_norm = lu.solve(&f0)?.norm2();

    let eps = variation_bound(r);
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::InvalidInput(format!("variation bound must be nonnegative, got {eps}")));
    }

    let mut reason = String::new();
    let at_center = {
        let j0 = jac(theta0)?;
        check_dim(p, j0.rows())?;
        check_dim(p, j0.cols())?;
        op_norm(&lu.solve_matrix(&a.sub(&j0)?)?)?
    };

    let (bracket_lo, bracket_hi) = if eps < 1.0 {
        (step_norm / (1.0 + eps), step_norm / (1.0 - eps))
    } else {
        (step_norm / (1.0 + eps), f64::INFINITY)
    };

    if eps > 1.0 {
        reason = format!("variation bound {eps} exceeds 1");
    } else if at_center > eps * (1.0 + 1e-12) + 1e-15 {
        reason = format!("variation bound {eps} is below the variation {at_center} at the center");
    } else if eps == 1.0 && step_norm > 0.0 {
        reason = "epsilon = 1 admits only an exact center".into();
    } else if step_norm > r * (1.0 - eps) {
        reason = format!("step norm {step_norm} exceeds r(1 - eps) = {}", r * (1.0 - eps));
    }

    Ok(RootCertificate {
        center: theta0.clone(),
        radius: r,
        epsilon: eps,
        step_norm,
        bracket_lo,
        bracket_hi,
        valid: reason.is_empty(),
        failure_reason: reason,
    })
}

/// Newton-step certificate.
///
/// The caller asserts `‖[∇f(θ₀)]⁻¹(∇f(θ₀) − ∇f(θ))‖_op ≤ L ‖θ − θ₀‖₂^α`
/// whenever `(3L)^{1/α} ‖θ − θ₀‖₂ ≤ 1`.
pub fn newton_step_certificate<F, J>(f: F, jac: J, theta0: &Vector, l: f64, alpha: f64) -> Result<ExpansionCertificate>
where
    F: Fn(&Vector) -> Result<Vector>,
    J: Fn(&Vector) -> Result<DenseMatrix>,
{
    if !(l >= 0.0) || !l.is_finite() {
        return Err(Error::InvalidInput(format!("L must be finite and nonnegative, got {l}")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let p = theta0.len();
    let f0 = f(theta0)?;
    check_dim(p, f0.len())?;
    let j0 = jac(theta0)?;
    check_dim(p, j0.rows())?;
    let newton_step = -&Lu::factor(&j0)?.solve(&f0)?;
    let step_norm = newton_step.norm2();
    let step_threshold = newton_threshold(l, alpha);
    Ok(ExpansionCertificate {
        center: theta0.clone(),
        step_norm,
        l,
        alpha,
        step_threshold,
        ball_radius: 1.5 * step_norm,
        remainder_bound: newton_remainder(l, alpha, step_norm),
        valid: step_norm <= step_threshold,
        newton_step,
    })
}

/// `2 / (3 (3L)^{1/α})`, infinite when `L = 0`.
pub fn newton_threshold(l: f64, alpha: f64) -> f64 {
    if l == 0.0 {
        f64::INFINITY
    } else {
        2.0 / (3.0 * (3.0 * l).powf(1.0 / alpha))
    }
}

/// `1.5^{1+α} L s^{1+α}`
pub fn newton_remainder(l: f64, alpha: f64, step_norm: f64) -> f64 {
    if l == 0.0 {
        0.0
    } else {
        1.5f64.powf(1.0 + alpha) * l * step_norm.powf(1.0 + alpha)
    }
}
