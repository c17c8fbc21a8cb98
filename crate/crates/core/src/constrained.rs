//! Equality-constrained M-estimation: `min F(β)` subject to `Aβ = b`.
//!
//! The Newton step is the β-block of the stacked KKT solve
//! `[H Aᵀ; A 0] (Δβ, Δν) = −(∇F + Aᵀν₀, Aβ₀ − b)`, which equals
//! `−(I − Π) H⁻¹ (∇F + Aᵀν₀)` with `Π = H⁻¹Aᵀ(AH⁻¹Aᵀ)⁻¹A`.
//!
//! `Π` is an oblique projector. Its Euclidean norm, and that of `I − Π`, is 1
//! only when the projection happens to be orthogonal; in general it exceeds 1.
//! The certificate therefore reports the literal `δ`, `L δ^{1+α}` pair next to a
//! corrected pair that runs the Newton-step theorem on the stacked system with
//! the exact step and the Hölder constant scaled by `‖I − Π‖`.

use serde::Serialize;

use crate::certify::{newton_remainder, newton_threshold};
use crate::error::{check_dim, Error, Result};
use crate::glm::{self, Dataset};
use crate::losses::LossFamily;
use crate::nls::{self, LinkSpec};
use crate::numkit::{cholesky, op_norm, DenseMatrix, Lu, Vector};

/// Gradient and Hessian of a twice-differentiable objective.
pub trait SmoothObjective: Sync {
    fn grad(&self, beta: &Vector) -> Result<Vector>;
    fn hess(&self, beta: &Vector) -> Result<DenseMatrix>;
}

/// A GLM-type loss as a [`SmoothObjective`].
pub struct GlmObjective<'a> {
    pub data: &'a Dataset,
    pub family: &'a LossFamily,
}

impl SmoothObjective for GlmObjective<'_> {
    fn grad(&self, beta: &Vector) -> Result<Vector> {
        glm::score(self.data, self.family, beta)
    }
    fn hess(&self, beta: &Vector) -> Result<DenseMatrix> {
        glm::hessian(self.data, self.family, beta)
    }
}

/// Nonlinear least squares as a [`SmoothObjective`].
pub struct NlsObjective<'a> {
    pub data: &'a Dataset,
    pub link: &'a LinkSpec,
}

impl SmoothObjective for NlsObjective<'_> {
    fn grad(&self, beta: &Vector) -> Result<Vector> {
        nls::nls_grad(self.data, self.link, beta)
    }
    fn hess(&self, beta: &Vector) -> Result<DenseMatrix> {
        nls::nls_hess(self.data, self.link, beta)
    }
}

/// `F(β) = ½ βᵀHβ + cᵀβ`
pub struct Quadratic {
    pub h: DenseMatrix,
    pub c: Vector,
}

impl SmoothObjective for Quadratic {
    fn grad(&self, beta: &Vector) -> Result<Vector> {
        Ok(&self.h.matvec(beta)? + &self.c)
    }
    fn hess(&self, _beta: &Vector) -> Result<DenseMatrix> {
        Ok(self.h.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KktPoint {
    pub beta: Vector,
    pub nu: Vector,
    /// `‖Aβ − b‖₂`
    pub primal_residual: f64,
    /// `‖∇F(β) + Aᵀν‖₂`
    pub dual_residual: f64,
}

impl KktPoint {
    pub fn evaluate(obj: &dyn SmoothObjective, a: &DenseMatrix, b: &Vector, beta: Vector, nu: Vector) -> Result<Self> {
        let primal = (&a.matvec(&beta)? - b).norm2();
        let dual = (&obj.grad(&beta)? + &a.t_matvec(&nu)?).norm2();
        Ok(KktPoint { beta, nu, primal_residual: primal, dual_residual: dual })
    }
}

fn check_constraints(a: &DenseMatrix, b: &Vector, p: usize) -> Result<()> {
    check_dim(p, a.cols())?;
    check_dim(a.rows(), b.len())?;
    if a.rows() == 0 || a.rows() > p {
        return Err(Error::InvalidInput(format!("need 1 <= d <= p constraints, got d = {}", a.rows())));
    }
    match Lu::factor(&a.matmul(&a.transpose())?) {
        Ok(_) => Ok(()),
        Err(Error::Singular { pivot }) => Err(Error::InvalidInput(format!(
            "constraint matrix is not of full row rank (pivot {pivot:e})"
        ))),
        Err(e) => Err(e),
    }
}

fn kkt_matrix(h: &DenseMatrix, a: &DenseMatrix) -> Result<DenseMatrix> {
    DenseMatrix::block(h, &a.transpose(), a, &DenseMatrix::zeros(a.rows(), a.rows()))
}

/// Newton on the stacked KKT system, damped on the residual norm.
pub fn kkt_solve(
    obj: &dyn SmoothObjective,
    a: &DenseMatrix,
    b: &Vector,
    init: &KktPoint,
    tol: f64,
    max_iter: usize,
) -> Result<KktPoint> {
    let p = init.beta.len();
    let d = a.rows();
    check_constraints(a, b, p)?;
    check_dim(d, init.nu.len())?;
    let residual = |beta: &Vector, nu: &Vector| -> Result<Vector> {
        let top = &obj.grad(beta)? + &a.t_matvec(nu)?;
        let bot = &a.matvec(beta)? - b;
        let mut v = top.into_vec();
        v.extend_from_slice(bot.as_slice());
        Ok(Vector::from(v))
    };
    let mut beta = init.beta.clone();
    let mut nu = init.nu.clone();
    let mut r = residual(&beta, &nu)?;
    for _ in 0..max_iter {
        let pt = KktPoint::evaluate(obj, a, b, beta.clone(), nu.clone())?;
        if pt.primal_residual <= tol && pt.dual_residual <= tol {
            return Ok(pt);
        }
        let k = kkt_matrix(&obj.hess(&beta)?, a)?;
        let step = -&Lu::factor(&k)?.solve(&r)?;
        let rnorm = r.norm2();
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..=50 {
            let mut nb = beta.clone();
            let mut nn = nu.clone();
            for j in 0..p {
                nb[j] += t * step[j];
            }
            for j in 0..d {
                nn[j] += t * step[p + j];
            }
            let rc = residual(&nb, &nn)?;
            if rc.is_finite() && rc.norm2() < rnorm {
                beta = nb;
                nu = nn;
                r = rc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let pt = KktPoint::evaluate(obj, a, b, beta, nu)?;
    if pt.primal_residual <= tol && pt.dual_residual <= tol {
        return Ok(pt);
    }
    Err(Error::NonConvergence { iterations: max_iter, residual: pt.primal_residual.max(pt.dual_residual) })
}

/// `ν₀ = −(AAᵀ)⁻¹ A ∇F(β₀)`, the least-squares multiplier.
pub fn default_multiplier(obj: &dyn SmoothObjective, a: &DenseMatrix, beta0: &Vector) -> Result<Vector> {
    let g = obj.grad(beta0)?;
    Ok(-&Lu::factor(&a.matmul(&a.transpose())?)?.solve(&a.matvec(&g)?)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstrainedCertificate {
    pub beta0: Vector,
    pub nu0: Vector,
    /// `1.5 (1 + ‖(AH⁻¹Aᵀ)⁻¹A‖) ‖H⁻¹(∇F + Aᵀν₀)‖`
    pub delta: f64,
    #[serde(rename = "lipschitz")]
    pub l: f64,
    pub alpha: f64,
    /// `delta ≤ (3L)^{−1/α}`
    pub condition_ok: bool,
    /// β-block of the stacked Newton step.
    pub step: Vector,
    /// ν-block of the stacked Newton step.
    pub nu_step: Vector,
    /// `L delta^{1+α}`
    pub remainder_bound: f64,
    /// `‖I − Π‖_op ≥ 1`
    pub projector_norm: f64,
    /// `1.5 ‖(Δβ, Δν)‖₂`
    pub corrected_delta: f64,
    /// Stacked Newton-step condition with Hölder constant `‖I − Π‖ L`.
    pub corrected_condition_ok: bool,
    /// `‖I − Π‖ L corrected_delta^{1+α}`
    pub corrected_remainder_bound: f64,
}

/// Certificate at a feasible `(β₀, ν₀)`; the caller certifies
/// `‖H₀⁻¹(H(β) − H₀)‖ ≤ L ‖β − β₀‖^α` on `B(β₀, (3L)^{−1/α})`.
pub fn certify_constrained(
    obj: &dyn SmoothObjective,
    a: &DenseMatrix,
    b: &Vector,
    beta0: &Vector,
    nu0: &Vector,
    l: f64,
    alpha: f64,
) -> Result<ConstrainedCertificate> {
    let p = beta0.len();
    let d = a.rows();
    check_constraints(a, b, p)?;
    check_dim(d, nu0.len())?;
    if !(l >= 0.0) || !l.is_finite() {
        return Err(Error::InvalidInput(format!("L must be finite and nonnegative, got {l}")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let infeas = (&a.matvec(beta0)? - b).norm2();
    if infeas > 1e-9 * (1.0 + b.norm2()) {
        return Err(Error::InvalidInput(format!("beta0 is infeasible: |A beta0 - b| = {infeas:e}")));
    }

    let h = obj.hess(beta0)?;
    let r = &obj.grad(beta0)? + &a.t_matvec(nu0)?;
    let hlu = Lu::factor(&h)?;
    let s = hlu.solve(&r)?;
    let hinv_at = hlu.solve_matrix(&a.transpose())?;
    let m = a.matmul(&hinv_at)?;
    let mlu = Lu::factor(&m)?;
    let m_inv_a = mlu.solve_matrix(a)?;
    let delta = 1.5 * (1.0 + op_norm(&m_inv_a)?) * s.norm2();

    let pi = hinv_at.matmul(&m_inv_a)?;
    let projector_norm = op_norm(&DenseMatrix::identity(p).sub(&pi)?)?;

    let k = kkt_matrix(&h, a)?;
    let mut rhs = r.clone().into_vec();
    rhs.extend(std::iter::repeat_n(0.0, d));
    let full = -&Lu::factor(&k)?.solve(&Vector::from(rhs))?;
    let step = Vector::from(&full.as_slice()[..p]);
    let nu_step = Vector::from(&full.as_slice()[p..]);

    let limit = if l == 0.0 { f64::INFINITY } else { (3.0 * l).powf(-1.0 / alpha) };
    let lc = projector_norm * l;
    let full_norm = full.norm2();
    Ok(ConstrainedCertificate {
        beta0: beta0.clone(),
        nu0: nu0.clone(),
        delta,
        l,
        alpha,
        condition_ok: delta <= limit,
        step,
        nu_step,
        remainder_bound: l * delta.powf(1.0 + alpha),
        projector_norm,
        corrected_delta: 1.5 * full_norm,
        corrected_condition_ok: full_norm <= newton_threshold(lc, alpha),
        corrected_remainder_bound: newton_remainder(lc, alpha, full_norm),
    })
}

/// `(‖Π‖₂, ‖H^{1/2} Π H^{−1/2}‖₂)`; the second is 1 for SPD `H` because `Π` is
/// the `H`-orthogonal projector onto the row space of `A` pulled back by `H⁻¹`.
pub fn projector_norms(h: &DenseMatrix, a: &DenseMatrix) -> Result<(f64, f64)> {
    let hlu = Lu::factor(h)?;
    let hinv_at = hlu.solve_matrix(&a.transpose())?;
    let m_inv_a = Lu::factor(&a.matmul(&hinv_at)?)?.solve_matrix(a)?;
    let pi = hinv_at.matmul(&m_inv_a)?;
    // With H = LLᵀ, ‖H^{1/2} Π H^{−1/2}‖ = ‖Lᵀ Π L^{−ᵀ}‖.
    let lo = cholesky(h)?;
    let lt = lo.transpose();
    let lt_inv = Lu::factor(&lt)?.inverse()?;
    let energy = op_norm(&lt.matmul(&pi)?.matmul(&lt_inv)?)?;
    Ok((op_norm(&pi)?, energy))
}

/// Hölder constant for a GLM objective, for use with [`certify_constrained`].
pub fn glm_hessian_lipschitz(data: &Dataset, fam: &LossFamily, beta0: &Vector) -> Result<(f64, f64)> {
    glm::hessian_lipschitz(data, fam, beta0)
}
