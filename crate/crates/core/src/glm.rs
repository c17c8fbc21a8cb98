//! Convex M-estimation for objectives `(1/n) Σ h(xᵢ) ℓ(xᵢᵀθ, yᵢ)`.
//!
//! Certificates follow the predictor-space reduction: with
//! `δ = 1.5 ‖Q̂⁻¹Ẑ‖₂` at the target, the root is bracketed in `[δ/2, δ]` and the
//! one-step expansion error is at most `(C̄max − 1) δ` once
//! `C̄max = maxᵢ C̄(‖xᵢ‖₂ δ) ≤ 4/3`.
//!
//! The [`MetricCheck`] attached to each certificate repeats the argument in the
//! `Q̂`-energy norm, where it holds for any conditioning, and converts back to
//! Euclidean distances through the extreme eigenvalues of `Q̂`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::losses::LossFamily;
use crate::numkit::{op_norm, DenseMatrix, Lu, Vector};

/// Curvature-ratio threshold of the certificate.
pub const C_THRESHOLD: f64 = 4.0 / 3.0;

/// Immutable regression design: `n × p` covariates and a response.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: DenseMatrix,
    y: Vector,
}

impl Dataset {
    pub fn new(x: DenseMatrix, y: Vector) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 {
            return Err(Error::InvalidInput(format!("need n >= 1 and p >= 1, got {}x{}", x.rows(), x.cols())));
        }
        check_dim(x.rows(), y.len())?;
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::InvalidInput("dataset has non-finite entries".into()));
        }
        Ok(Dataset { x, y })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        Self::new(DenseMatrix::from_rows(rows)?, Vector::new(y)?)
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }

    /// Restriction to the given rows (in the given order).
    pub fn select_rows(&self, idx: &[usize]) -> Result<Dataset> {
        if let Some(&i) = idx.iter().find(|&&i| i >= self.n()) {
            return Err(Error::InvalidInput(format!("row index {i} out of range for n = {}", self.n())));
        }
        Dataset::new(self.x.select_rows(idx), self.y.select(idx))
    }

    /// Restriction to the given columns (in the given order).
    pub fn select_cols(&self, idx: &[usize]) -> Result<Dataset> {
        if let Some(&j) = idx.iter().find(|&&j| j >= self.p()) {
            return Err(Error::InvalidInput(format!("column index {j} out of range for p = {}", self.p())));
        }
        Dataset::new(self.x.select_cols(idx), self.y.clone())
    }

    /// All rows except those listed.
    pub fn without_rows(&self, drop: &[usize]) -> Result<Dataset> {
        let mut mask = vec![true; self.n()];
        for &i in drop {
            if i >= self.n() {
                return Err(Error::InvalidInput(format!("row index {i} out of range for n = {}", self.n())));
            }
            mask[i] = false;
        }
        let keep: Vec<usize> = (0..self.n()).filter(|&i| mask[i]).collect();
        self.select_rows(&keep)
    }

    /// `‖xᵢ‖₂` for every row.
    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.n()).map(|i| crate::numkit::norm2(self.x.row(i))).collect()
    }
}

fn predictor(data: &Dataset, theta: &Vector, i: usize) -> f64 {
    crate::numkit::dot(data.x.row(i), theta.as_slice())
}

/// `(1/n) Σ h(xᵢ) ℓ(xᵢᵀθ, yᵢ)`
pub fn objective(data: &Dataset, fam: &LossFamily, theta: &Vector) -> Result<f64> {
    check_dim(data.p(), theta.len())?;
    let mut s = 0.0;
    for i in 0..data.n() {
        let x = data.x.row(i);
        s += fam.row(x, predictor(data, theta, i), data.y[i])?.d0;
    }
    Ok(s / data.n() as f64)
}

/// `Ẑ(θ) = (1/n) Σ h(xᵢ) ℓ′(xᵢᵀθ, yᵢ) xᵢ`
pub fn score(data: &Dataset, fam: &LossFamily, theta: &Vector) -> Result<Vector> {
    check_dim(data.p(), theta.len())?;
    let mut z = Vector::zeros(data.p());
    for i in 0..data.n() {
        let x = data.x.row(i);
        let d1 = fam.row(x, predictor(data, theta, i), data.y[i])?.d1;
        for (zj, xj) in z.as_mut_slice().iter_mut().zip(x) {
            *zj += d1 * xj;
        }
    }
    Ok(z.scale(1.0 / data.n() as f64))
}

/// `Q̂(θ) = (1/n) Σ h(xᵢ) ℓ″(xᵢᵀθ, yᵢ) xᵢxᵢᵀ`
pub fn hessian(data: &Dataset, fam: &LossFamily, theta: &Vector) -> Result<DenseMatrix> {
    Ok(score_and_hessian(data, fam, theta)?.1)
}

/// Score and Hessian in one pass over the rows.
pub fn score_and_hessian(data: &Dataset, fam: &LossFamily, theta: &Vector) -> Result<(Vector, DenseMatrix)> {
    check_dim(data.p(), theta.len())?;
    let p = data.p();
    let mut z = Vector::zeros(p);
    let mut q = DenseMatrix::zeros(p, p);
    for i in 0..data.n() {
        let x = data.x.row(i);
        let r = fam.row(x, predictor(data, theta, i), data.y[i])?;
        for (zj, xj) in z.as_mut_slice().iter_mut().zip(x) {
            *zj += r.d1 * xj;
        }
        q.add_outer(r.d2, x);
    }
    let inv_n = 1.0 / data.n() as f64;
    Ok((z.scale(inv_n), q.scale(inv_n)))
}

/// `1.5 ‖Q̂(θ₀)⁻¹ Ẑ(θ₀)‖₂`
pub fn delta(data: &Dataset, fam: &LossFamily, theta0: &Vector) -> Result<f64> {
    let (z, q) = score_and_hessian(data, fam, theta0)?;
    Ok(1.5 * Lu::factor(&q)?.solve(&z)?.norm2())
}

/// Solver settings for [`fit`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { tol: 1e-10, max_iter: 100 }
    }
}

const MAX_HALVINGS: usize = 50;

/// Damped Newton for `Ẑ(θ) = 0` with step halving on the objective.
///
/// Converged means `‖Ẑ‖₂ ≤ tol` and the pending Newton step is below
/// `√tol (1 + ‖θ‖₂)`; the second test is what turns a fit drifting to infinity
/// (separated logistic data, say) into [`Error::NonConvergence`].
pub fn fit(data: &Dataset, fam: &LossFamily, init: &Vector, opts: FitOptions) -> Result<Vector> {
    check_dim(data.p(), init.len())?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!("tol must be positive, got {}", opts.tol)));
    }
    let step_tol = opts.tol.sqrt();
    let mut theta = init.clone();
    let mut last = f64::INFINITY;
    for it in 0..opts.max_iter {
        let (g, h) = score_and_hessian(data, fam, &theta)?;
        let gnorm = g.norm2();
        last = gnorm;
        let step = match Lu::factor(&h) {
            Ok(lu) => -&lu.solve(&g)?,
            Err(Error::Singular { pivot }) if it == 0 => return Err(Error::Singular { pivot }),
            Err(Error::Singular { .. }) => break,
            Err(e) => return Err(e),
        };
        if gnorm <= opts.tol && step.norm2() <= step_tol * (1.0 + theta.norm2()) {
            return Ok(theta);
        }
        let obj0 = objective(data, fam, &theta)?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut cand = theta.clone();
            cand.axpy(t, &step);
            if cand.is_finite() {
                let obj = objective(data, fam, &cand)?;
                if obj.is_finite() && (obj <= obj0 || score(data, fam, &cand)?.norm2() < gnorm) {
                    accepted = Some(cand);
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some(c) => theta = c,
            None => break,
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, residual: last })
}

/// The certificate hypotheses redone in the `Q̂`-energy norm `‖v‖_Q = √(vᵀQ̂v)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricCheck {
    /// `1.5 √(ẐᵀQ̂⁻¹Ẑ)`
    pub delta: f64,
    /// `maxᵢ C̄(√(xᵢᵀQ̂⁻¹xᵢ) · delta)`
    pub condition_max_c: f64,
    pub condition_ok: bool,
    /// Euclidean lower bound `delta / (2 √λmax(Q̂))`.
    pub bracket_lo: f64,
    /// Euclidean upper bound `delta / √λmin(Q̂)`.
    pub bracket_hi: f64,
    /// Euclidean expansion bound `(condition_max_c − 1) delta / √λmin(Q̂)`.
    pub expansion_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GlmCertificate {
    pub target: Vector,
    pub delta: f64,
    pub condition_max_c: f64,
    pub condition_ok: bool,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    /// `−Q̂(θ₀)⁻¹ Ẑ(θ₀)`
    pub newton_step: Vector,
    pub expansion_bound_empirical: f64,
    /// `−Q_ref⁻¹ Ẑ(θ₀)` when a reference Hessian was supplied.
    pub reference_step: Option<Vector>,
    pub expansion_bound_reference: Option<f64>,
    /// `‖Q_ref⁻¹ Q̂ − I‖_op`
    pub reference_mismatch: Option<f64>,
    pub metric: MetricCheck,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianSource {
    Empirical,
    Reference,
}

/// `θ̂ ≈ θ₀ + step` with an explicit remainder bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearExpansion {
    pub target: Vector,
    pub step: Vector,
    pub remainder_bound: f64,
    pub hessian: HessianSource,
    pub condition_ok: bool,
}

/// Certificate at `θ₀`, optionally against a reference Hessian `Q_ref`.
pub fn certify(data: &Dataset, fam: &LossFamily, theta0: &Vector, q_ref: Option<&DenseMatrix>) -> Result<GlmCertificate> {
    let (z, q) = score_and_hessian(data, fam, theta0)?;
    let lu = Lu::factor(&q)?;
    let qz = lu.solve(&z)?;
    let newton_step = -&qz;
    let delta = 1.5 * qz.norm2();
    let norms = data.row_norms();
    let condition_max_c = norms.iter().fold(1.0f64, |m, &nx| m.max(fam.cbound(nx * delta)));
    let expansion_bound_empirical = (condition_max_c - 1.0) * delta;

    let (reference_step, expansion_bound_reference, reference_mismatch) = match q_ref {
        None => (None, None, None),
        Some(qr) => {
            check_dim(data.p(), qr.rows())?;
            check_dim(data.p(), qr.cols())?;
            let rlu = Lu::factor(qr)?;
            let mismatch = op_norm(&rlu.solve_matrix(&q)?.sub(&DenseMatrix::identity(data.p()))?)?;
            let step = -&rlu.solve(&z)?;
            (Some(step), Some((condition_max_c - 1.0 + mismatch) * delta), Some(mismatch))
        }
    };

    let metric = metric_check(data, fam, &lu, &q, &z, &qz)?;

    Ok(GlmCertificate {
        target: theta0.clone(),
        delta,
        condition_max_c,
        condition_ok: condition_max_c <= C_THRESHOLD,
        bracket_lo: delta / 2.0,
        bracket_hi: delta,
        newton_step,
        expansion_bound_empirical,
        reference_step,
        expansion_bound_reference,
        reference_mismatch,
        metric,
    })
}

fn metric_check(data: &Dataset, fam: &LossFamily, lu: &Lu, q: &DenseMatrix, z: &Vector, qz: &Vector) -> Result<MetricCheck> {
    let delta = 1.5 * z.dot(qz).max(0.0).sqrt();
    let mut cmax = 1.0f64;
    for i in 0..data.n() {
        let x = Vector::from(data.x.row(i));
        let lev = x.dot(&lu.solve(&x)?).max(0.0).sqrt();
        cmax = cmax.max(fam.cbound(lev * delta));
    }
    let lmax = op_norm(q)?;
    let lmin = 1.0 / op_norm(&lu.inverse()?)?;
    Ok(MetricCheck {
        delta,
        condition_max_c: cmax,
        condition_ok: cmax <= C_THRESHOLD,
        bracket_lo: delta / (2.0 * lmax.sqrt()),
        bracket_hi: delta / lmin.sqrt(),
        expansion_bound: (cmax - 1.0) * delta / lmin.sqrt(),
    })
}

/// Certificates at many targets, computed in parallel, returned in input order.
pub fn certify_many(
    data: &Dataset,
    fam: &LossFamily,
    targets: &[Vector],
    q_ref: Option<&DenseMatrix>,
) -> Vec<Result<GlmCertificate>> {
    targets.par_iter().map(|t| certify(data, fam, t, q_ref)).collect()
}

/// The one-step expansion at `θ₀`; uses `Q_ref` for the step when supplied.
pub fn expansion(data: &Dataset, fam: &LossFamily, theta0: &Vector, q_ref: Option<&DenseMatrix>) -> Result<LinearExpansion> {
    let c = certify(data, fam, theta0, q_ref)?;
    Ok(match (c.reference_step, c.expansion_bound_reference) {
        (Some(step), Some(bound)) => LinearExpansion {
            target: c.target,
            step,
            remainder_bound: bound,
            hessian: HessianSource::Reference,
            condition_ok: c.condition_ok,
        },
        _ => LinearExpansion {
            target: c.target,
            step: c.newton_step,
            remainder_bound: c.expansion_bound_empirical,
            hessian: HessianSource::Empirical,
            condition_ok: c.condition_ok,
        },
    })
}

/// Hölder constant (`α = 1`) for the objective Hessian around `θ₀`:
/// `‖H₀⁻¹(H(θ) − H₀)‖_op ≤ L ‖θ − θ₀‖₂` whenever `3L ‖θ − θ₀‖₂ ≤ 1`.
///
/// With `M(r) = (1/n) Σ h ℓ″₀ (C̄(‖xᵢ‖ r) − 1) xᵢxᵢᵀ` the variation on `B(θ₀, r)` is
/// at most `φ(r) = ‖H₀⁻¹‖ ‖M(r)‖`. For a convex `C̄` with `C̄(0) = 1`, `φ(r)/r` is
/// nondecreasing, so `L = φ(R)/R` with `φ(R) ≥ 1/3` covers the whole ball the
/// Newton-step certificate looks at.
pub fn hessian_lipschitz(data: &Dataset, fam: &LossFamily, theta0: &Vector) -> Result<(f64, f64)> {
    if !fam.cbound_is_convex() {
        return Err(Error::InvalidInput(
            "Hessian Lipschitz constant needs a built-in (convex) curvature bound".into(),
        ));
    }
    check_dim(data.p(), theta0.len())?;
    let p = data.p();
    let h0 = hessian(data, fam, theta0)?;
    let hinv = op_norm(&Lu::factor(&h0)?.inverse()?)?;
    let norms = data.row_norms();
    let curv: Vec<f64> = (0..data.n())
        .map(|i| fam.row(data.x.row(i), predictor(data, theta0, i), data.y[i]).map(|r| r.d2))
        .collect::<Result<_>>()?;
    let phi = |r: f64| -> Result<f64> {
        let mut m = DenseMatrix::zeros(p, p);
        for i in 0..data.n() {
            m.add_outer(curv[i] * (fam.cbound(norms[i] * r) - 1.0), data.x.row(i));
        }
        Ok(hinv * op_norm(&m.scale(1.0 / data.n() as f64))?)
    };
    let target = 1.0 / 3.0;
    let mut hi = 1.0;
    let mut grown = 0;
    while phi(hi)? < target {
        hi *= 2.0;
        grown += 1;
        if grown > 1100 || !hi.is_finite() {
            // Zero curvature variation: the Hessian is constant.
            return Ok((0.0, 1.0));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((phi(hi)? / hi, 1.0))
}
