//! Nonlinear least squares `F(θ) = (1/n) Σ (yᵢ − g(xᵢᵀθ))²` and local certificates
//! for its critical points.

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::glm::{Dataset, FitOptions};
use crate::losses::{sigmoid_and_var, WeightFn};
use crate::numkit::{norm2, op_norm, DenseMatrix, Lu, Vector};

pub type LinkFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A link `g` with its first two derivatives and the (NR) constants:
/// `|g(xᵀθ₁) − g(xᵀθ₂)| ≤ c0(x)‖θ₁−θ₂‖`, the same for `g′` with `c1`, and
/// `|g″(xᵀθ₁) − g″(xᵀθ₂)| ≤ c2(x)‖θ₁−θ₂‖^α`.
#[derive(Clone)]
pub struct LinkSpec {
    pub name: String,
    pub g: LinkFn,
    pub g1: LinkFn,
    pub g2: LinkFn,
    pub c0: WeightFn,
    pub c1: WeightFn,
    pub c2: WeightFn,
    pub alpha: f64,
}

impl std::fmt::Debug for LinkSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinkSpec").field("name", &self.name).field("alpha", &self.alpha).finish()
    }
}

fn sigma_derivs(t: f64) -> (f64, f64, f64, f64) {
    let (s, v) = sigmoid_and_var(t);
    // σ″ = σ′(1 − 2σ), σ‴ = σ′(1 − 6σ + 6σ²)
    (s, v, v * (1.0 - 2.0 * s), v * (1.0 - 6.0 * s + 6.0 * s * s))
}

/// `sup |f|` over the real line for a smooth function decaying in both tails:
/// dense scan on [−40, 40], golden-section refinement, then rounded up by 1e-12.
fn sup_abs(f: impl Fn(f64) -> f64) -> f64 {
    let step = 1e-3;
    let mut best_t = 0.0;
    let mut best = 0.0f64;
    let mut t = -40.0;
    while t <= 40.0 {
        let v = f(t).abs();
        if v > best {
            best = v;
            best_t = t;
        }
        t += step;
    }
    let (mut a, mut b) = (best_t - step, best_t + step);
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - gr * (b - a);
        let d = a + gr * (b - a);
        if f(c).abs() > f(d).abs() {
            b = d;
        } else {
            a = c;
        }
    }
    best.max(f(0.5 * (a + b)).abs()) + 1e-12
}

/// `(sup|σ″|, sup|σ‴|)`, computed once.
pub fn logistic_link_bounds() -> (f64, f64) {
    static B: OnceLock<(f64, f64)> = OnceLock::new();
    *B.get_or_init(|| {
        let b = (sup_abs(|t| sigma_derivs(t).2), sup_abs(|t| sigma_derivs(t).3));
        let link = logistic_unchecked(b);
        if let Err(e) = link.check_on_grid(&[vec![1.0], vec![0.3, -2.0]]) {
            panic!("built-in logistic (NR) constants fail their grid check: {e}");
        }
        b
    })
}

fn logistic_unchecked((s2, s3): (f64, f64)) -> LinkSpec {
    LinkSpec {
        name: "logistic".into(),
        g: Arc::new(|t| sigma_derivs(t).0),
        g1: Arc::new(|t| sigma_derivs(t).1),
        g2: Arc::new(|t| sigma_derivs(t).2),
        c0: Arc::new(|x| norm2(x) / 4.0),
        c1: Arc::new(move |x| norm2(x) * s2),
        c2: Arc::new(move |x| norm2(x) * s3),
        alpha: 1.0,
    }
}

impl LinkSpec {
    /// Logistic link `σ(t)` with built-in constants `c0 = ‖x‖/4`,
    /// `c1 = ‖x‖ sup|σ″|`, `c2 = ‖x‖ sup|σ‴|`, `α = 1`.
    pub fn logistic() -> Self {
        logistic_unchecked(logistic_link_bounds())
    }

    /// Identity link; least squares reduces to OLS and all constants except `c0` vanish.
    pub fn identity() -> Self {
        LinkSpec {
            name: "identity".into(),
            g: Arc::new(|t| t),
            g1: Arc::new(|_| 1.0),
            g2: Arc::new(|_| 0.0),
            c0: Arc::new(norm2),
            c1: Arc::new(|_| 0.0),
            c2: Arc::new(|_| 0.0),
            alpha: 1.0,
        }
    }

    /// Check the three (NR) inequalities along `x` on the grid `u ∈ [−6, 6]`, step 0.05.
    pub fn check_on_grid(&self, xs: &[Vec<f64>]) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidInput(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        let grid: Vec<f64> = (0..=240).map(|k| -6.0 + 0.05 * k as f64).collect();
        for x in xs {
            let nx = norm2(x);
            if nx == 0.0 {
                continue;
            }
            let (c0, c1, c2) = ((self.c0)(x), (self.c1)(x), (self.c2)(x));
            for &u in &grid {
                for &v in &grid {
                    // Moving θ along x changes the predictor fastest: |Δu| = ‖x‖‖Δθ‖.
                    let d = (u - v).abs() / nx;
                    let tol = |b: f64| b * (1.0 + 1e-9) + 1e-15;
                    if ((self.g)(u) - (self.g)(v)).abs() > tol(c0 * d)
                        || ((self.g1)(u) - (self.g1)(v)).abs() > tol(c1 * d)
                        || ((self.g2)(u) - (self.g2)(v)).abs() > tol(c2 * d.powf(self.alpha))
                    {
                        return Err(Error::InvalidInput(format!(
                            "link '{}' violates its (NR) constants at u={u}, v={v}",
                            self.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn predictors(data: &Dataset, theta: &Vector) -> Result<Vec<f64>> {
    check_dim(data.p(), theta.len())?;
    Ok((0..data.n()).map(|i| crate::numkit::dot(data.x().row(i), theta.as_slice())).collect())
}

pub fn nls_objective(data: &Dataset, link: &LinkSpec, theta: &Vector) -> Result<f64> {
    let u = predictors(data, theta)?;
    let s: f64 = (0..data.n()).map(|i| (data.y()[i] - (link.g)(u[i])).powi(2)).sum();
    Ok(s / data.n() as f64)
}

/// `∇F(θ) = −(2/n) Σ (yᵢ − g) g′ xᵢ`
pub fn nls_grad(data: &Dataset, link: &LinkSpec, theta: &Vector) -> Result<Vector> {
    let u = predictors(data, theta)?;
    let mut out = Vector::zeros(data.p());
    for i in 0..data.n() {
        let c = -(2.0 / data.n() as f64) * (data.y()[i] - (link.g)(u[i])) * (link.g1)(u[i]);
        for (o, x) in out.as_mut_slice().iter_mut().zip(data.x().row(i)) {
            *o += c * x;
        }
    }
    Ok(out)
}

/// `∇²F(θ) = (2/n) Σ [g′² − (yᵢ − g) g″] xᵢxᵢᵀ`
pub fn nls_hess(data: &Dataset, link: &LinkSpec, theta: &Vector) -> Result<DenseMatrix> {
    let u = predictors(data, theta)?;
    let p = data.p();
    let mut h = DenseMatrix::zeros(p, p);
    for i in 0..data.n() {
        let g1 = (link.g1)(u[i]);
        let w = g1 * g1 - (data.y()[i] - (link.g)(u[i])) * (link.g2)(u[i]);
        h.add_outer(w, data.x().row(i));
    }
    Ok(h.scale(2.0 / data.n() as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LConstants {
    pub l2: f64,
    pub l1_alpha: f64,
    pub l1: f64,
    pub l_alpha: f64,
    pub alpha: f64,
}

impl LConstants {
    /// `ω(r) = L₂r² + L_{1+α}r^{1+α} + L₁r + L_α r^α`
    pub fn omega(&self, r: f64) -> f64 {
        let a = self.alpha;
        self.l2 * r * r + self.l1_alpha * r.powf(1.0 + a) + self.l1 * r + self.l_alpha * r.powf(a)
    }

    /// `min_j (12 L_j)^{−1/j}` over the positive constants; infinite when all vanish.
    pub fn radius_limit(&self) -> f64 {
        let a = self.alpha;
        [(self.l2, 2.0), (self.l1_alpha, 1.0 + a), (self.l1, 1.0), (self.l_alpha, a)]
            .iter()
            .filter(|(l, _)| *l > 0.0)
            .fold(f64::INFINITY, |m, (l, j)| m.min((12.0 * l).powf(-1.0 / j)))
    }
}

fn constants_with(data: &Dataset, link: &LinkSpec, theta0: &Vector, lu: &Lu) -> Result<LConstants> {
    let u = predictors(data, theta0)?;
    let p = data.p();
    let mut m = [DenseMatrix::zeros(p, p), DenseMatrix::zeros(p, p), DenseMatrix::zeros(p, p), DenseMatrix::zeros(p, p)];
    for i in 0..data.n() {
        let x = data.x().row(i);
        let (c0, c1, c2) = ((link.c0)(x), (link.c1)(x), (link.c2)(x));
        if [c0, c1, c2].iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidInput(format!("(NR) constants at row {i} must be finite and nonnegative")));
        }
        let resid = (data.y()[i] - (link.g)(u[i])).abs();
        let w = [
            c1 * c1,
            c0 * c2,
            2.0 * c1 * (link.g1)(u[i]).abs() + c0 * (link.g2)(u[i]).abs(),
            c2 * resid,
        ];
        for k in 0..4 {
            m[k].add_outer(w[k], x);
        }
    }
    let scale = 2.0 / data.n() as f64;
    let norm = |k: usize| -> Result<f64> { op_norm(&lu.solve_matrix(&m[k].scale(scale))?) };
    Ok(LConstants { l2: norm(0)?, l1_alpha: norm(1)?, l1: norm(2)?, l_alpha: norm(3)?, alpha: link.alpha })
}

/// The four operator-norm constants at `θ₀`.
pub fn nls_constants(data: &Dataset, link: &LinkSpec, theta0: &Vector) -> Result<LConstants> {
    let lu = Lu::factor(&nls_hess(data, link, theta0)?)?;
    constants_with(data, link, theta0, &lu)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NlsCertificate {
    pub target: Vector,
    pub delta: f64,
    #[serde(rename = "l_constants")]
    pub constants: LConstants,
    /// `min_j (12 L_j)^{−1/j}`
    pub radius_limit: f64,
    pub condition_ok: bool,
    pub newton_step: Vector,
    /// `ω(δ) δ`
    pub remainder_bound: f64,
}

pub fn certify_nls(data: &Dataset, link: &LinkSpec, theta0: &Vector) -> Result<NlsCertificate> {
    let g = nls_grad(data, link, theta0)?;
    let lu = Lu::factor(&nls_hess(data, link, theta0)?)?;
    let hg = lu.solve(&g)?;
    let delta = 1.5 * hg.norm2();
    let constants = constants_with(data, link, theta0, &lu)?;
    let radius_limit = constants.radius_limit();
    Ok(NlsCertificate {
        target: theta0.clone(),
        delta,
        constants,
        radius_limit,
        condition_ok: delta <= radius_limit,
        newton_step: -&hg,
        remainder_bound: constants.omega(delta) * delta,
    })
}

/// Damped Newton for `∇F(θ) = 0`, halving on `‖∇F‖₂`. Finds saddles and maxima
/// as readily as minima, which is what a landscape scan needs.
pub fn nls_solve(data: &Dataset, link: &LinkSpec, init: &Vector, opts: FitOptions) -> Result<Vector> {
    let mut theta = init.clone();
    let mut g = nls_grad(data, link, &theta)?;
    for _ in 0..opts.max_iter {
        let gnorm = g.norm2();
        if gnorm <= opts.tol {
            return Ok(theta);
        }
        let step = match Lu::factor(&nls_hess(data, link, &theta)?) {
            Ok(lu) => -&lu.solve(&g)?,
            Err(_) => break,
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..=50 {
            let mut cand = theta.clone();
            cand.axpy(t, &step);
            let gc = nls_grad(data, link, &cand)?;
            if gc.is_finite() && gc.norm2() < gnorm {
                theta = cand;
                g = gc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, residual: g.norm2() })
}

/// Run [`nls_solve`] from every start in parallel; results keep the input order.
pub fn multistart(data: &Dataset, link: &LinkSpec, starts: &[Vector], opts: FitOptions) -> Vec<Result<Vector>> {
    starts.par_iter().map(|s| nls_solve(data, link, s, opts)).collect()
}
