//! Weighted Cox partial likelihood with time-constant covariates.
//!
//! Ties are handled Breslow-style: each event row is scored separately against
//! the risk set `{j : Tⱼ ≥ Tᵢ}`. Event contributions are accumulated in ascending
//! time, then ascending row index.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::glm::FitOptions;
use crate::losses::WeightFn;
use crate::numkit::{dot, norm2, DenseMatrix, Lu, Vector};

/// Condition threshold on `sup μ · δ`.
pub const COX_THRESHOLD: f64 = 1.0 / 16.0;

#[derive(Clone)]
pub struct SurvivalDataset {
    x: DenseMatrix,
    time: Vector,
    status: Vec<bool>,
    h1: Option<WeightFn>,
    h2: Option<WeightFn>,
    /// Event rows sorted by (time, index).
    events: Vec<usize>,
}

impl std::fmt::Debug for SurvivalDataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SurvivalDataset")
            .field("n", &self.n())
            .field("p", &self.p())
            .field("events", &self.events.len())
            .finish()
    }
}

impl SurvivalDataset {
    pub fn new(x: DenseMatrix, time: Vector, status: Vec<bool>) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 {
            return Err(Error::InvalidInput("survival data needs n >= 1 and p >= 1".into()));
        }
        check_dim(x.rows(), time.len())?;
        check_dim(x.rows(), status.len())?;
        if !x.is_finite() {
            return Err(Error::InvalidInput("covariates have non-finite entries".into()));
        }
        if let Some(i) = time.iter().position(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidInput(format!("time at row {i} must be finite and nonnegative")));
        }
        let mut events: Vec<usize> = (0..x.rows()).filter(|&i| status[i]).collect();
        if events.is_empty() {
            return Err(Error::InvalidInput("survival data has no events".into()));
        }
        events.sort_by(|&a, &b| time[a].total_cmp(&time[b]).then(a.cmp(&b)));
        Ok(SurvivalDataset { x, time, status, h1: None, h2: None, events })
    }

    /// Event-side weight `H₁(x) ≥ 0`.
    pub fn with_h1(mut self, h: WeightFn) -> Self {
        self.h1 = Some(h);
        self
    }

    /// Risk-set weight `H₂(x) ≥ 0`.
    pub fn with_h2(mut self, h: WeightFn) -> Self {
        self.h2 = Some(h);
        self
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

    pub fn time(&self) -> &Vector {
        &self.time
    }

    pub fn status(&self) -> &[bool] {
        &self.status
    }

    /// The same survival fields with a different covariate matrix.
    pub fn with_covariates(&self, x: DenseMatrix) -> Result<Self> {
        check_dim(self.n(), x.rows())?;
        let mut d = Self::new(x, self.time.clone(), self.status.clone())?;
        d.h1 = self.h1.clone();
        d.h2 = self.h2.clone();
        Ok(d)
    }

    fn weight(h: &Option<WeightFn>, x: &[f64]) -> Result<f64> {
        match h {
            None => Ok(1.0),
            Some(f) => {
                let v = f(x);
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidInput(format!("weight {v} must be finite and nonnegative")));
                }
                Ok(v)
            }
        }
    }
}

/// Softmax-tilted moments of one risk set.
struct RiskSet {
    log_total: f64,
    mean: Vec<f64>,
    cov: DenseMatrix,
}

/// Direct evaluation at one time with its own max shift. Used when the shared
/// shift of [`risk_sets`] underflows.
fn risk_set(data: &SurvivalDataset, beta: &[f64], t: f64, want_cov: bool) -> Result<RiskSet> {
    let p = data.p();
    let mut members = Vec::new();
    let mut eta = Vec::new();
    let mut h2 = Vec::new();
    for j in 0..data.n() {
        if data.time[j] >= t {
            let w = SurvivalDataset::weight(&data.h2, data.x.row(j))?;
            members.push(j);
            h2.push(w);
            eta.push(dot(data.x.row(j), beta));
        }
    }
    let shift = (0..members.len()).filter(|&k| h2[k] > 0.0).fold(f64::NEG_INFINITY, |m, k| m.max(eta[k]));
    if !shift.is_finite() {
        return Err(Error::DegenerateRiskSet { time: t });
    }
    let w: Vec<f64> = (0..members.len()).map(|k| h2[k] * (eta[k] - shift).exp()).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateRiskSet { time: t });
    }
    let mut mean = vec![0.0; p];
    for (k, &j) in members.iter().enumerate() {
        for (m, xj) in mean.iter_mut().zip(data.x.row(j)) {
            *m += w[k] * xj;
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let mut cov = DenseMatrix::zeros(p, p);
    if want_cov {
        let mut d = vec![0.0; p];
        for (k, &j) in members.iter().enumerate() {
            for (dd, (xj, m)) in d.iter_mut().zip(data.x.row(j).iter().zip(&mean)) {
                *dd = xj - m;
            }
            cov.add_outer(w[k] / total, &d);
        }
    }
    Ok(RiskSet { log_total: total.ln() + shift, mean, cov })
}

/// Risk sets at every distinct event time (ascending), in one reverse-time
/// sweep of cumulative tilted sums. Covariates are centered at their column
/// means to limit cancellation in the second moment.
fn risk_sets(data: &SurvivalDataset, beta: &[f64], want_cov: bool) -> Result<(Vec<f64>, Vec<RiskSet>)> {
    let (n, p) = (data.n(), data.p());
    let mut times: Vec<f64> = data.events.iter().map(|&i| data.time[i]).collect();
    times.dedup();
    let mut center = vec![0.0; p];
    for j in 0..n {
        for (c, x) in center.iter_mut().zip(data.x.row(j)) {
            *c += x / n as f64;
        }
    }
    let mut h2 = Vec::with_capacity(n);
    let mut eta = Vec::with_capacity(n);
    for j in 0..n {
        h2.push(SurvivalDataset::weight(&data.h2, data.x.row(j))?);
        eta.push(dot(data.x.row(j), beta));
    }
    let shift = (0..n).filter(|&j| h2[j] > 0.0).fold(f64::NEG_INFINITY, |m, j| m.max(eta[j]));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| data.time[b].total_cmp(&data.time[a]).then(a.cmp(&b)));

    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = DenseMatrix::zeros(p, p);
    let mut d = vec![0.0; p];
    let mut next = 0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times.iter().rev() {
        while next < n && data.time[order[next]] >= t {
            let j = order[next];
            next += 1;
            if h2[j] == 0.0 || !shift.is_finite() {
                continue;
            }
            let w = h2[j] * (eta[j] - shift).exp();
            for (dd, (x, c)) in d.iter_mut().zip(data.x.row(j).iter().zip(&center)) {
                *dd = x - c;
            }
            s0 += w;
            for (a, dd) in s1.iter_mut().zip(&d) {
                *a += w * dd;
            }
            if want_cov {
                s2.add_outer(w, &d);
            }
        }
        // A shared shift far above this risk set's own maximum loses all mass.
        if !(s0 > f64::MIN_POSITIVE * 1e6) {
            out.push(risk_set(data, beta, t, want_cov)?);
            continue;
        }
        let dm: Vec<f64> = s1.iter().map(|a| a / s0).collect();
        let mut cov = DenseMatrix::zeros(p, p);
        if want_cov {
            cov = s2.scale(1.0 / s0);
            cov.add_outer(-1.0, &dm);
        }
        let mean = dm.iter().zip(&center).map(|(a, c)| a + c).collect();
        out.push(RiskSet { log_total: s0.ln() + shift, mean, cov });
    }
    out.reverse();
    Ok((times, out))
}

/// Index of the risk set for event row `i` in the output of [`risk_sets`].
fn time_index(times: &[f64], t: f64) -> usize {
    times.partition_point(|&s| s < t)
}

/// `Σᵢ δᵢ H₁(xᵢ) [log R(Tᵢ, β) − βᵀxᵢ]`, the negative log partial likelihood;
/// its gradient is [`cox_score`].
pub fn cox_objective(data: &SurvivalDataset, beta: &Vector) -> Result<f64> {
    check_dim(data.p(), beta.len())?;
    let (times, sets) = risk_sets(data, beta.as_slice(), false)?;
    let mut s = 0.0;
    for &i in &data.events {
        let h1 = SurvivalDataset::weight(&data.h1, data.x.row(i))?;
        if h1 == 0.0 {
            continue;
        }
        let rs = &sets[time_index(&times, data.time[i])];
        s += h1 * (rs.log_total - dot(data.x.row(i), beta.as_slice()));
    }
    Ok(s)
}

/// `Ẑ(β) = Σ_{events} H₁(xᵢ) (X̄(Tᵢ, β) − xᵢ)`
pub fn cox_score(data: &SurvivalDataset, beta: &Vector) -> Result<Vector> {
    Ok(cox_score_and_jacobian(data, beta, false)?.0)
}

/// `∇Ẑ(β) = Σ_{events} H₁(xᵢ) Cov_β(X | risk set at Tᵢ)`
pub fn cox_jacobian(data: &SurvivalDataset, beta: &Vector) -> Result<DenseMatrix> {
    Ok(cox_score_and_jacobian(data, beta, true)?.1)
}

pub fn cox_score_and_jacobian(data: &SurvivalDataset, beta: &Vector, want_jac: bool) -> Result<(Vector, DenseMatrix)> {
    check_dim(data.p(), beta.len())?;
    let p = data.p();
    let mut z = Vector::zeros(p);
    let mut q = DenseMatrix::zeros(p, p);
    let (times, sets) = risk_sets(data, beta.as_slice(), want_jac)?;
    for &i in &data.events {
        let xi = data.x.row(i);
        let h1 = SurvivalDataset::weight(&data.h1, xi)?;
        let rs = &sets[time_index(&times, data.time[i])];
        if h1 == 0.0 {
            continue;
        }
        for (zj, (m, x)) in z.as_mut_slice().iter_mut().zip(rs.mean.iter().zip(xi)) {
            *zj += h1 * (m - x);
        }
        if want_jac {
            q = q.add(&rs.cov.scale(h1))?;
        }
    }
    Ok((z, q))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MuProfile {
    /// Distinct event times, ascending.
    pub event_times: Vec<f64>,
    /// `maxᵢ ‖xᵢ − X̄_s‖₂` over rows in the risk set at `s`.
    pub risk_set: Vec<f64>,
    /// `maxᵢ ‖xᵢ − X̄_s‖₂` over all rows.
    pub all_rows: Vec<f64>,
    pub sup_risk_set: f64,
    pub sup_all_rows: f64,
}

/// `μ(s) = maxᵢ ‖xᵢ − X̄_s(β₀)‖₂` at every event time.
pub fn mu_profile(data: &SurvivalDataset, beta0: &Vector) -> Result<MuProfile> {
    check_dim(data.p(), beta0.len())?;
    let (times, sets) = risk_sets(data, beta0.as_slice(), false)?;
    let mut risk = Vec::with_capacity(times.len());
    let mut all = Vec::with_capacity(times.len());
    let mut diff = vec![0.0; data.p()];
    let mut dist = |j: usize, mean: &[f64]| {
        for (d, (x, m)) in diff.iter_mut().zip(data.x.row(j).iter().zip(mean)) {
            *d = x - m;
        }
        norm2(&diff)
    };
    for (&t, rs) in times.iter().zip(&sets) {
        let (mut r, mut a) = (0.0f64, 0.0f64);
        for j in 0..data.n() {
            let v = dist(j, &rs.mean);
            a = a.max(v);
            if data.time[j] >= t {
                r = r.max(v);
            }
        }
        risk.push(r);
        all.push(a);
    }
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(*x));
    Ok(MuProfile { sup_risk_set: sup(&risk), sup_all_rows: sup(&all), event_times: times, risk_set: risk, all_rows: all })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoxCertificate {
    pub target: Vector,
    pub delta: f64,
    /// All-rows supremum of `μ`, the value the condition uses.
    pub mu_sup: f64,
    /// Risk-set-restricted supremum, reported for comparison.
    pub mu_sup_risk_set: f64,
    pub condition_ok: bool,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub newton_step: Vector,
    /// `8 e^{1/4} δ² sup μ`
    pub expansion_bound: f64,
}

pub fn certify_cox(data: &SurvivalDataset, beta0: &Vector) -> Result<CoxCertificate> {
    let (z, q) = cox_score_and_jacobian(data, beta0, true)?;
    let qz = Lu::factor(&q)?.solve(&z)?;
    let delta = 1.5 * qz.norm2();
    let mu = mu_profile(data, beta0)?;
    let mu_sup = mu.sup_all_rows;
    Ok(CoxCertificate {
        target: beta0.clone(),
        delta,
        mu_sup,
        mu_sup_risk_set: mu.sup_risk_set,
        condition_ok: mu_sup * delta <= COX_THRESHOLD,
        bracket_lo: delta / 2.0,
        bracket_hi: delta,
        newton_step: -&qz,
        expansion_bound: 8.0 * 0.25f64.exp() * delta * delta * mu_sup,
    })
}

/// Damped Newton for the partial-likelihood score, halving on [`cox_objective`].
pub fn cox_fit(data: &SurvivalDataset, init: &Vector, opts: FitOptions) -> Result<Vector> {
    check_dim(data.p(), init.len())?;
    let mut beta = init.clone();
    let mut last = f64::INFINITY;
    for it in 0..opts.max_iter {
        let (g, h) = cox_score_and_jacobian(data, &beta, true)?;
        let gnorm = g.norm2();
        last = gnorm;
        let step = match Lu::factor(&h) {
            Ok(lu) => -&lu.solve(&g)?,
            Err(Error::Singular { .. }) if it > 0 => break,
            Err(e) => return Err(e),
        };
        if gnorm <= opts.tol && step.norm2() <= opts.tol.sqrt() * (1.0 + beta.norm2()) {
            return Ok(beta);
        }
        let obj0 = cox_objective(data, &beta)?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=50 {
            let mut cand = beta.clone();
            cand.axpy(t, &step);
            if cand.is_finite() {
                let obj = cox_objective(data, &cand)?;
                if obj.is_finite() && (obj <= obj0 || cox_score(data, &cand)?.norm2() < gnorm) {
                    accepted = Some(cand);
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some(c) => beta = c,
            None => break,
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, residual: last })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SoftmaxCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// Curvature-ratio check for `K(t) = log Σ wᵢ e^{aᵢ t}`:
/// `max(|K″(s)/K″(0) − 1|, |K″(0)/K″(s) − 1|) ≤ 4μ|t| e^{4μ|t|}` for `|s| ≤ |t|`.
pub fn softmax_ratio_check(w: &[f64], a: &[f64], s: f64, t: f64) -> Result<SoftmaxCheck> {
    check_dim(w.len(), a.len())?;
    if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("weights must be finite and nonnegative, scores finite".into()));
    }
    if !w.iter().any(|v| *v > 0.0) {
        return Err(Error::InvalidInput("all weights are zero".into()));
    }
    if !(s.abs() <= t.abs()) {
        return Err(Error::InvalidInput(format!("need |s| <= |t|, got s={s}, t={t}")));
    }
    let (mean0, var0) = tilted_moments(w, a, 0.0);
    if !(var0 > 0.0) {
        return Err(Error::InvalidInput("K''(0) = 0: scores are constant on the support".into()));
    }
    let (_, var_s) = tilted_moments(w, a, s);
    let mu = a.iter().fold(0.0f64, |m, ai| m.max((ai - mean0).abs()));
    let lhs = (var_s / var0 - 1.0).abs().max((var0 / var_s - 1.0).abs());
    let u = 4.0 * mu * t.abs();
    let rhs = u * u.exp();
    Ok(SoftmaxCheck { lhs, rhs, ok: lhs <= rhs })
}

/// Mean and variance of `a` under weights `wᵢ e^{aᵢ s}` (that is, `K′(s)` and `K″(s)`).
fn tilted_moments(w: &[f64], a: &[f64], s: f64) -> (f64, f64) {
    let shift = (0..a.len()).filter(|&i| w[i] > 0.0).fold(f64::NEG_INFINITY, |m, i| m.max(a[i] * s));
    let wt: Vec<f64> = (0..a.len()).map(|i| if w[i] > 0.0 { w[i] * (a[i] * s - shift).exp() } else { 0.0 }).collect();
    let total: f64 = wt.iter().sum();
    let mean = (0..a.len()).map(|i| wt[i] * a[i]).sum::<f64>() / total;
    let var = (0..a.len()).map(|i| wt[i] * (a[i] - mean).powi(2)).sum::<f64>() / total;
    (mean, var)
}

/// Constant weight function, handy for `with_h1` / `with_h2`.
pub fn constant_weight(c: f64) -> WeightFn {
    Arc::new(move |_| c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two(x1: f64, x2: f64) -> SurvivalDataset {
        SurvivalDataset::new(
            DenseMatrix::from_rows(&[vec![x1], vec![x2]]).unwrap(),
            Vector::from(vec![1.0, 2.0]),
            vec![true, false],
        )
        .unwrap()
    }

    #[test]
    fn score_examples() {
        let same = two(0.7, 0.7);
        assert_eq!(cox_score(&same, &Vector::from(vec![2.0])).unwrap().as_slice(), &[0.0]);
        assert_eq!(cox_jacobian(&same, &Vector::from(vec![2.0])).unwrap().as_slice(), &[0.0]);
        let d = two(1.0, 3.0);
        assert_eq!(cox_score(&d, &Vector::zeros(1)).unwrap().as_slice(), &[(1.0 + 3.0) / 2.0 - 1.0]);
        // Bernoulli variance 1/4 times (x1 − x2)².
        assert_eq!(cox_jacobian(&d, &Vector::zeros(1)).unwrap().as_slice(), &[0.25 * 4.0]);
        let none = SurvivalDataset::new(DenseMatrix::identity(2), Vector::from(vec![1.0, 2.0]), vec![false, false]);
        assert!(none.is_err());
    }

    #[test]
    fn sweep_matches_direct() {
        let rows: Vec<Vec<f64>> = (0..12).map(|k| vec![(k as f64 * 0.7).sin() * 3.0, 10.0 + (k % 4) as f64]).collect();
        let time: Vec<f64> = (0..12).map(|k| ((k * 5) % 7) as f64).collect();
        let status: Vec<bool> = (0..12).map(|k| k % 3 != 1).collect();
        let d = SurvivalDataset::new(DenseMatrix::from_rows(&rows).unwrap(), Vector::from(time), status)
            .unwrap()
            .with_h2(Arc::new(|x: &[f64]| 1.0 + x[0].abs()));
        let beta = [0.8, -0.3];
        let (times, sets) = risk_sets(&d, &beta, true).unwrap();
        for (t, rs) in times.iter().zip(&sets) {
            let direct = risk_set(&d, &beta, *t, true).unwrap();
            assert!((rs.log_total - direct.log_total).abs() < 1e-12);
            for (a, b) in rs.mean.iter().zip(&direct.mean) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in rs.cov.as_slice().iter().zip(direct.cov.as_slice()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn degenerate_risk_set() {
        let d = two(1.0, 3.0).with_h2(constant_weight(0.0));
        assert!(matches!(cox_score(&d, &Vector::zeros(1)), Err(Error::DegenerateRiskSet { .. })));
    }

    #[test]
    fn mu_examples() {
        let m = mu_profile(&two(0.0, 1.0), &Vector::zeros(1)).unwrap();
        assert_eq!(m.risk_set, vec![0.5]);
        let same = mu_profile(&two(0.4, 0.4), &Vector::zeros(1)).unwrap();
        assert_eq!(same.sup_all_rows, 0.0);
        // Only the last subject is at risk at the last event time.
        let d = SurvivalDataset::new(
            DenseMatrix::from_rows(&[vec![0.0], vec![5.0]]).unwrap(),
            Vector::from(vec![1.0, 2.0]),
            vec![false, true],
        )
        .unwrap();
        let m = mu_profile(&d, &Vector::zeros(1)).unwrap();
        assert_eq!(m.risk_set, vec![0.0]);
        assert_eq!(m.all_rows, vec![5.0]);
    }

    #[test]
    fn identical_covariates_certificate() {
        let d = SurvivalDataset::new(
            DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap(),
            Vector::from(vec![1.0, 2.0, 3.0]),
            vec![true, true, false],
        )
        .unwrap();
        assert!(matches!(certify_cox(&d, &Vector::zeros(2)), Err(Error::Singular { .. })));
    }

    #[test]
    fn softmax_examples() {
        let c = softmax_ratio_check(&[1.0, 1.0], &[1.0, -1.0], 0.1, 0.1).unwrap();
        let sech2 = 1.0 / 0.1f64.cosh().powi(2);
        assert!((c.lhs - (1.0 / sech2 - 1.0).max(1.0 - sech2)).abs() < 1e-14);
        assert!((c.rhs - 0.4 * 0.4f64.exp()).abs() < 1e-14);
        assert!(c.ok);
        assert_eq!(softmax_ratio_check(&[1.0, 2.0], &[0.0, 3.0], 0.0, 0.5).unwrap().lhs, 0.0);
        assert!(softmax_ratio_check(&[1.0, 1.0], &[2.0, 2.0], 0.1, 0.2).is_err());
        assert!(softmax_ratio_check(&[1.0, 1.0], &[1.0, 2.0], 0.3, 0.2).is_err());
    }
}
