//! Certified approximate leave-k-out refits, marginal screening and
//! uniform-over-submodels certificates, all on top of [`crate::glm`].

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::glm::{self, Dataset, FitOptions, GlmCertificate, C_THRESHOLD};
use crate::losses::LossFamily;
use crate::numkit::{op_norm, DenseMatrix, Lu, Vector};

/// Default cap on the number of submodels in a sweep.
pub const DEFAULT_MODEL_CAP: usize = 10_000;

/// Score norm above which `θ̂` is not accepted as a full-data root.
const ROOT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LooEntry {
    /// Deleted rows, zero-based and sorted.
    pub index_set: Vec<usize>,
    /// `θ̂ + n⁻¹ Q̂⁻¹ Σ_{i∈I} ∇L(θ̂, Wᵢ)`
    pub approx_estimate: Vector,
    /// `δ_I`; infinite when the denominator is not positive.
    pub delta_i: f64,
    /// `1 − n⁻¹ ‖Q̂⁻¹ Σ_{i∈I} ∇²L(θ̂, Wᵢ)‖_op`
    pub denominator: f64,
    /// `max_{i∉I} C̄(1.5 δ_I ‖xᵢ‖₂)`
    pub condition_max_c: f64,
    pub certified: bool,
    /// `1.5 δ_I (condition_max_c − 1 + n⁻¹‖Q̂⁻¹ Σ_I ∇²L‖)`, only when certified.
    pub deviation_bound: Option<f64>,
    pub exact_estimate: Option<Vector>,
    /// `‖exact − approx‖₂` when the exact refit was run.
    pub observed_deviation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LooReport {
    pub theta_hat: Vector,
    pub theta_hat_score_norm: f64,
    pub per_fold: Vec<LooEntry>,
}

/// What is shared by every fold: the full-data Hessian factorization and
/// per-row derivative pieces at `θ̂`.
pub struct LooContext<'a> {
    data: &'a Dataset,
    family: &'a LossFamily,
    theta_hat: Vector,
    score_norm: f64,
    lu: Lu,
    d1: Vec<f64>,
    d2: Vec<f64>,
    /// Rows sorted by descending `‖xᵢ‖₂`, ties by index.
    by_norm: Vec<(f64, usize)>,
}

impl<'a> LooContext<'a> {
    pub fn new(data: &'a Dataset, family: &'a LossFamily, theta_hat: &Vector) -> Result<Self> {
        let (z, q) = glm::score_and_hessian(data, family, theta_hat)?;
        let score_norm = z.norm2();
        if !(score_norm <= ROOT_TOL) {
            return Err(Error::InvalidInput(format!(
                "theta_hat is not a full-data root: |score| = {score_norm:e}"
            )));
        }
        let lu = Lu::factor(&q)?;
        let mut d1 = Vec::with_capacity(data.n());
        let mut d2 = Vec::with_capacity(data.n());
        for i in 0..data.n() {
            let x = data.x().row(i);
            let r = family.row(x, crate::numkit::dot(x, theta_hat.as_slice()), data.y()[i])?;
            d1.push(r.d1);
            d2.push(r.d2);
        }
        let mut by_norm: Vec<(f64, usize)> = data.row_norms().into_iter().zip(0..).collect();
        by_norm.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(LooContext { data, family, theta_hat: theta_hat.clone(), score_norm, lu, d1, d2, by_norm })
    }

    fn normalize(&self, set: &[usize]) -> Result<Vec<usize>> {
        let n = self.data.n();
        let s: BTreeSet<usize> = set.iter().copied().collect();
        if s.len() != set.len() {
            return Err(Error::InvalidInput(format!("index set {set:?} has repeated entries")));
        }
        if s.is_empty() || s.len() >= n {
            return Err(Error::InvalidInput(format!("need 1 <= |I| < n = {n}, got |I| = {}", s.len())));
        }
        if let Some(&i) = s.iter().next_back().filter(|&&i| i >= n) {
            return Err(Error::InvalidInput(format!("row index {i} out of range for n = {n}")));
        }
        Ok(s.into_iter().collect())
    }

    /// The one-step approximation and its certificate for deleting `set`.
    pub fn entry(&self, set: &[usize]) -> Result<LooEntry> {
        let idx = self.normalize(set)?;
        let p = self.data.p();
        let n = self.data.n() as f64;
        let mut g = Vector::zeros(p);
        let mut s = DenseMatrix::zeros(p, p);
        for &i in &idx {
            let x = self.data.x().row(i);
            for (gj, xj) in g.as_mut_slice().iter_mut().zip(x) {
                *gj += self.d1[i] * xj;
            }
            s.add_outer(self.d2[i], x);
        }
        let shift = self.lu.solve(&g)?.scale(1.0 / n);
        let b = op_norm(&self.lu.solve_matrix(&s)?)? / n;
        let denominator = 1.0 - b;
        let approx_estimate = &self.theta_hat + &shift;
        if !(denominator > 0.0) {
            return Ok(LooEntry {
                index_set: idx,
                approx_estimate,
                delta_i: f64::INFINITY,
                denominator,
                condition_max_c: f64::INFINITY,
                certified: false,
                deviation_bound: None,
                exact_estimate: None,
                observed_deviation: None,
            });
        }
        let delta_i = shift.norm2() / denominator;
        // C̄ is nondecreasing, so the max over i ∉ I sits at the largest remaining row norm.
        let max_norm = self.by_norm.iter().find(|(_, i)| idx.binary_search(i).is_err()).map_or(0.0, |(v, _)| *v);
        let cmax = self.family.cbound(1.5 * delta_i * max_norm).max(1.0);
        let certified = cmax <= C_THRESHOLD;
        Ok(LooEntry {
            index_set: idx,
            approx_estimate,
            delta_i,
            denominator,
            condition_max_c: cmax,
            certified,
            deviation_bound: certified.then_some(1.5 * delta_i * (cmax - 1.0 + b)),
            exact_estimate: None,
            observed_deviation: None,
        })
    }

    /// Exact refit without `set`, started from `θ̂`.
    pub fn exact(&self, set: &[usize], opts: FitOptions) -> Result<Vector> {
        let reduced = self.data.without_rows(&self.normalize(set)?)?;
        glm::fit(&reduced, self.family, &self.theta_hat, opts)
    }

    /// Every set in parallel; entries come back sorted by index set.
    ///
    /// With `exact = Some(opts)` each fold is also refitted and compared.
    pub fn sweep(&self, sets: &[Vec<usize>], exact: Option<FitOptions>) -> Result<LooReport> {
        let mut per_fold: Vec<LooEntry> = sets
            .par_iter()
            .map(|set| {
                let mut e = self.entry(set)?;
                if let Some(opts) = exact {
                    let ex = self.exact(set, opts)?;
                    e.observed_deviation = Some((&ex - &e.approx_estimate).norm2());
                    e.exact_estimate = Some(ex);
                }
                Ok(e)
            })
            .collect::<Result<_>>()?;
        per_fold.sort_by(|a, b| a.index_set.cmp(&b.index_set));
        per_fold.dedup_by(|a, b| a.index_set == b.index_set);
        Ok(LooReport { theta_hat: self.theta_hat.clone(), theta_hat_score_norm: self.score_norm, per_fold })
    }
}

/// One approximate leave-k-out entry. For many sets build a [`LooContext`] once.
pub fn loo_approx(data: &Dataset, family: &LossFamily, theta_hat: &Vector, set: &[usize]) -> Result<LooEntry> {
    LooContext::new(data, family, theta_hat)?.entry(set)
}

/// Oracle refit on the rows outside `set` (tolerance 1e-12).
pub fn loo_exact(data: &Dataset, family: &LossFamily, set: &[usize], init: &Vector) -> Result<Vector> {
    let mut drop = set.to_vec();
    drop.sort_unstable();
    drop.dedup();
    if drop.is_empty() || drop.len() >= data.n() {
        return Err(Error::InvalidInput(format!("need 1 <= |I| < n = {}", data.n())));
    }
    glm::fit(&data.without_rows(&drop)?, family, init, FitOptions { tol: 1e-12, max_iter: 200 })
}

/// All singletons `{0}, {1}, …, {n−1}`.
pub fn singletons(n: usize) -> Vec<Vec<usize>> {
    (0..n).map(|i| vec![i]).collect()
}

/// Where screening and PoSI targets come from.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// Use the fitted roots, which makes every bound a near-zero sanity check.
    PlugIn,
    /// One target per coordinate (screening) or per model (PoSI, in input order).
    Given(Vec<Vector>),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScreenEntry {
    pub coordinate: usize,
    pub target: Option<f64>,
    /// Exact one-dimensional root.
    pub estimate: Option<f64>,
    pub certified: bool,
    pub delta: Option<f64>,
    pub expansion_bound: Option<f64>,
    pub certificate: Option<GlmCertificate>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScreenReport {
    pub per_coordinate: Vec<ScreenEntry>,
    /// `max_j (δ_j + expansion bound_j)` over certified coordinates; bounds
    /// `|max_j β̂_j − max_j β_j|` when `all_certified`.
    pub max_stat_bound: f64,
    pub all_certified: bool,
    /// `"plug-in"` when no reference curvature was supplied, else `"reference"`.
    pub hessian: String,
}

/// Per-coordinate 1-d certificates. `q_ref` optionally gives the reference
/// curvature `Q_j` for each coordinate.
pub fn screen_marginal(
    data: &Dataset,
    family: &LossFamily,
    targets: &Targets,
    q_ref: Option<&[f64]>,
    opts: FitOptions,
) -> Result<ScreenReport> {
    let p = data.p();
    if let Targets::Given(t) = targets {
        if t.len() != p || t.iter().any(|v| v.len() != 1) {
            return Err(Error::InvalidInput(format!("screening needs {p} scalar targets")));
        }
    }
    if let Some(q) = q_ref {
        crate::error::check_dim(p, q.len())?;
    }
    let per_coordinate: Vec<ScreenEntry> = (0..p)
        .into_par_iter()
        .map(|j| -> Result<ScreenEntry> {
            let d = data.select_cols(&[j])?;
            let estimate = glm::fit(&d, family, &Vector::zeros(1), opts).ok().map(|v| v[0]);
            let target = match targets {
                Targets::PlugIn => estimate,
                Targets::Given(t) => Some(t[j][0]),
            };
            let mut entry = ScreenEntry {
                coordinate: j,
                target,
                estimate,
                certified: false,
                delta: None,
                expansion_bound: None,
                certificate: None,
                error: None,
            };
            let Some(t0) = target else {
                entry.error = Some("plug-in fit did not converge".into());
                return Ok(entry);
            };
            let qr = q_ref.map(|q| DenseMatrix::from_diag(&[q[j]]));
            match glm::certify(&d, family, &Vector::from(vec![t0]), qr.as_ref()) {
                Ok(c) => {
                    let bound = c.expansion_bound_reference.unwrap_or(c.expansion_bound_empirical);
                    entry.certified = c.condition_ok;
                    entry.delta = Some(c.delta);
                    entry.expansion_bound = Some(bound);
                    entry.certificate = Some(c);
                }
                Err(e) => entry.error = Some(e.to_string()),
            }
            Ok(entry)
        })
        .collect::<Result<_>>()?;
    let all_certified = per_coordinate.iter().all(|e| e.certified);
    let max_stat_bound = per_coordinate
        .iter()
        .filter(|e| e.certified)
        .fold(0.0f64, |m, e| m.max(e.delta.unwrap_or(0.0) + e.expansion_bound.unwrap_or(0.0)));
    Ok(ScreenReport {
        per_coordinate,
        max_stat_bound,
        all_certified,
        hessian: if q_ref.is_some() { "reference" } else { "plug-in" }.into(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PosiEntry {
    /// Zero-based column indices, sorted.
    pub model: Vec<usize>,
    pub target: Option<Vector>,
    pub certificate: Option<GlmCertificate>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PosiReport {
    pub per_model: Vec<PosiEntry>,
    /// Every model produced a certificate with its condition satisfied.
    pub uniform_condition_ok: bool,
}

/// Column-restricted certificates for every model. Models are sets: indices are
/// sorted, duplicates removed, and repeated models dropped (first target wins).
pub fn posi_sweep(
    data: &Dataset,
    family: &LossFamily,
    models: &[Vec<usize>],
    targets: &Targets,
    cap: usize,
    opts: FitOptions,
) -> Result<PosiReport> {
    if let Targets::Given(t) = targets {
        crate::error::check_dim(models.len(), t.len())?;
    }
    let mut seen = BTreeSet::new();
    let mut work: Vec<(Vec<usize>, Option<Vector>)> = Vec::new();
    for (k, m) in models.iter().enumerate() {
        let set: BTreeSet<usize> = m.iter().copied().collect();
        if set.is_empty() {
            return Err(Error::InvalidInput(format!("model {k} is empty")));
        }
        if let Some(&j) = set.iter().next_back().filter(|&&j| j >= data.p()) {
            return Err(Error::InvalidInput(format!("model {k} uses column {j}, but p = {}", data.p())));
        }
        let key: Vec<usize> = set.into_iter().collect();
        if !seen.insert(key.clone()) {
            continue;
        }
        let target = match targets {
            Targets::PlugIn => None,
            Targets::Given(t) => {
                if t[k].len() != key.len() {
                    return Err(Error::InvalidInput(format!(
                        "target for model {k} has length {}, expected {}",
                        t[k].len(),
                        key.len()
                    )));
                }
                // Targets are given in the order the model listed its columns.
                let order: Vec<usize> = key.iter().map(|c| m.iter().position(|x| x == c).unwrap()).collect();
                Some(t[k].select(&order))
            }
        };
        work.push((key, target));
    }
    if work.len() > cap {
        return Err(Error::InvalidInput(format!("{} models exceed the cap of {cap}", work.len())));
    }
    work.sort_by(|a, b| a.0.cmp(&b.0));
    let per_model: Vec<PosiEntry> = work
        .into_par_iter()
        .map(|(model, target)| -> Result<PosiEntry> {
            let d = data.select_cols(&model)?;
            let target = match target {
                Some(t) => Ok(t),
                None => glm::fit(&d, family, &Vector::zeros(model.len()), opts),
            };
            Ok(match target {
                Err(e) => PosiEntry { model, target: None, certificate: None, error: Some(e.to_string()) },
                Ok(t) => match glm::certify(&d, family, &t, None) {
                    Ok(c) => PosiEntry { model, target: Some(t), certificate: Some(c), error: None },
                    Err(e) => PosiEntry { model, target: Some(t), certificate: None, error: Some(e.to_string()) },
                },
            })
        })
        .collect::<Result<_>>()?;
    let uniform_condition_ok = per_model.iter().all(|e| e.certificate.as_ref().is_some_and(|c| c.condition_ok));
    Ok(PosiReport { per_model, uniform_condition_ok })
}
