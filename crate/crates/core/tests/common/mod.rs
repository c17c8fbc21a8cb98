#![allow(dead_code)]

use mestcert::cox::SurvivalDataset;
use mestcert::glm::{Dataset, FitOptions};
use mestcert::losses::{sigmoid_and_var, FamilySpec};
use mestcert::{DenseMatrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson, StandardNormal};

pub const TIGHT: FitOptions = FitOptions { tol: 1e-12, max_iter: 200 };

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::new(rows, cols, (0..rows * cols).map(|_| normal(rng)).collect()).unwrap()
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
    Vector::from((0..n).map(|_| scale * normal(rng)).collect::<Vec<_>>())
}

/// Random SPD matrix `BBᵀ + p·I`.
pub fn spd(rng: &mut ChaCha8Rng, p: usize) -> DenseMatrix {
    let b = gaussian_matrix(rng, p, p);
    b.matmul(&b.transpose()).unwrap().add(&DenseMatrix::identity(p).scale(p as f64)).unwrap()
}

/// The response for one row at linear predictor `u`.
pub fn draw_response(rng: &mut ChaCha8Rng, family: FamilySpec, u: f64) -> f64 {
    match family {
        FamilySpec::Squared => u + normal(rng),
        FamilySpec::Logistic => {
            if rng.random::<f64>() < sigmoid_and_var(u).0 {
                1.0
            } else {
                0.0
            }
        }
        FamilySpec::Poisson => Poisson::new(u.exp().max(1e-12)).unwrap().sample(rng),
        FamilySpec::NegBinomial { alpha } => {
            let lambda = Gamma::new(1.0 / alpha, alpha * u.exp()).unwrap().sample(rng);
            if lambda <= 0.0 {
                0.0
            } else {
                Poisson::new(lambda).unwrap().sample(rng)
            }
        }
    }
}

/// GLM data with a Gaussian design scaled by `1/√p` so that `‖xᵢ‖` stays O(1).
pub fn simulate_glm(rng: &mut ChaCha8Rng, family: FamilySpec, n: usize, beta: &Vector) -> Dataset {
    let p = beta.len();
    let s = 1.0 / (p as f64).sqrt();
    let mut xs = Vec::with_capacity(n * p);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|_| s * normal(rng)).collect();
        let u = Vector::from(row.clone()).dot(beta);
        ys.push(draw_response(rng, family, u));
        xs.extend(row);
    }
    Dataset::new(DenseMatrix::new(n, p, xs).unwrap(), Vector::from(ys)).unwrap()
}

/// Proportional hazards with unit baseline and exponential censoring at `censor_rate`.
pub fn simulate_survival(rng: &mut ChaCha8Rng, n: usize, beta: &Vector, censor_rate: f64) -> SurvivalDataset {
    let p = beta.len();
    loop {
        let mut xs = Vec::with_capacity(n * p);
        let mut time = Vec::with_capacity(n);
        let mut status = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..p).map(|_| rng.random_range(-0.5..0.5)).collect();
            let rate = Vector::from(row.clone()).dot(beta).exp();
            let t = Exp::new(rate).unwrap().sample(rng);
            let c = Exp::new(censor_rate).unwrap().sample(rng);
            xs.extend(row);
            time.push(t.min(c));
            status.push(t <= c);
        }
        if let Ok(d) = SurvivalDataset::new(DenseMatrix::new(n, p, xs).unwrap(), Vector::from(time), status) {
            return d;
        }
    }
}

/// Relative error with an absolute floor of 1.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}
