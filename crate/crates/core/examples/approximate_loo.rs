//! Certified approximate leave-one-out for logistic regression: one Hessian
//! factorization, one solve per fold, and a bound checked against exact refits.

use std::time::Instant;

use mestcert::glm::{fit, Dataset, FitOptions};
use mestcert::losses::{make_family, sigmoid_and_var, FamilySpec};
use mestcert::resample::{singletons, LooContext};
use mestcert::{DenseMatrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> mestcert::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, p) = (500, 5);
    let beta = Vector::from(vec![0.3, -0.6, 0.4, 0.0, 0.2]);
    let mut xs = Vec::with_capacity(n * p);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let prob = sigmoid_and_var(Vector::from(row.clone()).dot(&beta)).0;
        ys.push(if rng.random::<f64>() < prob { 1.0 } else { 0.0 });
        xs.extend(row);
    }
    let data = Dataset::new(DenseMatrix::new(n, p, xs)?, Vector::from(ys))?;
    let fam = make_family(FamilySpec::Logistic)?;
    let hat = fit(&data, &fam, &Vector::zeros(p), FitOptions { tol: 1e-12, max_iter: 100 })?;

    let t = Instant::now();
    let ctx = LooContext::new(&data, &fam, &hat)?;
    let approx = ctx.sweep(&singletons(n), None)?;
    let approx_time = t.elapsed();
    let t = Instant::now();
    let exact = ctx.sweep(&singletons(n), Some(FitOptions { tol: 1e-12, max_iter: 100 }))?;
    let exact_time = t.elapsed();

    let certified = exact.per_fold.iter().filter(|e| e.certified).count();
    let violations = exact
        .per_fold
        .iter()
        .filter(|e| e.certified && e.observed_deviation.unwrap() > e.deviation_bound.unwrap())
        .count();
    let worst = exact
        .per_fold
        .iter()
        .filter(|e| e.certified)
        .map(|e| e.observed_deviation.unwrap() / e.deviation_bound.unwrap())
        .fold(0.0f64, f64::max);
    println!("{certified}/{n} folds certified, {violations} bound violations, worst deviation/bound = {worst:.3}");
    println!("approximate sweep {approx_time:?}, with exact refits {exact_time:?}");
    let e = &approx.per_fold[0];
    println!(
        "fold {:?}: delta_I = {:.3e}, denominator = {:.4}, C = {:.4}, bound = {:.3e}",
        e.index_set,
        e.delta_i,
        e.denominator,
        e.condition_max_c,
        e.deviation_bound.unwrap_or(f64::NAN)
    );

    // Leave-2-out and leave-5-out on a few blocks.
    let blocks: Vec<Vec<usize>> = (0..3).map(|b| vec![2 * b, 2 * b + 1]).chain((1..4).map(|b| (5 * b..5 * b + 5).collect())).collect();
    for e in ctx.sweep(&blocks, Some(FitOptions { tol: 1e-12, max_iter: 100 }))?.per_fold {
        let bound = match e.deviation_bound {
            Some(b) => format!("bound {b:.3e}"),
            None => format!("not certified (C = {:.3})", e.condition_max_c),
        };
        println!("drop {:?}: observed {:.3e}, {bound}", e.index_set, e.observed_deviation.unwrap());
    }
    Ok(())
}
