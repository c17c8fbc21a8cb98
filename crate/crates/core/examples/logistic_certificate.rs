//! Certify a logistic regression at the data-generating coefficients, then
//! compare the bracket and expansion bound with the exact fit. With C̄(u) = e^{3u}
//! the condition asks for `δ max‖xᵢ‖` below about 0.064, hence bounded covariates
//! and a large sample.

use mestcert::glm::{certify, fit, Dataset, FitOptions};
use mestcert::losses::{make_family, sigmoid_and_var, FamilySpec};
use mestcert::{DenseMatrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mestcert::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, p) = (50_000, 2);
    let beta = Vector::from(vec![0.5, -1.0]);
    let mut xs = Vec::with_capacity(n * p);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let row = vec![1.0, rng.random_range(-1.0..1.0)];
        let prob = sigmoid_and_var(Vector::from(row.clone()).dot(&beta)).0;
        ys.push(if rng.random::<f64>() < prob { 1.0 } else { 0.0 });
        xs.extend(row);
    }
    let data = Dataset::new(DenseMatrix::new(n, p, xs)?, Vector::from(ys))?;
    let fam = make_family(FamilySpec::Logistic)?;

    let c = certify(&data, &fam, &beta, None)?;
    let hat = fit(&data, &fam, &beta, FitOptions::default())?;
    let err = (&hat - &beta).norm2();
    let rem = (&(&hat - &beta) - &c.newton_step).norm2();
    println!("delta = {:.5}, max C = {:.5}, condition ok = {}", c.delta, c.condition_max_c, c.condition_ok);
    println!("|hat - beta| = {err:.5} in [{:.5}, {:.5}]", c.bracket_lo, c.bracket_hi);
    println!("|hat - beta - newton step| = {rem:.3e} <= {:.3e}", c.expansion_bound_empirical);
    println!(
        "energy-norm check: ok = {}, bracket [{:.5}, {:.5}], bound {:.3e}",
        c.metric.condition_ok, c.metric.bracket_lo, c.metric.bracket_hi, c.metric.expansion_bound
    );
    Ok(())
}
