//! Nonnegative combinations of losses keep a valid C-bound, so the GLM
//! certificate applies to them unchanged.

use mestcert::glm::{certify, fit, Dataset, FitOptions};
use mestcert::losses::{combine_families, make_family, FamilySpec};
use mestcert::{DenseMatrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mestcert::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 20_000;
    let mut xs = Vec::with_capacity(2 * n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(-1.0..1.0);
        ys.push(if rng.random::<f64>() < 0.5 + 0.2 * x { 1.0 } else { 0.0 });
        xs.extend([1.0, x]);
    }
    let data = Dataset::new(DenseMatrix::new(n, 2, xs)?, Vector::from(ys))?;
    let logistic = make_family(FamilySpec::Logistic)?;
    let poisson = make_family(FamilySpec::Poisson)?;
    let mix = combine_families(2.0, &logistic, 1.0, &poisson)?;
    println!("{}: C(0.1) = {:.5} = max(e^0.3, e^0.1)", mix.name(), mix.cbound(0.1));

    // Certify a guess a little off the mixture's root.
    let hat = fit(&data, &mix, &Vector::zeros(2), FitOptions::default())?;
    let theta0 = &hat + &Vector::from(vec![0.01, -0.01]);
    let c = certify(&data, &mix, &theta0, None)?;
    println!(
        "delta = {:.4}, ok = {}, |hat - theta0| = {:.4} in [{:.4}, {:.4}]",
        c.delta,
        c.condition_ok,
        (&hat - &theta0).norm2(),
        c.bracket_lo,
        c.bracket_hi
    );
    Ok(())
}
