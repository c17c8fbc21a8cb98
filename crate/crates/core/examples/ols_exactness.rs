//! For squared loss the certificate is exact: `‖β̂ − β₀‖₂ = 2δ/3` for any target.

use mestcert::glm::{certify, fit, Dataset, FitOptions};
use mestcert::losses::{make_family, FamilySpec};
use mestcert::{DenseMatrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> mestcert::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (n, p) = (100, 3);
    let x = DenseMatrix::new(n, p, (0..n * p).map(|_| rng.sample(StandardNormal)).collect())?;
    let beta = Vector::from(vec![1.0, -0.5, 0.25]);
    let noise: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let y = &x.matvec(&beta)? + &Vector::from(noise);
    let data = Dataset::new(x, y)?;
    let ols = make_family(FamilySpec::Squared)?;
    let hat = fit(&data, &ols, &Vector::zeros(p), FitOptions::default())?;

    for target in [beta.clone(), Vector::zeros(p), Vector::from(vec![3.0, 3.0, -3.0])] {
        let c = certify(&data, &ols, &target, None)?;
        println!(
            "target {:?}: |hat - target| = {:.12}, 2 delta / 3 = {:.12}, C = {}, bound = {}",
            target.as_slice(),
            (&hat - &target).norm2(),
            2.0 * c.delta / 3.0,
            c.condition_max_c,
            c.expansion_bound_empirical
        );
    }
    Ok(())
}
