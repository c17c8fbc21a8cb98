//! Cox partial likelihood: certify at the true coefficient and compare with
//! the maximum partial likelihood estimate.

use mestcert::cox::{certify_cox, cox_fit, SurvivalDataset};
use mestcert::glm::FitOptions;
use mestcert::{DenseMatrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

fn main() -> mestcert::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 8000;
    let beta = Vector::from(vec![0.7]);
    let mut xs = Vec::with_capacity(n);
    let mut time = Vec::with_capacity(n);
    let mut status = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(-0.5..0.5);
        let event = Exp::new((beta[0] * x).exp()).unwrap().sample(&mut rng);
        let censor = Exp::new(0.3).unwrap().sample(&mut rng);
        xs.push(x);
        time.push(event.min(censor));
        status.push(event <= censor);
    }
    let data = SurvivalDataset::new(DenseMatrix::new(n, 1, xs)?, Vector::from(time), status)?;

    let c = certify_cox(&data, &beta)?;
    let hat = cox_fit(&data, &beta, FitOptions::default())?;
    let err = (&hat - &beta).norm2();
    let rem = (&(&hat - &beta) - &c.newton_step).norm2();
    println!(
        "delta = {:.5}, sup mu = {:.4} (risk sets {:.4}), mu delta = {:.4}, ok = {}",
        c.delta,
        c.mu_sup,
        c.mu_sup_risk_set,
        c.mu_sup * c.delta,
        c.condition_ok
    );
    println!("|hat - beta| = {err:.5} in [{:.5}, {:.5}]", c.bracket_lo, c.bracket_hi);
    println!("|hat - beta - newton step| = {rem:.3e} <= {:.3e}", c.expansion_bound);
    Ok(())
}
