//! Equality-constrained certificates: an exact quadratic case and a Poisson
//! regression with a sum-to-zero constraint checked against the KKT oracle.

use mestcert::constrained::{
    certify_constrained, default_multiplier, glm_hessian_lipschitz, kkt_solve, projector_norms, GlmObjective,
    KktPoint, Quadratic, SmoothObjective,
};
use mestcert::glm::Dataset;
use mestcert::losses::{make_family, FamilySpec};
use mestcert::{DenseMatrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

fn main() -> mestcert::Result<()> {
    // Quadratic: one Newton step lands on the constrained minimizer.
    let h = DenseMatrix::from_rows(&[vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 0.5], vec![0.0, 0.5, 2.0]])?;
    let q = Quadratic { h: h.clone(), c: Vector::from(vec![1.0, -2.0, 0.5]) };
    let a = DenseMatrix::from_rows(&[vec![1.0, 1.0, 1.0]])?;
    let b = Vector::from(vec![1.0]);
    let beta0 = Vector::from(vec![0.2, 0.3, 0.5]);
    let nu0 = default_multiplier(&q, &a, &beta0)?;
    let c = certify_constrained(&q, &a, &b, &beta0, &nu0, 0.0, 1.0)?;
    let stepped = &beta0 + &c.step;
    let nu1 = &nu0 + &c.nu_step;
    let kkt = KktPoint::evaluate(&q, &a, &b, stepped, nu1)?;
    println!(
        "quadratic: remainder bound {}, KKT residuals after one step {:.1e} / {:.1e}",
        c.remainder_bound, kkt.primal_residual, kkt.dual_residual
    );
    let (euclid, energy) = projector_norms(&h, &a)?;
    println!("projector norms: Euclidean {euclid:.6}, H-energy {energy:.6}");

    // Poisson with coefficients summing to zero.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (n, p) = (20_000, 3);
    let truth = Vector::from(vec![0.3, -0.1, -0.2]);
    let mut xs = Vec::with_capacity(n * p);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        ys.push(Poisson::new(Vector::from(row.clone()).dot(&truth).exp()).unwrap().sample(&mut rng));
        xs.extend(row);
    }
    let data = Dataset::new(DenseMatrix::new(n, p, xs)?, Vector::from(ys))?;
    let fam = make_family(FamilySpec::Poisson)?;
    let obj = GlmObjective { data: &data, family: &fam };
    let a = DenseMatrix::from_rows(&[vec![1.0, 1.0, 1.0]])?;
    let b = Vector::zeros(1);
    let nu0 = default_multiplier(&obj, &a, &truth)?;
    let (l, alpha) = glm_hessian_lipschitz(&data, &fam, &truth)?;
    let c = certify_constrained(&obj, &a, &b, &truth, &nu0, l, alpha)?;
    let start = KktPoint::evaluate(&obj, &a, &b, truth.clone(), nu0.clone())?;
    let sol = kkt_solve(&obj, &a, &b, &start, 1e-12, 100)?;
    let rem = (&(&sol.beta - &truth) - &c.step).norm2();
    println!("poisson: L = {l:.4}, delta = {:.4e}, condition ok = {}", c.delta, c.condition_ok);
    println!("  |beta_hat - beta0 - step| = {rem:.3e} <= {:.3e}", c.remainder_bound);
    println!(
        "  stacked check: P = {:.4}, ok = {}, bound {:.3e}",
        c.projector_norm, c.corrected_condition_ok, c.corrected_remainder_bound
    );
    println!("  gradient norm at the solution: {:.2e}", obj.grad(&sol.beta)?.norm2());
    Ok(())
}
