//! Certificates for every submodel of size one or two, each at its own plug-in root
//! and at a fixed reference target.

use mestcert::glm::{Dataset, FitOptions};
use mestcert::losses::{make_family, FamilySpec};
use mestcert::resample::{posi_sweep, Targets, DEFAULT_MODEL_CAP};
use mestcert::{DenseMatrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> mestcert::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (n, p) = (400, 4);
    let x = DenseMatrix::new(n, p, (0..n * p).map(|_| rng.sample(StandardNormal)).collect())?;
    let noise: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let y = &x.matvec(&Vector::from(vec![1.0, 0.5, 0.0, -0.5]))? + &Vector::from(noise);
    let data = Dataset::new(x, y)?;
    let fam = make_family(FamilySpec::Squared)?;

    let mut models: Vec<Vec<usize>> = (0..p).map(|j| vec![j]).collect();
    for a in 0..p {
        for b in a + 1..p {
            models.push(vec![a, b]);
        }
    }
    let targets = Targets::Given(models.iter().map(|m| Vector::zeros(m.len())).collect());
    let r = posi_sweep(&data, &fam, &models, &targets, DEFAULT_MODEL_CAP, FitOptions::default())?;
    for e in &r.per_model {
        let c = e.certificate.as_ref().unwrap();
        println!("model {:?}: delta {:.4}, bound {}", e.model, c.delta, c.expansion_bound_empirical);
    }
    println!("uniform condition over {} models: {}", r.per_model.len(), r.uniform_condition_ok);
    Ok(())
}
