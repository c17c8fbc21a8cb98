//! A one-parameter logistic-link least-squares problem with two local minima.
//! Multi-start Newton finds every critical point; each gets its own certificate.

use mestcert::glm::{Dataset, FitOptions};
use mestcert::nls::{certify_nls, multistart, nls_objective, LinkSpec};
use mestcert::Vector;

fn main() -> mestcert::Result<()> {
    let data = Dataset::from_rows(&[vec![0.5], vec![0.5], vec![4.0]], vec![0.8, 0.8, 0.5])?;
    let link = LinkSpec::logistic();
    let starts: Vec<Vector> = (-8..=16).map(|k| Vector::from(vec![0.25 * k as f64])).collect();
    let mut roots: Vec<f64> = multistart(&data, &link, &starts, FitOptions { tol: 1e-13, max_iter: 200 })
        .into_iter()
        .filter_map(|r| r.ok().map(|v| v[0]))
        // Far out the objective is flat to machine precision; those are not critical points.
        .filter(|t| t.abs() < 10.0)
        .collect();
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-7);

    for r in roots {
        let near = Vector::from(vec![r + 1e-3]);
        let c = certify_nls(&data, &link, &near)?;
        println!(
            "critical point {r:+.6}  F = {:.6}  from {:+.4}: delta = {:.3e}, limit = {:.3e}, ok = {}, remainder <= {:.3e}",
            nls_objective(&data, &link, &Vector::from(vec![r]))?,
            near[0],
            c.delta,
            c.radius_limit,
            c.condition_ok,
            c.remainder_bound,
        );
    }
    Ok(())
}
