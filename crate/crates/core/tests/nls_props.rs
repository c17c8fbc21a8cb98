mod common;

use common::*;
use mestcert::glm::{self, Dataset};
use mestcert::losses::{make_family, sigmoid_and_var, FamilySpec};
use mestcert::nls::{certify_nls, multistart, nls_constants, nls_grad, nls_hess, nls_objective, nls_solve, LinkSpec};
use mestcert::numkit::{fd_gradient, fd_jacobian, op_norm, Lu};
use mestcert::{DenseMatrix, Vector};
use proptest::prelude::*;
use rand::Rng;

fn logistic_data(seed: u64, n: usize, p: usize) -> (Dataset, Vector) {
    let mut r = rng(seed);
    let beta = gaussian_vector(&mut r, p, 0.7);
    let mut xs = Vec::with_capacity(n * p);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|_| r.random_range(-1.0..1.0)).collect();
        let m = sigmoid_and_var(Vector::from(row.clone()).dot(&beta)).0;
        ys.push(m + 0.1 * normal(&mut r));
        xs.extend(row);
    }
    (Dataset::new(DenseMatrix::new(n, p, xs).unwrap(), Vector::from(ys)).unwrap(), beta)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derivatives_match_finite_differences(seed in any::<u64>(), p in 1usize..4) {
        let (d, _) = logistic_data(seed, 20, p);
        let link = LinkSpec::logistic();
        let t = gaussian_vector(&mut rng(seed ^ 1), p, 1.0);
        let g = nls_grad(&d, &link, &t).unwrap();
        let g_fd = fd_gradient(|th: &Vector| nls_objective(&d, &link, th), &t, 1e-5).unwrap();
        prop_assert!(max_rel_err(g.as_slice(), g_fd.as_slice()) <= 1e-5);
        let h = nls_hess(&d, &link, &t).unwrap();
        let h_fd = fd_jacobian(|th: &Vector| nls_grad(&d, &link, th), &t, 1e-5).unwrap();
        prop_assert!(max_rel_err(h.as_slice(), h_fd.as_slice()) <= 1e-5);
    }

    #[test]
    fn omega_is_monotone(seed in any::<u64>()) {
        let (d, beta) = logistic_data(seed, 30, 2);
        let Ok(k) = nls_constants(&d, &LinkSpec::logistic(), &beta) else { return Ok(()) };
        let rs: Vec<f64> = (0..=50).map(|i| 0.02 * i as f64).collect();
        prop_assert!(rs.windows(2).all(|w| k.omega(w[0]) <= k.omega(w[1])));
        prop_assert_eq!(k.omega(0.0), 0.0);
    }

    #[test]
    fn sampled_hessian_variation_is_below_omega(seed in any::<u64>()) {
        let (d, beta) = logistic_data(seed, 30, 2);
        let link = LinkSpec::logistic();
        let h0 = nls_hess(&d, &link, &beta).unwrap();
        let Ok(lu) = Lu::factor(&h0) else { return Ok(()) };
        let k = nls_constants(&d, &link, &beta).unwrap();
        for &r in &[0.01, 0.05, 0.2, 0.5] {
            for a in 0..16 {
                let ang = a as f64 * std::f64::consts::PI / 8.0;
                let t = &beta + &Vector::from(vec![r * ang.cos(), r * ang.sin()]);
                let diff = nls_hess(&d, &link, &t).unwrap().sub(&h0).unwrap();
                let v = op_norm(&lu.solve_matrix(&diff).unwrap()).unwrap();
                prop_assert!(v <= k.omega(r) * (1.0 + 1e-9) + 1e-14, "r={r}: {v} > {}", k.omega(r));
            }
        }
    }
}

#[test]
fn certified_local_roots() {
    let link = LinkSpec::logistic();
    let mut certified = 0;
    for seed in 0..80u64 {
        let p = 1 + (seed % 3) as usize;
        let (d, _) = logistic_data(seed, 400, p);
        let Ok(hat) = nls_solve(&d, &link, &Vector::zeros(p), TIGHT) else { continue };
        let t0 = &hat + &gaussian_vector(&mut rng(seed + 7), p, 0.002);
        let Ok(c) = certify_nls(&d, &link, &t0) else { continue };
        if !c.condition_ok {
            continue;
        }
        certified += 1;
        let root = nls_solve(&d, &link, &t0, TIGHT).unwrap();
        let diff = &root - &t0;
        assert!(diff.norm2() <= c.delta * (1.0 + 1e-8), "seed {seed}");
        assert!((&diff - &c.newton_step).norm2() <= c.remainder_bound * (1.0 + 1e-8) + 1e-13, "seed {seed}");
    }
    assert!(certified >= 30, "{certified}");
}

#[test]
fn identity_link_is_the_squared_loss_certificate() {
    let mut r = rng(3);
    let x = gaussian_matrix(&mut r, 40, 3);
    let y = gaussian_vector(&mut r, 40, 1.0);
    let d = Dataset::new(x, y).unwrap();
    let t0 = gaussian_vector(&mut r, 3, 1.0);
    let nls = certify_nls(&d, &LinkSpec::identity(), &t0).unwrap();
    let g = glm::certify(&d, &make_family(FamilySpec::Squared).unwrap(), &t0, None).unwrap();
    assert!(rel_err(nls.delta, g.delta) < 1e-12);
    assert_eq!(nls.remainder_bound, 0.0);
    assert!(nls.condition_ok);
    let stepped = &t0 + &nls.newton_step;
    assert!(nls_grad(&d, &LinkSpec::identity(), &stepped).unwrap().norm2() < 1e-12);
}

#[test]
fn two_certified_balls_around_distinct_minima() {
    let d = Dataset::from_rows(&[vec![0.5], vec![0.5], vec![4.0]], vec![0.8, 0.8, 0.5]).unwrap();
    let link = LinkSpec::logistic();
    let starts: Vec<Vector> = (-8..=16).map(|k| Vector::from(vec![0.25 * k as f64])).collect();
    let mut roots: Vec<f64> = multistart(&d, &link, &starts, TIGHT)
        .into_iter()
        .filter_map(|r| r.ok().map(|v| v[0]))
        .filter(|t| t.abs() < 10.0)
        .collect();
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-7);
    assert_eq!(roots.len(), 3, "{roots:?}");
    let minima = [roots[0], roots[2]];
    let mut balls = Vec::new();
    for &m in &minima {
        let t0 = Vector::from(vec![m + 1e-4]);
        let c = certify_nls(&d, &link, &t0).unwrap();
        assert!(c.condition_ok, "{m}: {} > {}", c.delta, c.radius_limit);
        let inside: Vec<f64> = roots.iter().copied().filter(|r| (r - t0[0]).abs() <= c.delta).collect();
        assert_eq!(inside, vec![m]);
        balls.push((t0[0], c.delta));
    }
    assert!((balls[0].0 - balls[1].0).abs() > balls[0].1 + balls[1].1);
}
