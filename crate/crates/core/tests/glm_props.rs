mod common;

use common::*;
use mestcert::glm::{self, certify, fit, hessian, objective, score, Dataset};
use mestcert::losses::{make_family, FamilySpec};
use mestcert::numkit::{fd_gradient, fd_jacobian, Lu};
use mestcert::{DenseMatrix, Vector};
use proptest::prelude::*;

const FAMILIES: [FamilySpec; 4] =
    [FamilySpec::Squared, FamilySpec::Logistic, FamilySpec::Poisson, FamilySpec::NegBinomial { alpha: 0.5 }];

#[test]
fn brackets_and_expansions_hold_on_the_seeded_suite() {
    let mut checked = 0;
    let mut certified = 0;
    for (fi, &spec) in FAMILIES.iter().enumerate() {
        let fam = make_family(spec).unwrap();
        for &n in &[50usize, 200] {
            for &p in &[1usize, 2, 5] {
                for seed in 0..15u64 {
                    let mut r = rng(1000 * fi as u64 + 100 * p as u64 + n as u64 + seed);
                    let beta = gaussian_vector(&mut r, p, 0.3);
                    let data = simulate_glm(&mut r, spec, n, &beta);
                    let big = simulate_glm(&mut r, spec, 4 * n, &beta);
                    let q_ref = hessian(&big, &fam, &beta).unwrap();
                    let Ok(c) = certify(&data, &fam, &beta, Some(&q_ref)) else { continue };
                    let Ok(hat) = fit(&data, &fam, &beta, TIGHT) else { continue };
                    checked += 1;
                    let diff = &hat - &beta;
                    let err = diff.norm2();
                    let rem = (&diff - &c.newton_step).norm2();
                    let rem_ref = (&diff - c.reference_step.as_ref().unwrap()).norm2();
                    if c.condition_ok {
                        certified += 1;
                        let tag = format!("{spec:?} n={n} p={p} seed={seed}");
                        assert!(err >= c.bracket_lo * (1.0 - 1e-8), "{tag}: {err} < {}", c.bracket_lo);
                        assert!(err <= c.bracket_hi * (1.0 + 1e-8), "{tag}: {err} > {}", c.bracket_hi);
                        assert!(rem <= c.expansion_bound_empirical * (1.0 + 1e-8) + 1e-12, "{tag}");
                        assert!(rem_ref <= c.expansion_bound_reference.unwrap() * (1.0 + 1e-8) + 1e-12, "{tag}");
                    }
                    if c.metric.condition_ok {
                        assert!(err <= c.metric.bracket_hi * (1.0 + 1e-8) && err >= c.metric.bracket_lo * (1.0 - 1e-8));
                        assert!(rem <= c.metric.expansion_bound * (1.0 + 1e-8) + 1e-12);
                    }
                }
            }
        }
    }
    assert!(checked >= 300, "only {checked} instances fitted");
    assert!(certified >= 100, "only {certified} instances certified");
}

#[test]
fn metric_check_is_sound_on_ill_conditioned_designs() {
    // Tiny Poisson samples with nearly collinear columns, where the Euclidean
    // form of the condition is known not to be enough.
    let fam = make_family(FamilySpec::Poisson).unwrap();
    let mut checked = 0;
    for seed in 0..8000u64 {
        let mut r = rng(seed);
        let n = 3 + (seed % 5) as usize;
        let mut xs = Vec::new();
        for _ in 0..n {
            let a = normal(&mut r);
            xs.extend([a, a + 0.05 * normal(&mut r)]);
        }
        let x = DenseMatrix::new(n, 2, xs).unwrap();
        let y: Vec<f64> = (0..n).map(|_| draw_response(&mut r, FamilySpec::Poisson, 0.0)).collect();
        let Ok(data) = Dataset::new(x, Vector::from(y)) else { continue };
        let t0 = gaussian_vector(&mut r, 2, 0.2);
        let Ok(c) = certify(&data, &fam, &t0, None) else { continue };
        if !c.metric.condition_ok {
            continue;
        }
        let Ok(hat) = fit(&data, &fam, &t0, TIGHT) else { continue };
        checked += 1;
        let diff = &hat - &t0;
        assert!(diff.norm2() <= c.metric.bracket_hi * (1.0 + 1e-8), "seed {seed}");
        assert!(diff.norm2() >= c.metric.bracket_lo * (1.0 - 1e-8), "seed {seed}");
        assert!((&diff - &c.newton_step).norm2() <= c.metric.expansion_bound * (1.0 + 1e-8) + 1e-12, "seed {seed}");
    }
    assert!(checked > 100, "{checked}");
}

fn design(n: usize, p: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-2.0..2.0f64, n * p),
        prop::collection::vec(0.0..1.0f64, n),
        prop::collection::vec(-1.0..1.0f64, p),
    )
}

fn data_for(spec: FamilySpec, n: usize, p: usize, x: Vec<f64>, u: Vec<f64>) -> Dataset {
    let y: Vec<f64> = u
        .iter()
        .map(|&v| match spec {
            FamilySpec::Squared => 4.0 * v - 2.0,
            FamilySpec::Logistic => (v > 0.5) as u8 as f64,
            _ => (5.0 * v).floor(),
        })
        .collect();
    Dataset::new(DenseMatrix::new(n, p, x).unwrap(), Vector::from(y)).unwrap()
}

proptest! {
    #[test]
    fn ols_error_is_two_thirds_delta((x, u, t) in design(30, 3)) {
        let data = data_for(FamilySpec::Squared, 30, 3, x, u);
        let sq = make_family(FamilySpec::Squared).unwrap();
        let t0 = Vector::from(t).scale(5.0);
        let Ok(c) = certify(&data, &sq, &t0, None) else { return Ok(()) };
        let hat = fit(&data, &sq, &t0, TIGHT).unwrap();
        prop_assert!(c.condition_ok);
        prop_assert_eq!(c.condition_max_c, 1.0);
        prop_assert_eq!(c.expansion_bound_empirical, 0.0);
        prop_assert!(((&hat - &t0).norm2() - 2.0 * c.delta / 3.0).abs() <= 1e-10 * (1.0 + c.delta));
    }

    #[test]
    fn score_and_hessian_match_finite_differences((x, u, t) in design(20, 3), fi in 0usize..4) {
        let spec = FAMILIES[fi];
        let data = data_for(spec, 20, 3, x, u);
        let fam = make_family(spec).unwrap();
        let t0 = Vector::from(t);
        let g = score(&data, &fam, &t0).unwrap();
        let g_fd = fd_gradient(|th: &Vector| objective(&data, &fam, th), &t0, 1e-5).unwrap();
        prop_assert!(max_rel_err(g.as_slice(), g_fd.as_slice()) <= 1e-5);
        let h = hessian(&data, &fam, &t0).unwrap();
        let h_fd = fd_jacobian(|th: &Vector| score(&data, &fam, th), &t0, 1e-5).unwrap();
        prop_assert!(max_rel_err(h.as_slice(), h_fd.as_slice()) <= 1e-5);
    }

    #[test]
    fn fit_is_equivariant_under_reparametrization((x, u, _t) in design(40, 2), g in prop::collection::vec(-1.0..1.0f64, 4), fi in 0usize..4) {
        let spec = FAMILIES[fi];
        let data = data_for(spec, 40, 2, x, u);
        let fam = make_family(spec).unwrap();
        let g = DenseMatrix::new(2, 2, g).unwrap().add(&DenseMatrix::identity(2).scale(2.0)).unwrap();
        let moved = Dataset::new(data.x().matmul(&g.transpose()).unwrap(), data.y().clone()).unwrap();
        let (Ok(a), Ok(b)) = (fit(&data, &fam, &Vector::zeros(2), TIGHT), fit(&moved, &fam, &Vector::zeros(2), TIGHT)) else {
            return Ok(());
        };
        // Xθ = (XGᵀ)(G⁻ᵀθ)
        let expected = Lu::factor(&g.transpose()).unwrap().solve(&a).unwrap();
        prop_assert!((&b - &expected).norm2() <= 1e-8 * (1.0 + expected.norm2()));
    }

    #[test]
    fn delta_vanishes_at_the_fit((x, u, _t) in design(30, 2), fi in 0usize..4) {
        let spec = FAMILIES[fi];
        let data = data_for(spec, 30, 2, x, u);
        let fam = make_family(spec).unwrap();
        let Ok(hat) = fit(&data, &fam, &Vector::zeros(2), TIGHT) else { return Ok(()) };
        let d = glm::delta(&data, &fam, &hat).unwrap();
        let h = hessian(&data, &fam, &hat).unwrap();
        let inv = mestcert::numkit::op_norm(&Lu::factor(&h).unwrap().inverse().unwrap()).unwrap();
        prop_assert!(d <= 1.5 * inv * 1e-12 * (1.0 + 1e-6));
    }

    #[test]
    fn bracket_is_ordered((x, u, t) in design(25, 2), fi in 0usize..4) {
        let spec = FAMILIES[fi];
        let data = data_for(spec, 25, 2, x, u);
        let fam = make_family(spec).unwrap();
        if let Ok(c) = certify(&data, &fam, &Vector::from(t), None) {
            prop_assert!(c.bracket_lo <= c.bracket_hi);
            prop_assert!(c.condition_max_c >= 1.0);
            prop_assert!(c.expansion_bound_empirical >= 0.0);
            prop_assert_eq!(c.condition_ok, c.condition_max_c <= glm::C_THRESHOLD);
        }
    }
}
