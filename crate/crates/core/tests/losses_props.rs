use mestcert::losses::{combine_families, loss_derivative_check, make_family, FamilySpec, LossFamily};
use proptest::prelude::*;

fn grid() -> Vec<f64> {
    (0..=24).map(|k| -3.0 + 0.25 * k as f64).collect()
}

fn builtins() -> Vec<(FamilySpec, LossFamily)> {
    [FamilySpec::Squared, FamilySpec::Logistic, FamilySpec::Poisson, FamilySpec::NegBinomial { alpha: 0.5 }]
        .into_iter()
        .map(|s| (s, make_family(s).unwrap()))
        .collect()
}

/// A response in the family's support from a uniform draw.
fn response(spec: FamilySpec, r: f64) -> f64 {
    match spec {
        FamilySpec::Squared => 10.0 * r - 5.0,
        FamilySpec::Logistic => r,
        FamilySpec::Poisson | FamilySpec::NegBinomial { .. } => (20.0 * r).floor(),
    }
}

fn ratio_holds(f: &LossFamily, y: f64) -> Result<(), String> {
    let g = grid();
    for &s in &g {
        for &t in &g {
            let w = (s - t).abs();
            let ratio = f.eval2(s, y) / f.eval2(t, y);
            if ratio > f.cbound(w) * (1.0 + 1e-9) {
                return Err(format!("{}: l2({s})/l2({t}) = {ratio} > C({w}) = {}", f.name(), f.cbound(w)));
            }
        }
    }
    Ok(())
}

fn monotone_from_one(f: &LossFamily) -> bool {
    let ws: Vec<f64> = (0..=24).map(|k| 0.25 * k as f64).collect();
    f.cbound(0.0) == 1.0 && ws.windows(2).all(|w| f.cbound(w[0]) <= f.cbound(w[1]))
}

proptest! {
    #[test]
    fn builtin_ratio_bound(r in 0.0..1.0f64) {
        for (spec, f) in builtins() {
            prop_assert!(ratio_holds(&f, response(spec, r)).is_ok(), "{:?}", ratio_holds(&f, response(spec, r)));
        }
    }

    #[test]
    fn combined_ratio_bound(a in 0.1..5.0f64, b in 0.1..5.0f64, i in 0usize..4, j in 0usize..4, r in 0.0..1.0f64) {
        let fams = builtins();
        let c = combine_families(a, &fams[i].1, b, &fams[j].1).unwrap();
        prop_assert!(monotone_from_one(&c));
        // A response valid for both parts: counts in {0, 1} are valid everywhere.
        let y = if r < 0.5 { 0.0 } else { 1.0 };
        prop_assert!(ratio_holds(&c, y).is_ok(), "{:?}", ratio_holds(&c, y));
    }

    #[test]
    fn combine_is_order_independent(a in 0.1..5.0f64, b in 0.1..5.0f64, i in 0usize..4, j in 0usize..4) {
        let fams = builtins();
        let ab = combine_families(a, &fams[i].1, b, &fams[j].1).unwrap();
        let ba = combine_families(b, &fams[j].1, a, &fams[i].1).unwrap();
        for &u in &grid() {
            for y in [0.0, 1.0] {
                prop_assert!((ab.eval0(u, y) - ba.eval0(u, y)).abs() <= 1e-12 * (1.0 + ab.eval0(u, y).abs()));
                prop_assert!((ab.eval2(u, y) - ba.eval2(u, y)).abs() <= 1e-12 * (1.0 + ab.eval2(u, y).abs()));
            }
            let w = u.abs();
            prop_assert_eq!(ab.cbound(w), ba.cbound(w));
        }
    }

    #[test]
    fn derivatives_match_finite_differences(u in -3.0..3.0f64, r in 0.0..1.0f64) {
        for (spec, f) in builtins() {
            let y = response(spec, r);
            let e = loss_derivative_check(&f, u, y, 1e-5);
            let scale = 1.0 + f.eval1(u, y).abs() + f.eval2(u, y).abs();
            prop_assert!(e <= 1e-6 * scale, "{}: {e}", f.name());
        }
    }
}

#[test]
fn builtins_start_at_one_and_increase() {
    for (_, f) in builtins() {
        assert!(monotone_from_one(&f), "{}", f.name());
    }
}
