//! The two generic certificates on `f(θ) = θ² − 1` from `θ₀ = 1.2`, and a
//! contraction certificate on a small polynomial system.

use mestcert::certify::{contraction_certificate, newton_step_certificate};
use mestcert::numkit::{op_norm, Lu};
use mestcert::{DenseMatrix, Vector};

fn main() -> mestcert::Result<()> {
    let f = |t: &Vector| Ok(Vector::from(vec![t[0] * t[0] - 1.0]));
    let jac = |t: &Vector| DenseMatrix::new(1, 1, vec![2.0 * t[0]]);
    let theta0 = Vector::from(vec![1.2]);

    // ‖f′(θ₀)⁻¹(f′(θ) − f′(θ₀))‖ = |θ − θ₀| / 1.2, so L = 1/1.2 with α = 1.
    let c = newton_step_certificate(f, jac, &theta0, 1.0 / 1.2, 1.0)?;
    println!("newton step  : step {:.6}, threshold {:.6}, ball {:.6}", c.step_norm, c.step_threshold, c.ball_radius);
    println!("               remainder <= {:.6} (actual {:.6})", c.remainder_bound, (1.0 - 1.2 - c.newton_step[0]).abs());

    // sup over B(1.2, r) of |1 − θ/1.2| is r/1.2.
    let a = DenseMatrix::new(1, 1, vec![2.4])?;
    let r = contraction_certificate(f, jac, &a, &theta0, 0.3, |r| r / 1.2)?;
    println!("contraction  : valid {}, root distance in [{:.6}, {:.6}]", r.valid, r.bracket_lo, r.bracket_hi);

    // f(u, v) = (u² + v − 2, u + v³ − 2) near the root (1, 1).
    let g = |t: &Vector| Ok(Vector::from(vec![t[0] * t[0] + t[1] - 2.0, t[0] + t[1].powi(3) - 2.0]));
    let gj = |t: &Vector| DenseMatrix::new(2, 2, vec![2.0 * t[0], 1.0, 1.0, 3.0 * t[1] * t[1]]);
    let t0 = Vector::from(vec![1.03, 0.98]);
    let a = gj(&t0)?;
    // A − ∇f(θ) = diag(2(u₀ − u), 3(v₀² − v²)), so its norm is at most
    // max(2r, 3r(2|v₀| + r)), and ‖A⁻¹(A − ∇f)‖ ≤ ‖A⁻¹‖ times that.
    let a_inv = op_norm(&Lu::factor(&a)?.inverse()?)?;
    let bound = |r: f64| a_inv * (2.0 * r).max(3.0 * r * (2.0 * t0[1].abs() + r));
    let r = contraction_certificate(g, gj, &a, &t0, 0.08, bound)?;
    println!(
        "2-d system   : valid {}, eps {:.4}, |theta0 - root| = {:.6} in [{:.6}, {:.6}]",
        r.valid,
        r.epsilon,
        (&t0 - &Vector::from(vec![1.0, 1.0])).norm2(),
        r.bracket_lo,
        r.bracket_hi
    );
    Ok(())
}
