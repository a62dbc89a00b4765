//! Height zeta functions of x² + y² − z² = 1 near τ = 1: Z has a simple pole
//! and Z_log a double pole. Also prints the T_g^{−δ} tail-integral exponent.

use quadric_lab::quadric_counting::{NormChoice, TernaryQuadricProblem};
use quadric_lab::volume_zeta::{
    ball_measure, height_zeta, log_weighted_ball, pole_diagnostics, tail_exponent, zeta_closed_form,
};

fn main() -> quadric_lab::Result<()> {
    let problem = TernaryQuadricProblem::hyperboloid(1, NormChoice::Euclidean)?;
    for t in [1e3, 1e4, 1e5, 1e6] {
        let b = ball_measure(&problem, t)?;
        let w = log_weighted_ball(&problem, t)?;
        println!("T = {t:>8}: m(B_T)/T = {:.6}, ∫log T_g/(T log T) = {:.6}", b / t, w / (t * t.ln()));
    }
    let s = height_zeta(&problem, 3.0, 1e4, false)?;
    println!("Z(3) = {:.10} (closed form {:.10}), tail {:.3e}", s.value, zeta_closed_form(1.0, 3.0), s.tail);

    let taus = [1.01, 1.02, 1.04, 1.06, 1.08, 1.1];
    let d = pole_diagnostics(&problem, &taus, 1e6)?;
    for (i, tau) in taus.iter().enumerate() {
        let e = tau - 1.0;
        println!(
            "τ = {tau:.2}: (τ−1)Z = {:.6}, (τ−1)Z_log = {:.4}, (τ−1)²Z_log = {:.6}",
            e * d.z[i],
            e * d.z_log[i],
            e * e * d.z_log[i]
        );
    }
    println!(
        "pole orders: Z {:.3}, Z_log {:.3}; spread of (τ−1)Z {:.2}%, of (τ−1)²Z_log {:.2}%",
        d.z_order,
        d.z_log_order,
        100.0 * d.z_residue_variation,
        100.0 * d.z_log_residue_variation
    );
    let fit = tail_exponent(&problem, 0.2, &[1e2, 1e3, 1e4])?;
    println!("tail integral growth exponent at δ = 0.2: {:.4}", fit.slope);
    Ok(())
}
