//! Laurent fit of E*(z, s) near s = 1: the residue is z-independent and equal
//! to 1/vol(Γ\ℍ), the constant term follows the Kronecker limit formula, and
//! combined with the unfolding calibration it predicts the secondary constant
//! of the diagonal-orbit identity.

use std::time::Instant;

use num_complex::Complex64;
use quadric_lab::eisenstein::{
    c2_point, fundamental_domain_volume, residue_fit, C2Options, DEFAULT_RESIDUE_CUTOFF, DEFAULT_RESIDUE_SAMPLES,
};
use quadric_lab::equidist_lab::TestBump;

fn main() -> quadric_lab::Result<()> {
    let vol = fundamental_domain_volume();
    println!("vol(Γ\\ℍ) = {vol:.10}, 1/vol = {:.10}", 1.0 / vol);
    for z in [Complex64::new(0.0, 1.0), Complex64::new(0.5, 0.8747), Complex64::new(0.0, 2.0)] {
        let start = Instant::now();
        let fit = residue_fit(z, &DEFAULT_RESIDUE_SAMPLES, DEFAULT_RESIDUE_CUTOFF)?;
        println!(
            "z = {z}: A = {:.6} ± {:.1e}, B = {:.5}, C = {:.4}, cond {:.1e} ({:.1?})",
            fit.a,
            fit.std_errors[0],
            fit.b,
            fit.c,
            fit.condition_number,
            start.elapsed()
        );
    }

    let start = Instant::now();
    let bump = TestBump::new(Complex64::new(0.0, 1.0), 0.3)?;
    let c2 = c2_point(&bump, &C2Options::default())?;
    println!(
        "c_G+ = {:.5} ± {:.5} (π/6 = {:.5}); predicted (D+ + D-)/mass = {:.5} ({:.1?})",
        c2.calibration.estimate,
        c2.calibration.std_error,
        std::f64::consts::PI / 6.0,
        c2.value,
        start.elapsed()
    );
    Ok(())
}
