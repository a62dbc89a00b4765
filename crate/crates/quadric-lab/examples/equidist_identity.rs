//! Checks the diagonal-orbit identity ∫φ(a_s h_t)dt/t = log T·∫φ + 𝒟⁺ + 𝒟⁻ on
//! SL₂(ℝ)/SL₂(ℤ) for a bump at i, then shrinks the bump to watch (𝒟⁺+𝒟⁻)/mass.
use std::time::Instant;

use num_complex::Complex64;
use quadric_lab::eisenstein::{c2_point, C2Options};
use quadric_lab::equidist_lab::{d_constants, theorem_check, DOptions, TestBump};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let i = Complex64::new(0.0, 1.0);
    let start = Instant::now();
    let bump = TestBump::new(i, 0.3)?;
    let d = d_constants(&bump, &DOptions::default())?;
    println!(
        "haar = {:.8}  D+ = {:.8} (ibp {:.8})  D- = {:.8} (ibp {:.8})  near-zero exponent {:.3}",
        d.haar, d.d_plus, d.d_plus_ibp, d.d_minus, d.d_minus_ibp, d.near_zero_exponent
    );
    let check = theorem_check(&bump, &[2.0, 4.0, 8.0, 16.0, 32.0, 64.0], &d)?;
    println!("{:>5} {:>12} {:>12} {:>12} {:>12}", "s", "T", "orbit", "log T·haar", "residual");
    for r in &check.rows {
        println!("{:>5} {:>12.1} {:>12.6} {:>12.6} {:>12.3e}", r.s, r.t, r.orbit_integral, r.log_term, r.residual);
    }
    println!("residual decay exponent {:.3}  ({:.1?})", check.fit.decay_exponent(), start.elapsed());

    for rho in [0.2, 0.1, 0.05] {
        let t0 = Instant::now();
        let b = TestBump::new(i, rho)?;
        let d = d_constants(&b, &DOptions::default())?;
        println!("rho = {rho:<5} (D+ + D-)/mass = {:.6}  ({:.1?})", d.sum() / d.haar, t0.elapsed());
    }
    // The shrinking-bump limit predicted from the Kronecker constant and the
    // unfolding calibration.
    let c2 = c2_point(&bump, &C2Options::default())?;
    println!("predicted limit 2·c_G+·B(i) = {:.6}", c2.value);
    Ok(())
}
