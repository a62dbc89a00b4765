//! Decay of the compactified function f_φ towards its boundary values: the
//! focusing ladder (x₂ → 0 at fixed x₁) and the generic ladder (x₁ = x₂ → 0).

use std::time::Instant;

use num_complex::Complex64;
use quadric_lab::equidist_lab::{focusing_ladder, focusing_study, generic_ladder, generic_study, TestBump};

fn main() -> quadric_lab::Result<()> {
    let bump = TestBump::new(Complex64::new(0.0, 1.0), 0.3)?;
    let delta = 0.5;
    let eps0 = 0.1;

    let start = Instant::now();
    let focusing = focusing_study(&bump, 0.3, &focusing_ladder(), eps0, delta)?;
    println!("focusing regime ({:.1?})", start.elapsed());
    for r in &focusing.rows {
        println!("  x2 = {:.2e}: f = {:.8}, boundary = {:.8}, gap = {:.2e}", r.x2, r.f, r.reference, r.gap);
    }
    println!("  exponent {:.3}, 95% lower bound {:.3}", focusing.exponent(), focusing.lower_bound());

    let start = Instant::now();
    let generic = generic_study(&bump, &generic_ladder(), eps0, delta)?;
    println!("generic regime ({:.1?})", start.elapsed());
    for r in &generic.rows {
        println!("  x = {:.2e}: f = {:.8}, ∫φ = {:.8}, gap = {:.2e}", r.x1, r.f, r.reference, r.gap);
    }
    println!("  exponent {:.3}, 95% lower bound {:.3}", generic.exponent(), generic.lower_bound());
    Ok(())
}
