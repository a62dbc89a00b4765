//! KAU and KHU decompositions of SL₂ elements and their reconstructions.

use quadric_lab::group_kit::{kau_decompose, khu_decompose, GroupElement, Sign};

fn main() -> quadric_lab::Result<()> {
    let samples = [[[2.0, 0.0], [0.0, 0.5]], [[2.0, 1.0], [1.0, 1.0]], [[0.3, -1.7], [0.8, -1.2]]];
    for g in samples {
        for sign in [Sign::Plus, Sign::Minus] {
            // KAU needs the relevant column of g to reach the hyperbola branch.
            match kau_decompose(&g, sign) {
                Ok(kau) => {
                    let back = kau.reconstruct();
                    let err = (0..4).map(|i| (back[i / 2][i % 2] - g[i / 2][i % 2]).abs()).fold(0.0, f64::max);
                    println!("g = {g:?} sign {sign:?}: KAU angle {:.6}, λ = {:.6}, r = {:.6}, error {err:.1e}", kau.angle, kau.lambda, kau.r);
                }
                Err(e) => println!("g = {g:?} sign {sign:?}: no KAU decomposition ({e})"),
            }

            let ge = GroupElement::real(g)?;
            let khu = khu_decompose(&ge, sign);
            println!(
                "    KHU s = {:.6}, s_vec = {:?}, reconstruction error {:.1e}",
                khu.s,
                khu.s_vec,
                khu.reconstruct().distance(&ge)
            );
        }
    }
    Ok(())
}
