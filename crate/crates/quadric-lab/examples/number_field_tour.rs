//! Exact arithmetic, embeddings and units in ℚ, ℚ(√2), ℚ(√5) and ℚ(i), plus
//! the Minkowski lattice O_k ⊂ k∞ that the torus experiments live on.

use quadric_lab::number_field::NumberFieldSpec;

fn main() -> quadric_lab::Result<()> {
    let fields = [
        ("Q", NumberFieldSpec::rational()),
        ("Q(sqrt 2)", NumberFieldSpec::quadratic(2)?),
        ("Q(sqrt 5)", NumberFieldSpec::quadratic(5)?),
        ("Q(i)", NumberFieldSpec::quadratic(-1)?),
    ];
    for (name, k) in &fields {
        println!("{name}: degree {}, (l1, l2) = ({}, {}), discriminant {}", k.degree, k.l1, k.l2, k.discriminant());
        let coords: Vec<i64> = (1..=k.degree as i64).collect();
        let x = k.element(&coords);
        let x2 = k.mul(&x, &x);
        println!("  x = {coords:?}: N(x) = {}, Tr(x) = {}, N(x²) = {}", k.norm(&x), k.trace(&x), k.norm(&x2));
        println!("  embedding of x: {:?}", k.embed(&x));
        for u in &k.fundamental_units {
            println!("  fundamental unit {:?} with norm {}", k.embed(u), k.norm(u));
        }
        println!("  O_k lattice in k∞ has dimension {}", k.ok_lattice().dim());
    }
    Ok(())
}
