//! Gluing 2-descent data into a gerbe on the base, and a broken ψ̂.
//!
//!     cargo run --example descent [-- SEED]

use gerbe_core::descent::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = random_descent(&mut rng, 4, 3, 3);
    println!("cover {:?}", d.cover);
    let rep = validate_2descent(&d, 1e-9);
    for c in &rep.checks {
        println!("  {:<16} {:.1e}", c.name, c.defect);
    }
    let g = glue_2descent(&d).unwrap();
    println!("glued gerbe: {} points over {} base points, ξ/ψ defect {:.1e}", g.origin.len(), d.base.len(), g.xi_psi_defect);

    let mut bad = d.clone();
    let (k, vals) = bad.psi.iter_mut().find(|(k, _)| k.0 != k.1 && k.1 != k.2).unwrap();
    let k = *k;
    *vals.values_mut().next().unwrap() += 0.25;
    let rep = validate_2descent(&bad, 1e-9);
    let f = rep.failures().next().unwrap();
    println!("ψ{k:?} shifted by 1/4: {} fails ({})", f.name, f.witness.clone().unwrap_or_default());
    println!("glue: {}", glue_2descent(&bad).err().unwrap());
}
