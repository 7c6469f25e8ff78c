//! Finite bundle gerbes, morphisms and transformations.
//!
//!     cargo run --example gerbe_2cat [-- SEED]

use std::sync::Arc;

use gerbe_core::gerbe::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = 3;
    let (s1, s2) = (random_surjection(&mut rng, base, 3), random_surjection(&mut rng, base, 3));
    let p = Arc::new(random_gerbe(&mut rng, s1));
    let q = Arc::new(random_gerbe(&mut rng, s2));
    println!("P over {:?} with fibers {:?}", p.surj.base(), p.surj.base().iter().map(|&m| p.surj.fiber(m).len()).collect::<Vec<_>>());
    println!("associativity defect of P: {:.1e}", p.associativity_defect().0);

    let f = random_morphism(&mut rng, &p, &q);
    let g = random_morphism(&mut rng, &p, &q);
    println!("f compatibility defect {:.1e}", f.compatibility_defect().0);
    // a section of D_{f,g} upstairs descends to the base
    let t = random_transformation(&mut rng, &f, &g);
    let back = descend_section(&f, &g, &lift_section(&t), 1e-9).unwrap();
    println!("lift then descend moves θ by {:.1e}", back.distance(&t));

    let h = random_morphism(&mut rng, &p, &q);
    let u = random_transformation(&mut rng, &g, &h);
    let tu = vcompose(&t, &u).unwrap();
    println!("vertical composite f ⇒ h: θ = {:?}", tu.theta);
    let groupoid = groupoid_at(&p, p.surj.base()[0]).unwrap();
    println!("groupoid at the first base point, axiom defect {:.1e}", groupoid.check(&[0.1, 0.35, 0.8]));
}
