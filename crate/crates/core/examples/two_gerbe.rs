//! Bundle 2-gerbe coherence, its Čech 3-cocycle and the bicategory at a point.
//!
//!     cargo run --example two_gerbe [-- SEED]

use gerbe_core::bicat::check_bicat;
use gerbe_core::two_gerbe::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_2gerbe(&mut rng, 3, 2, 2);
    println!("{} Y points over {} X points", g.y_points().len(), g.surj_x.total().len());
    let rep = validate_2gerbe(&g, 1e-9);
    println!("coherent: {}", rep.pass());

    let base = g.surj_x.base().to_vec();
    let cover = vec![base.clone(), base.clone(), base[1..].to_vec(), base.clone()];
    let a = extract_3cocycle(&g, &cover, &SectionChoice::random(&mut rng, &g, &cover)).unwrap();
    let b = extract_3cocycle(&g, &cover, &SectionChoice::random(&mut rng, &g, &cover)).unwrap();
    println!("δε = {:.1e}, class {:?}", a.delta_defect, epsilon_class(&a, 1e-9).unwrap());
    println!("another choice: class {:?}", epsilon_class(&b, 1e-9).unwrap());

    let bc = restrict_to_point(&g, base[0]).unwrap();
    let r = check_bicat(&bc, 1e-9);
    println!("bicategory at {}: {} objects, {} 1-cells, pass {}", base[0], bc.objects.len(), bc.cells.len(), r.pass());
    for n in &r.notes {
        println!("  note: {n}");
    }

    let alpha = random_quadruple_phase(&mut rng, &g.surj_x);
    let bad = g.twisted_by(|x| alpha[&x]);
    let c = validate_2gerbe(&bad, 1e-9);
    let f = c.failures().next().unwrap();
    println!("twisted associator: {} fails by {:.3} at {}", f.name, f.defect, f.witness.clone().unwrap_or_default());
}
