//! Paths and homotopies in SU(2): ν integrals, bubbles, pentagon cycles and
//! a sampled piece of the path 2-groupoid.
//!
//!     cargo run --example pi2 [-- N]

use gerbe_core::bicat::check_bicat;
use gerbe_core::path_su2::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(32);
    let whole = Cube::from_fn(n, exp_chart).unwrap();
    println!("∫ν over SU(2) at N = {n}: {:.6}", integrate_nu_cube(&whole));
    println!("degree of q ↦ q³: {:.4}", degree_s3(|q| q.powi(3), n).unwrap());

    // a bubble changes the phase of a homotopy by the volume it sweeps,
    // with a sign fixed by orientation
    let rho = 1.1;
    let flat = Square::constant(&Path::constant(UQuat::ONE, n).unwrap());
    let bubble = compose_squares(&bubble_square(rho, n).unwrap(), &flat, Mode::Vertical).unwrap();
    let swept = integrate_nu_cube(&fill_cube(&CubeFaces::between(&flat, &bubble).unwrap()).unwrap());
    println!("bubble of radius {rho}: swept {swept:+.4}, ball volume {:.4}", ball_volume(rho));
    println!("  equivalent with phase 0: {}", equiv_check(&flat, 0.0, &bubble, 0.0, 2e-2).unwrap());
    println!("  equivalent with phase {swept:+.4}: {}", equiv_check(&flat, 0.0, &bubble, swept, 2e-2).unwrap());

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: [UQuat; 5] = std::array::from_fn(|_| random_uquat(&mut rng));
    for m in [n / 2, n] {
        let [a, b, c, d] = geodesic_chain(x, m).unwrap();
        println!("pentagon at N = {m}: {:.2e}", pentagon_defect(&a, &b, &c, &d).unwrap());
    }

    let pts: Vec<UQuat> = (0..2).map(|_| random_uquat(&mut rng)).collect();
    let b = pi2_bicat(&pts, [0.0, 0.4, 0.2], 8).unwrap();
    for c in check_bicat(&b, 5e-2).checks {
        println!("  Π₂ sample {:<24} {:.2e}", c.name, c.defect);
    }
}
