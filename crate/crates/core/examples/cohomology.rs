//! Integer cohomology of small complexes and classes of circle cocycles.
//!
//!     cargo run --example cohomology

use std::sync::Arc;

use gerbe_core::cech::*;

fn main() {
    for n in 2..=4 {
        let s = make_boundary_simplex(n);
        let h: Vec<String> = (0..=n).map(|k| format!("{:?}", cohomology(&s, k).unwrap())).collect();
        println!("S^{n} ({} faces, χ = {}): {}", s.count(n), s.euler_characteristic(), h.join(" "));
    }
    let rp2 = Arc::new(make_rp2());
    println!("RP²: H² = {:?}", cohomology(&rp2, 2).unwrap());

    // half of an edge vector with even coboundary is a circle 1-cocycle;
    // its class lands in the torsion of H²
    let v: Vec<i64> = (0..15).map(|i| [0, 4, 5, 6, 9].contains(&i) as i64).collect();
    let n = Cochain::integer(rp2.clone(), 1, v.clone()).unwrap();
    println!("δn = {:?}", delta(&n).as_integer().unwrap());
    for mask in 0u32..1 << 15 {
        let v: Vec<i64> = (0..15).map(|i| (mask >> i & 1) as i64).collect();
        let dn = delta(&Cochain::integer(rp2.clone(), 1, v.clone()).unwrap());
        if dn.as_integer().unwrap().iter().any(|x| x % 2 != 0) {
            continue;
        }
        let g = Cochain::circle(rp2.clone(), 1, v.iter().map(|&x| x as f64 / 2.0).collect()).unwrap();
        let c = circle_class(&g, DEFAULT_TOL).unwrap();
        if !c.is_zero() {
            println!("edge mask {mask:#06x}: class {c:?}");
            println!("  trivialize: {:?}", trivialize_circle(&g, DEFAULT_TOL).err());
            println!("  g⊗g has class {:?}", circle_class(&product_cocycle(&g, &g).unwrap(), DEFAULT_TOL).unwrap());
            break;
        }
    }
}
