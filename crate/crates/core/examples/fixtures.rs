//! Writes the JSON inputs used by the `gerbe` binary and its tests.
//!
//!     cargo run --example fixtures [-- DIR]

use std::path::PathBuf;
use std::sync::Arc;

use gerbe_core::bicat::{group_bicat, BicatJson};
use gerbe_core::cech::{self, delta, make_boundary_simplex, make_rp2, Cochain, CochainJson, ComplexJson};
use gerbe_core::descent::{random_descent, restricted_descent, TwoDescentJson};
use gerbe_core::gerbe::{random_gerbe, FinSurjection, Point};
use gerbe_core::two_gerbe::{random_2gerbe, trivial_2gerbe, Fin2GerbeJson};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn write(dir: &std::path::Path, name: &str, v: &impl serde::Serialize) {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap() + "\n").unwrap();
    println!("wrote {}", p.display());
}

fn main() {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
    });
    std::fs::create_dir_all(&dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let s4 = make_boundary_simplex(4);
    let s3 = Arc::new(make_boundary_simplex(3));
    let rp2 = Arc::new(make_rp2());
    write(&dir, "sphere4.json", &ComplexJson::from(&s4));
    write(&dir, "sphere3.json", &ComplexJson::from(&*s3));
    write(&dir, "rp2.json", &ComplexJson::from(&*rp2));

    // RP²: half an edge vector with even coboundary and odd half-coboundary
    let twisted = (0u32..1 << 15)
        .map(|mask| (0..15).map(|i| (mask >> i & 1) as i64).collect::<Vec<_>>())
        .find(|v| {
            let dn = delta(&Cochain::integer(rp2.clone(), 1, v.clone()).unwrap());
            let d = dn.as_integer().unwrap();
            d.iter().all(|x| x % 2 == 0) && d.iter().map(|x| x / 2).sum::<i64>() % 2 != 0
        })
        .unwrap();
    let g = Cochain::circle(rp2.clone(), 1, twisted.iter().map(|&x| x as f64 / 2.0).collect()).unwrap();
    write(&dir, "rp2_twisted.json", &CochainJson::from_cochain(&g));

    // a circle 2-coboundary on S³
    let h: Vec<f64> = (0..s3.count(1)).map(|_| rng.gen()).collect();
    let g = delta(&Cochain::circle(s3.clone(), 1, h).unwrap());
    write(&dir, "sphere3_coboundary.json", &CochainJson::from_cochain(&g));

    let surj = FinSurjection::from_sizes(&[2, 2, 3, 1]).unwrap();
    let glob = random_gerbe(&mut rng, surj);
    let cover: Vec<Vec<Point>> = vec![vec![0, 1, 2], vec![1, 2, 3], vec![0, 3]];
    let d = restricted_descent(&glob, cover).unwrap();
    write(&dir, "descent_restricted.json", &TwoDescentJson::from_data(&d));
    let d = random_descent(&mut rng, 4, 2, 3);
    let mut j = TwoDescentJson::from_data(&d);
    write(&dir, "descent_coherent.json", &j);
    if let Some(v) = j.psi.values_mut().find(|v| !v.is_empty()) {
        let a = v.values_mut().next().unwrap();
        *a = cech::wrap(*a + 0.25);
    }
    write(&dir, "descent_broken.json", &j);

    let t = trivial_2gerbe(FinSurjection::from_sizes(&[2, 1]).unwrap());
    write(&dir, "two_gerbe_trivial.json", &Fin2GerbeJson::from_2gerbe(&t));
    let r = random_2gerbe(&mut rng, 2, 3, 2);
    write(&dir, "two_gerbe_random.json", &Fin2GerbeJson::from_2gerbe(&r));
    let bad = trivial_2gerbe(FinSurjection::from_sizes(&[2]).unwrap()).twisted_by(|_| 0.2);
    write(&dir, "two_gerbe_twisted.json", &Fin2GerbeJson::from_2gerbe(&bad));
    let base = r.surj_x.base().to_vec();
    write(&dir, "two_gerbe_cover.json", &vec![base.clone(), base.clone(), base.clone(), vec![base[0]]]);

    let z3: Vec<Vec<usize>> = (0..3).map(|a| (0..3).map(|b| (a + b) % 3).collect()).collect();
    write(&dir, "bicat_z3.json", &BicatJson::from_bicat(&group_bicat(&z3, 0)));
}
