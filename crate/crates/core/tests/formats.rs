//! JSON round trips of every exchanged type.

use std::sync::Arc;

use gerbe_core::bicat::{group_bicat, BicatJson};
use gerbe_core::cech::{make_rp2, Cochain, CochainJson, ComplexJson};
use gerbe_core::descent::{random_descent, validate_2descent, TwoDescentJson};
use gerbe_core::gerbe::{random_gerbe, random_surjection, GerbeJson};
use gerbe_core::path_su2::{exp_chart, fill_square, random_uquat, Cube, Path, Square};
use gerbe_core::two_gerbe::{random_2gerbe, validate_2gerbe, Fin2GerbeJson};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn again<T: serde::Serialize + serde::de::DeserializeOwned>(v: &T) -> T {
    serde_json::from_str(&serde_json::to_string(v).unwrap()).unwrap()
}

#[test]
fn complex_and_cochain() {
    let cx = make_rp2();
    let back = again(&ComplexJson::from(&cx)).build().unwrap();
    assert_eq!(back, cx);
    let cx = Arc::new(cx);
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let c = Cochain::circle(cx.clone(), 1, (0..15).map(|_| r.gen()).collect()).unwrap();
    let j = serde_json::to_value(CochainJson::from_cochain(&c)).unwrap();
    assert_eq!(j["coeff"], "circle");
    assert!(j["values"]["0,1"].is_number());
    let d: CochainJson = serde_json::from_value(j).unwrap();
    assert_eq!(d.build(cx).unwrap().as_circle().unwrap(), c.as_circle().unwrap());
}

#[test]
fn gerbes_descent_and_two_gerbes() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let surj = random_surjection(&mut r, 3, 3);
    let g = random_gerbe(&mut r, surj);
    assert_eq!(again(&GerbeJson::from_gerbe(&g)).build().unwrap(), g);
    let d = random_descent(&mut r, 3, 2, 3);
    let d2 = again(&TwoDescentJson::from_data(&d)).build().unwrap();
    assert!(validate_2descent(&d2, 1e-9).pass());
    let t = random_2gerbe(&mut r, 2, 2, 2);
    let t2 = again(&Fin2GerbeJson::from_2gerbe(&t)).build().unwrap();
    assert!(validate_2gerbe(&t2, 1e-9).pass());
    assert_eq!(t2.m, t.m);
    let table: Vec<Vec<usize>> = (0..2).map(|a| (0..2).map(|b| a ^ b).collect()).collect();
    let b = group_bicat(&table, 0);
    let b2 = again(&BicatJson::from_bicat(&b)).build().unwrap();
    assert_eq!(BicatJson::from_bicat(&b2).cells.len(), b.cells.len());
}

#[test]
fn grids_are_row_major_lists() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let (a, b) = (random_uquat(&mut r), random_uquat(&mut r));
    let p = Path::geodesic(a, b, 8).unwrap();
    let j = serde_json::to_value(&p).unwrap();
    assert_eq!(j["points"].as_array().unwrap().len(), 9);
    assert_eq!(j["points"][0].as_array().unwrap().len(), 4);
    assert_eq!(again(&p), p);
    let sq: Square = fill_square(&p, &p).unwrap();
    assert_eq!(again(&sq), sq);
    let c = Cube::from_fn(8, exp_chart).unwrap();
    let j = serde_json::to_value(&c).unwrap();
    assert_eq!(j["points"].as_array().unwrap().len(), 729);
    assert_eq!(again(&c), c);
}
