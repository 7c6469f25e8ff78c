//! p₁ of the clutched SU(2) bundle on S⁴ as an integer Čech class.
//!
//!     cargo run --release --example pontryagin [-- K N]

use gerbe_core::pontryagin::*;

fn main() {
    let mut args = std::env::args().skip(1);
    let k: i64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(24);
    let cover = make_cover();
    let c = Clutch::new(&cover, k).unwrap();
    println!("clutch k = {k}: pole margin {:.3}, degree oracle {:.5}", c.margin, degree_oracle(k, 32).unwrap());
    match compute_p1(k, n, 1e-2) {
        Ok(r) => {
            println!("class {} from cochain {:?}", r.class, r.cochain);
            println!("δ defect {:.2e}, integrality {:.2e}, continuity {:.3}", r.delta_defect, r.integrality_defect, r.continuity);
            println!("{} cube evaluations in {} ms", r.cube_evaluations, r.elapsed_ms);
        }
        Err(e) => println!("failed: {e}"),
    }
}
