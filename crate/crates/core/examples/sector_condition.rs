//! The generalized sector inequality for the deadzone: Γ is nonnegative
//! whenever `x` lies in the polytope `L(H)`, and can turn negative outside.

use lure_sysid::linalg::{Mat, Vector};
use lure_sysid::rng;
use lure_sysid::sector::{gamma, in_polytope, Polytope, SectorData};

pub fn run_example() -> lure_sysid::Result<()> {
    let h = Mat::from_row_slice(2, 2, &[0.4, -0.2, 0.1, 0.5]);
    let sector = SectorData::new(Vector::from_row_slice(&[1.0, 2.0]), h.clone())?;
    let poly = Polytope { h };

    let mut r = rng::stream(11, 0);
    let (mut inside, mut outside, mut inside_min, mut outside_min) = (0, 0, f64::INFINITY, f64::INFINITY);
    for _ in 0..20_000 {
        let x = Vector::from_fn(2, |_, _| rng::uniform(&mut r, -6.0, 6.0));
        let v = Vector::from_fn(2, |_, _| rng::uniform(&mut r, -4.0, 4.0));
        let g = gamma(&v, &x, &sector);
        if in_polytope(&x, &poly) {
            inside += 1;
            inside_min = inside_min.min(g);
        } else {
            outside += 1;
            outside_min = outside_min.min(g);
        }
    }
    println!("{inside} samples in L(H): min Γ = {inside_min:.3e}");
    println!("{outside} samples outside: min Γ = {outside_min:.3e}");
    assert!(inside_min >= 0.0);
    Ok(())
}

#[allow(dead_code)]
fn main() -> lure_sysid::Result<()> {
    run_example()
}
