//! Generalized sector condition for the deadzone and the two state-space sets
//! it works with: the polytope `L(H) = {x : ‖Hx‖∞ ≤ 1}` and the ellipsoid
//! `E(X) = {x : xᵀXx ≤ 1}`.

use std::f64::consts::PI;
use std::io::Write;

use crate::linalg::{self, Mat, Vector};
use crate::model::deadzone_vec;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SectorData {
    /// Diagonal of Λ.
    pub lambda: Vector,
    pub h: Mat,
}

impl SectorData {
    pub fn new(lambda: Vector, h: Mat) -> Result<Self> {
        if lambda.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Config("Lambda entries must be strictly positive".into()));
        }
        if h.nrows() != lambda.len() {
            return Err(Error::Dimension(format!(
                "H has {} rows but Lambda has {} entries",
                h.nrows(),
                lambda.len()
            )));
        }
        Ok(SectorData { lambda, h })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ellipsoid {
    pub x: Mat,
}

impl Ellipsoid {
    pub fn new(x: Mat) -> Result<Self> {
        if x.nrows() != x.ncols() {
            return Err(Error::Dimension("ellipsoid matrix must be square".into()));
        }
        if !linalg::all_finite(&x) {
            return Err(Error::NonFinite("ellipsoid matrix".into()));
        }
        if linalg::relative_asymmetry(&x) > 1e-10 {
            return Err(Error::Validation("ellipsoid matrix is not symmetric".into()));
        }
        if linalg::sym_eigenvalues(&x).first().is_some_and(|&l| l < -1e-10) {
            return Err(Error::Validation("ellipsoid matrix is not positive semidefinite".into()));
        }
        Ok(Ellipsoid { x })
    }

    /// Lengths of the principal semi-axes, largest first.
    pub fn semi_axes(&self) -> Vec<f64> {
        let mut axes: Vec<f64> = linalg::sym_eigenvalues(&self.x)
            .into_iter()
            .map(|l| if l > 0.0 { 1.0 / l.sqrt() } else { f64::INFINITY })
            .collect();
        axes.sort_by(|a, b| b.total_cmp(a));
        axes
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polytope {
    pub h: Mat,
}

/// `Γ(v, x, Λ, H) = 2 Δ(v)ᵀ Λ (v + Hx − Δ(v))`, the expanded form of
/// `[Δ; v+Hx]ᵀ [[-2Λ, Λ], [Λ, 0]] [Δ; v+Hx]`.
pub fn gamma(v: &Vector, x: &Vector, sector: &SectorData) -> f64 {
    let dz = deadzone_vec(v);
    let shifted = v + &sector.h * x - &dz;
    2.0 * dz
        .iter()
        .zip(sector.lambda.iter())
        .zip(shifted.iter())
        .map(|((d, l), s)| d * l * s)
        .sum::<f64>()
}

pub fn in_polytope(x: &Vector, p: &Polytope) -> bool {
    (&p.h * x).iter().all(|c| c.abs() <= 1.0)
}

pub fn in_ellipsoid(x: &Vector, e: &Ellipsoid) -> bool {
    (x.transpose() * &e.x * x)[(0, 0)] <= 1.0
}

/// Points `scale · X^{-1/2} (cos φ_j, sin φ_j)` on the boundary of
/// `E(X / scale²)`, with `φ_j = 2πj / count`.
pub fn ellipsoid_boundary_2d(e: &Ellipsoid, scale: f64, count: usize) -> Result<Vec<(f64, [f64; 2])>> {
    if e.x.nrows() != 2 {
        return Err(Error::Dimension(format!(
            "boundary export needs n = 2, got n = {}",
            e.x.nrows()
        )));
    }
    let root = linalg::inv_sqrt_spd(&e.x)?;
    Ok((0..count)
        .map(|j| {
            let phi = 2.0 * PI * j as f64 / count as f64;
            let p = &root * Vector::from_row_slice(&[phi.cos(), phi.sin()]) * scale;
            (phi, [p[0], p[1]])
        })
        .collect())
}

/// Edge index and the two end points of a clipped polytope edge.
pub type Segment = (usize, [f64; 2], [f64; 2]);

/// Axis-aligned plotting window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub x1: (f64, f64),
    pub x2: (f64, f64),
}

/// Segments of the lines `h_i x = ±1` that bound `L(H)`, clipped to `bbox`.
/// Edge `2i` is `h_i x = 1`, edge `2i + 1` is `h_i x = −1`. Zero rows and
/// lines missing the box produce no segment.
pub fn polytope_segments(p: &Polytope, bbox: BoundingBox) -> Result<Vec<Segment>> {
    if p.h.ncols() != 2 {
        return Err(Error::Dimension("polytope export needs n = 2".into()));
    }
    let mut out = Vec::new();
    for i in 0..p.h.nrows() {
        let (a, b) = (p.h[(i, 0)], p.h[(i, 1)]);
        if a == 0.0 && b == 0.0 {
            continue;
        }
        for (k, rhs) in [1.0, -1.0].into_iter().enumerate() {
            if let Some((p0, p1)) = clip_line(a, b, rhs, bbox) {
                out.push((2 * i + k, p0, p1));
            }
        }
    }
    Ok(out)
}

/// Intersection of `a x1 + b x2 = c` with the box, as a segment.
fn clip_line(a: f64, b: f64, c: f64, bbox: BoundingBox) -> Option<([f64; 2], [f64; 2])> {
    // Parameterize along the line direction (-b, a) from its closest point to the origin.
    let norm2 = a * a + b * b;
    let base = [a * c / norm2, b * c / norm2];
    let dir = [-b, a];
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (axis, (min, max)) in [bbox.x1, bbox.x2].into_iter().enumerate() {
        if dir[axis] == 0.0 {
            if base[axis] < min || base[axis] > max {
                return None;
            }
            continue;
        }
        let t0 = (min - base[axis]) / dir[axis];
        let t1 = (max - base[axis]) / dir[axis];
        lo = lo.max(t0.min(t1));
        hi = hi.min(t0.max(t1));
    }
    if lo > hi {
        return None;
    }
    let at = |t: f64| [base[0] + t * dir[0], base[1] + t * dir[1]];
    Some((at(lo), at(hi)))
}

/// CSV with header `phi,x1,x2`.
pub fn write_boundary_csv<W: Write>(out: W, points: &[(f64, [f64; 2])]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["phi", "x1", "x2"])?;
    for (phi, p) in points {
        w.serialize((phi, p[0], p[1]))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// CSV with header `edge_id,x1,x2`, two rows (the endpoints) per edge.
pub fn write_polytope_csv<W: Write>(out: W, segments: &[Segment]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["edge_id", "x1", "x2"])?;
    for (id, p0, p1) in segments {
        w.serialize((id, p0[0], p0[1]))?;
        w.serialize((id, p1[0], p1[1]))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::deadzone;
    use crate::rng;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    /// Quadratic-form route, kept separate from the expanded formula.
    fn gamma_quadratic(vv: &Vector, x: &Vector, s: &SectorData) -> f64 {
        let m = vv.len();
        let mut z = Vector::zeros(2 * m);
        let hx = &s.h * x;
        for i in 0..m {
            z[i] = deadzone(vv[i]);
            z[m + i] = vv[i] + hx[i];
        }
        let mut q = Mat::zeros(2 * m, 2 * m);
        for i in 0..m {
            q[(i, i)] = -2.0 * s.lambda[i];
            q[(i, m + i)] = s.lambda[i];
            q[(m + i, i)] = s.lambda[i];
        }
        (z.transpose() * q * z)[(0, 0)]
    }

    #[test]
    fn gamma_examples() {
        let s = SectorData::new(v(&[1.0]), Mat::zeros(1, 1)).unwrap();
        assert_eq!(gamma(&v(&[0.0]), &v(&[0.0]), &s), 0.0);
        assert!((gamma(&v(&[2.0]), &v(&[5.0]), &s) - 2.0).abs() < 1e-15);
        assert!((gamma_quadratic(&v(&[2.0]), &v(&[5.0]), &s) - 2.0).abs() < 1e-15);
        let s = SectorData::new(v(&[1.0]), Mat::from_element(1, 1, 0.5)).unwrap();
        assert!((gamma(&v(&[2.0]), &v(&[1.0]), &s) - 3.0).abs() < 1e-15);
        assert!((gamma_quadratic(&v(&[2.0]), &v(&[1.0]), &s) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn sector_data_validates() {
        assert!(SectorData::new(v(&[1.0, 0.0]), Mat::zeros(2, 1)).is_err());
        assert!(SectorData::new(v(&[1.0]), Mat::zeros(2, 1)).is_err());
    }

    #[test]
    fn polytope_membership() {
        let zero = Polytope { h: Mat::zeros(2, 2) };
        assert!(in_polytope(&v(&[1e6, -1e6]), &zero));
        let id = Polytope { h: Mat::identity(2, 2) };
        assert!(in_polytope(&v(&[1.0, -1.0]), &id));
        assert!(!in_polytope(&v(&[1.0001, 0.0]), &id));
    }

    #[test]
    fn ellipsoid_membership() {
        let id = Ellipsoid::new(Mat::identity(2, 2)).unwrap();
        assert!(in_ellipsoid(&v(&[0.0, 0.0]), &id));
        assert!(in_ellipsoid(&v(&[0.6, 0.8]), &id));
        let e = Ellipsoid::new(Mat::from_diagonal(&v(&[4.0, 1.0]))).unwrap();
        assert!(!in_ellipsoid(&v(&[0.6, 0.0]), &e));
        assert!(Ellipsoid::new(Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).is_err());
        assert!(Ellipsoid::new(Mat::from_diagonal(&v(&[1.0, -1.0]))).is_err());
    }

    #[test]
    fn boundary_points() {
        let id = Ellipsoid::new(Mat::identity(2, 2)).unwrap();
        let pts = ellipsoid_boundary_2d(&id, 1.0, 4).unwrap();
        let want = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for ((_, p), w) in pts.iter().zip(want) {
            assert!((p[0] - w[0]).abs() < 1e-12 && (p[1] - w[1]).abs() < 1e-12);
        }
        let pts = ellipsoid_boundary_2d(&id, 2.0, 16).unwrap();
        assert!(pts.iter().all(|(_, p)| ((p[0].hypot(p[1])) - 2.0).abs() < 1e-12));

        let e = Ellipsoid::new(Mat::from_diagonal(&v(&[0.25, 1.0]))).unwrap();
        let pts = ellipsoid_boundary_2d(&e, 1.0, 4).unwrap();
        assert!((pts[0].1[0] - 2.0).abs() < 1e-12);
        assert!((pts[1].1[1] - 1.0).abs() < 1e-12);
        assert_eq!(e.semi_axes(), vec![2.0, 1.0]);

        let three = Ellipsoid::new(Mat::identity(3, 3)).unwrap();
        assert!(ellipsoid_boundary_2d(&three, 1.0, 4).is_err());
        let singular = Ellipsoid::new(Mat::from_diagonal(&v(&[1.0, 0.0]))).unwrap();
        assert!(ellipsoid_boundary_2d(&singular, 1.0, 4).is_err());
    }

    #[test]
    fn boundary_points_satisfy_the_quadratic() {
        let x = Mat::from_row_slice(2, 2, &[2.0, 0.7, 0.7, 0.9]);
        let e = Ellipsoid::new(x.clone()).unwrap();
        let s = 1.7;
        for (_, p) in ellipsoid_boundary_2d(&e, s, 64).unwrap() {
            let p = v(&p);
            let q = (p.transpose() * &x * &p)[(0, 0)] / (s * s);
            assert!((q - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn polytope_edges_are_clipped() {
        let p = Polytope { h: Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]) };
        let bbox = BoundingBox { x1: (-3.0, 3.0), x2: (-3.0, 3.0) };
        let segs = polytope_segments(&p, bbox).unwrap();
        assert_eq!(segs.len(), 4);
        for (id, a, b) in &segs {
            let row = id / 2;
            let rhs = if id % 2 == 0 { 1.0 } else { -1.0 };
            for q in [a, b] {
                let val = p.h[(row, 0)] * q[0] + p.h[(row, 1)] * q[1];
                assert!((val - rhs).abs() < 1e-12);
                assert!(q[0].abs() <= 3.0 + 1e-12 && q[1].abs() <= 3.0 + 1e-12);
            }
        }
        let far = Polytope { h: Mat::from_row_slice(1, 2, &[0.1, 0.0]) };
        assert!(polytope_segments(&far, bbox).unwrap().is_empty());
    }

    #[test]
    fn csv_headers() {
        let mut buf = Vec::new();
        write_boundary_csv(&mut buf, &[(0.0, [1.0, 0.0])]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("phi,x1,x2\n"));
        let mut buf = Vec::new();
        write_polytope_csv(&mut buf, &[(0, [1.0, -3.0], [1.0, 3.0])]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("edge_id,x1,x2\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn standard_sector_recovered_with_zero_h() {
        let mut r = rng::stream(11, 0);
        for _ in 0..200 {
            let m = 3;
            let vv = Vector::from_fn(m, |_, _| rng::uniform(&mut r, -5.0, 5.0));
            let s = SectorData::new(Vector::repeat(m, 1.0), Mat::zeros(m, 2)).unwrap();
            let standard: f64 = vv
                .iter()
                .map(|&vi| {
                    let p = deadzone(vi);
                    -2.0 * p * p + 2.0 * p * vi
                })
                .sum();
            assert!((gamma(&vv, &Vector::zeros(2), &s) - standard).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn gamma_nonnegative_inside_polytope(
            m in 1usize..=4, n in 1usize..=4, seed in any::<u64>(),
        ) {
            let mut r = rng::stream(seed, 0);
            let lambda = Vector::from_fn(m, |_, _| rng::uniform(&mut r, 0.01, 5.0));
            let h = Mat::from_fn(m, n, |_, _| rng::uniform(&mut r, -2.0, 2.0));
            let poly = Polytope { h: h.clone() };
            let s = SectorData::new(lambda, h).unwrap();
            let x = loop {
                let x = Vector::from_fn(n, |_, _| rng::uniform(&mut r, -2.0, 2.0));
                if in_polytope(&x, &poly) { break x; }
            };
            let vv = Vector::from_fn(m, |_, _| rng::uniform(&mut r, -10.0, 10.0));
            prop_assert!(gamma(&vv, &x, &s) >= -1e-12);
            prop_assert!((gamma(&vv, &x, &s) - gamma_quadratic(&vv, &x, &s)).abs() < 1e-9);
        }

        #[test]
        fn gamma_sign_invariant_under_lambda_scaling(c in 0.01f64..100.0, seed in any::<u64>()) {
            let mut r = rng::stream(seed, 1);
            let lambda = Vector::from_fn(2, |_, _| rng::uniform(&mut r, 0.1, 2.0));
            let h = Mat::from_fn(2, 2, |_, _| rng::uniform(&mut r, -1.0, 1.0));
            let x = Vector::from_fn(2, |_, _| rng::uniform(&mut r, -3.0, 3.0));
            let vv = Vector::from_fn(2, |_, _| rng::uniform(&mut r, -4.0, 4.0));
            let a = gamma(&vv, &x, &SectorData::new(lambda.clone(), h.clone()).unwrap());
            let b = gamma(&vv, &x, &SectorData::new(lambda * c, h).unwrap());
            prop_assert_eq!(a.partial_cmp(&0.0), b.partial_cmp(&0.0));
        }
    }
}
