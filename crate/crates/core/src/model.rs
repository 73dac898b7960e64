//! Discrete-time Lur'e model with an elementwise deadzone in the loop.
//!
//! ```text
//! x_{k+1} = A x_k + B u_k + B2 w_k
//! ŷ_k     = C x_k + D u_k + D12 w_k
//! v_k     = C2 x_k + D21 u_k
//! w_k     = dzn(v_k)
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, Mat, Vector};
use crate::{Error, Result, SCHEMA_VERSION};

/// Simulation stops once any state component exceeds this magnitude.
pub const DIVERGENCE_GUARD: f64 = 1e9;

/// Default final-state norm a trajectory must exceed to be classed divergent.
pub const DEFAULT_DIVERGENCE_FLOOR: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimensions {
    /// State dimension.
    pub n: usize,
    /// Input dimension.
    pub r: usize,
    /// Output dimension.
    pub e: usize,
    /// Number of deadzone channels.
    pub m: usize,
}

impl Dimensions {
    pub fn new(n: usize, r: usize, e: usize, m: usize) -> Result<Self> {
        let dims = Dimensions { n, r, e, m };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.r == 0 || self.e == 0 || self.m == 0 {
            return Err(Error::Config(format!("all dimensions must be >= 1, got {self:?}")));
        }
        Ok(())
    }

    /// Number of scalar entries in the eight system matrices.
    pub fn theta_len(&self) -> usize {
        let Dimensions { n, r, e, m } = *self;
        n * n + n * r + n * m + e * n + e * r + e * m + m * n + m * r
    }
}

/// The eight system matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: Dimensions,
    pub a: Mat,
    pub b: Mat,
    pub b2: Mat,
    pub c: Mat,
    pub d: Mat,
    pub d12: Mat,
    pub c2: Mat,
    pub d21: Mat,
}

impl ModelParams {
    pub fn zeros(dims: Dimensions) -> Self {
        let Dimensions { n, r, e, m } = dims;
        ModelParams {
            dims,
            a: Mat::zeros(n, n),
            b: Mat::zeros(n, r),
            b2: Mat::zeros(n, m),
            c: Mat::zeros(e, n),
            d: Mat::zeros(e, r),
            d12: Mat::zeros(e, m),
            c2: Mat::zeros(m, n),
            d21: Mat::zeros(m, r),
        }
    }

    /// `(name, matrix)` pairs in a fixed order.
    pub fn matrices(&self) -> [(&'static str, &Mat); 8] {
        [
            ("A", &self.a),
            ("B", &self.b),
            ("B2", &self.b2),
            ("C", &self.c),
            ("D", &self.d),
            ("D12", &self.d12),
            ("C2", &self.c2),
            ("D21", &self.d21),
        ]
    }

    pub fn matrices_mut(&mut self) -> [&mut Mat; 8] {
        [
            &mut self.a,
            &mut self.b,
            &mut self.b2,
            &mut self.c,
            &mut self.d,
            &mut self.d12,
            &mut self.c2,
            &mut self.d21,
        ]
    }

    fn expected_shapes(&self) -> [(usize, usize); 8] {
        let Dimensions { n, r, e, m } = self.dims;
        [(n, n), (n, r), (n, m), (e, n), (e, r), (e, m), (m, n), (m, r)]
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        for ((name, mat), shape) in self.matrices().into_iter().zip(self.expected_shapes()) {
            if mat.shape() != shape {
                return Err(Error::Dimension(format!(
                    "{name} is {:?}, expected {shape:?}",
                    mat.shape()
                )));
            }
            if !linalg::all_finite(mat) {
                return Err(Error::NonFinite(format!("model matrix {name}")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            schema_version: SCHEMA_VERSION,
            dims: self.dims,
            a: self.a.clone(),
            b: self.b.clone(),
            b2: self.b2.clone(),
            c: self.c.clone(),
            d: self.d.clone(),
            d12: self.d12.clone(),
            c2: self.c2.clone(),
            d21: self.d21.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.into_params()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, &e))?;
        file.into_params()
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    dims: Dimensions,
    #[serde(rename = "A", with = "linalg::rows")]
    a: Mat,
    #[serde(rename = "B", with = "linalg::rows")]
    b: Mat,
    #[serde(rename = "B2", with = "linalg::rows")]
    b2: Mat,
    #[serde(rename = "C", with = "linalg::rows")]
    c: Mat,
    #[serde(rename = "D", with = "linalg::rows")]
    d: Mat,
    #[serde(rename = "D12", with = "linalg::rows")]
    d12: Mat,
    #[serde(rename = "C2", with = "linalg::rows")]
    c2: Mat,
    #[serde(rename = "D21", with = "linalg::rows")]
    d21: Mat,
}

impl ModelFile {
    fn into_params(self) -> Result<ModelParams> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        // An empty row list deserializes as 0x0; fix up the column count from dims.
        let Dimensions { n, r, e, m } = self.dims;
        let fix = |mat: Mat, rows: usize, cols: usize| {
            if mat.nrows() == 0 && rows == 0 {
                Mat::zeros(0, cols)
            } else {
                mat
            }
        };
        let params = ModelParams {
            dims: self.dims,
            a: fix(self.a, n, n),
            b: fix(self.b, n, r),
            b2: fix(self.b2, n, m),
            c: fix(self.c, e, n),
            d: fix(self.d, e, r),
            d12: fix(self.d12, e, m),
            c2: fix(self.c2, m, n),
            d21: fix(self.d21, m, r),
        };
        params.validate()?;
        Ok(params)
    }
}

/// One input/output trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    #[serde(with = "linalg::vector")]
    pub x0: Vector,
    #[serde(with = "vec_of_vectors")]
    pub u: Vec<Vector>,
    #[serde(with = "vec_of_vectors")]
    pub y: Vec<Vector>,
    /// Set when the generating system's state grew over the horizon.
    #[serde(default)]
    pub diverged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

mod vec_of_vectors {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Vector;

    pub fn serialize<S: Serializer>(v: &[Vector], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = v.iter().map(|x| x.as_slice()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vector>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        Ok(rows.into_iter().map(Vector::from_vec).collect())
    }
}

/// Scalar deadzone: zero on `[-1, 1]`, slope one outside.
pub fn deadzone(v: f64) -> f64 {
    if v > 1.0 {
        v - 1.0
    } else if v < -1.0 {
        v + 1.0
    } else {
        0.0
    }
}

/// Derivative of [`deadzone`], taken as 0 at the kinks.
pub fn deadzone_slope(v: f64) -> f64 {
    if v.abs() > 1.0 {
        1.0
    } else {
        0.0
    }
}

pub fn deadzone_vec(v: &Vector) -> Vector {
    v.map(deadzone)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub x_next: Vector,
    pub y_hat: Vector,
    pub v: Vector,
    pub w: Vector,
}

fn check_vec(name: &str, v: &Vector, len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::Dimension(format!("{name} has length {}, expected {len}", v.len())));
    }
    Ok(())
}

/// One step of the recursion. The `v` equation has no feedthrough from `w`,
/// so the loop is explicit.
pub fn step(params: &ModelParams, x: &Vector, u: &Vector) -> Result<StepOutput> {
    check_vec("x", x, params.dims.n)?;
    check_vec("u", u, params.dims.r)?;
    Ok(step_unchecked(params, x, u))
}

pub(crate) fn step_unchecked(params: &ModelParams, x: &Vector, u: &Vector) -> StepOutput {
    let v = &params.c2 * x + &params.d21 * u;
    let w = deadzone_vec(&v);
    let x_next = &params.a * x + &params.b * u + &params.b2 * &w;
    let y_hat = &params.c * x + &params.d * u + &params.d12 * &w;
    StepOutput { x_next, y_hat, v, w }
}

/// Result of [`simulate`]: predictions plus the internal signals.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    /// `ŷ_0 ..`; shorter than the input when the state overflowed.
    pub y: Vec<Vector>,
    /// `x_0 ..`; one longer than `y` unless the simulation stopped early.
    pub x: Vec<Vector>,
    pub v: Vec<Vector>,
    pub w: Vec<Vector>,
    /// Index of the first state that exceeded [`DIVERGENCE_GUARD`].
    pub overflow_at: Option<usize>,
}

impl Rollout {
    pub fn overflowed(&self) -> bool {
        self.overflow_at.is_some()
    }

    pub fn into_trajectory(self, x0: Vector, u: Vec<Vector>) -> Trajectory {
        let diverged = self.is_divergent(DEFAULT_DIVERGENCE_FLOOR);
        Trajectory {
            x0,
            u,
            y: self.y,
            diverged,
        }
    }

    /// Growth classification over the horizon: the run overflowed, or the
    /// final state norm exceeds both the initial norm and `floor`.
    pub fn is_divergent(&self, floor: f64) -> bool {
        if self.overflowed() {
            return true;
        }
        match (self.x.first(), self.x.last()) {
            (Some(first), Some(last)) => {
                let end = last.norm();
                end > first.norm() && end > floor
            }
            _ => false,
        }
    }
}

pub fn simulate(params: &ModelParams, x0: &Vector, u: &[Vector]) -> Result<Rollout> {
    if u.is_empty() {
        return Err(Error::Config("input sequence must have at least one step".into()));
    }
    check_vec("x0", x0, params.dims.n)?;
    for uk in u {
        check_vec("u_k", uk, params.dims.r)?;
    }
    let steps = u.len();
    let mut rollout = Rollout {
        y: Vec::with_capacity(steps),
        x: Vec::with_capacity(steps + 1),
        v: Vec::with_capacity(steps),
        w: Vec::with_capacity(steps),
        overflow_at: None,
    };
    if x0.iter().any(|c| !c.is_finite() || c.abs() > DIVERGENCE_GUARD) {
        rollout.overflow_at = Some(0);
        return Ok(rollout);
    }
    rollout.x.push(x0.clone());
    for (k, uk) in u.iter().enumerate() {
        let out = step_unchecked(params, &rollout.x[k], uk);
        rollout.y.push(out.y_hat);
        rollout.v.push(out.v);
        rollout.w.push(out.w);
        if out
            .x_next
            .iter()
            .any(|c| !c.is_finite() || c.abs() > DIVERGENCE_GUARD)
        {
            rollout.overflow_at = Some(k + 1);
            break;
        }
        rollout.x.push(out.x_next);
    }
    Ok(rollout)
}

/// `(1/N) Σ |ŷ_k − y_k|²`.
pub fn mse(y_hat: &[Vector], y: &[Vector]) -> Result<f64> {
    if y_hat.len() != y.len() {
        return Err(Error::Dimension(format!(
            "sequence lengths differ: {} vs {}",
            y_hat.len(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Dimension("empty sequence".into()));
    }
    let mut acc = 0.0;
    for (a, b) in y_hat.iter().zip(y) {
        if a.len() != b.len() {
            return Err(Error::Dimension("output vector lengths differ".into()));
        }
        acc += (a - b).norm_squared();
    }
    Ok(acc / y.len() as f64)
}

/// Per-channel RMSE divided by the per-channel (population) standard
/// deviation of the reference, averaged over channels.
pub fn nrmse(y_hat: &[Vector], y: &[Vector]) -> Result<f64> {
    mse(y_hat, y)?;
    let channels = y[0].len();
    let count = y.len() as f64;
    let mut total = 0.0;
    for c in 0..channels {
        let mean = y.iter().map(|v| v[c]).sum::<f64>() / count;
        let var = y.iter().map(|v| (v[c] - mean).powi(2)).sum::<f64>() / count;
        if var <= 0.0 {
            return Err(Error::Validation(format!(
                "reference output channel {c} has zero variance"
            )));
        }
        let mse_c = y_hat.iter().zip(y).map(|(a, b)| (a[c] - b[c]).powi(2)).sum::<f64>() / count;
        total += mse_c.sqrt() / var.sqrt();
    }
    Ok(total / channels as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::true_system;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn deadzone_branches() {
        assert_eq!(deadzone(0.5), 0.0);
        assert_eq!(deadzone(2.0), 1.0);
        assert_eq!(deadzone(-3.0), -2.0);
        assert_eq!(deadzone(1.0), 0.0);
        assert_eq!(deadzone(-1.0), 0.0);
        assert_eq!(deadzone_slope(1.0), 0.0);
        assert_eq!(deadzone_slope(1.5), 1.0);
    }

    #[test]
    fn zero_model_maps_to_zero() {
        let dims = Dimensions::new(2, 1, 1, 2).unwrap();
        let p = ModelParams::zeros(dims);
        let out = step(&p, &v(&[3.0, -4.0]), &v(&[1.0])).unwrap();
        assert_eq!(out.x_next, Vector::zeros(2));
        assert_eq!(out.y_hat, Vector::zeros(1));
        assert_eq!(out.v, Vector::zeros(2));
        assert_eq!(out.w, Vector::zeros(2));
        let roll = simulate(&p, &v(&[1.0, 1.0]), &vec![v(&[2.0]); 5]).unwrap();
        assert!(roll.y.iter().all(|y| y[0] == 0.0));
    }

    #[test]
    fn benchmark_step_values() {
        let p = true_system();
        let out = step(&p, &v(&[0.0, 0.0]), &v(&[0.0])).unwrap();
        assert_eq!(out.x_next, Vector::zeros(2));
        assert_eq!(out.y_hat, Vector::zeros(1));

        // Hand evaluation: v = 0.18·(10, 0) = (1.8, 0), w = (0.8, 0),
        // x+ = (9.98 + 0.4191·0.8, −0.48 + 0.3744·0.8).
        let out = step(&p, &v(&[10.0, 0.0]), &v(&[0.0])).unwrap();
        assert!((out.v - v(&[1.8, 0.0])).amax() < 1e-12);
        assert!((out.w - v(&[0.8, 0.0])).amax() < 1e-12);
        assert!((out.x_next - v(&[10.31528, -0.18048])).amax() < 1e-12);
    }

    #[test]
    fn step_rejects_wrong_shapes() {
        let p = true_system();
        assert!(matches!(step(&p, &v(&[1.0]), &v(&[0.0])), Err(Error::Dimension(_))));
        assert!(matches!(step(&p, &v(&[1.0, 0.0]), &v(&[0.0, 1.0])), Err(Error::Dimension(_))));
    }

    #[test]
    fn benchmark_origin_stays_put() {
        let p = true_system();
        let roll = simulate(&p, &Vector::zeros(2), &vec![v(&[0.0]); 50]).unwrap();
        assert!(roll.x.iter().all(|x| x.norm() == 0.0));
        assert_eq!(roll.y.len(), 50);
        assert_eq!(roll.x.len(), 51);
    }

    #[test]
    fn benchmark_diverges_from_corner() {
        let p = true_system();
        let roll = simulate(&p, &v(&[6.0, 6.0]), &vec![v(&[0.0]); 50]).unwrap();
        let norms: Vec<f64> = roll.x.iter().map(|x| x.norm()).collect();
        assert!(norms[10..].windows(2).all(|w| w[1] > w[0]));
        assert!(norms[50] > norms[0]);
        assert!(roll.is_divergent(DEFAULT_DIVERGENCE_FLOOR));
    }

    #[test]
    fn overflow_is_reported_not_propagated() {
        let dims = Dimensions::new(1, 1, 1, 1).unwrap();
        let mut p = ModelParams::zeros(dims);
        p.a[(0, 0)] = 1e3;
        p.c[(0, 0)] = 1.0;
        let roll = simulate(&p, &v(&[1.0]), &vec![v(&[0.0]); 10]).unwrap();
        assert_eq!(roll.overflow_at, Some(4));
        assert_eq!(roll.y.len(), 4);
        assert!(roll.y.iter().all(|y| y[0].is_finite()));
        assert!(roll.is_divergent(DEFAULT_DIVERGENCE_FLOOR));
    }

    #[test]
    fn simulate_needs_input() {
        assert!(simulate(&true_system(), &Vector::zeros(2), &[]).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[v(&[1.0])], &[v(&[0.0])]).unwrap(), 1.0);
        let yh = [v(&[1.0, 1.0]), v(&[0.0, 0.0])];
        let y = [v(&[0.0, 0.0]), v(&[0.0, 0.0])];
        assert_eq!(mse(&yh, &y).unwrap(), 1.0);
        assert_eq!(mse(&y, &y).unwrap(), 0.0);
        assert!(mse(&y[..1], &y).is_err());
    }

    #[test]
    fn nrmse_of_offset_is_offset_over_std() {
        let y: Vec<Vector> = (0..20).map(|k| v(&[(k as f64 * 0.3).sin()])).collect();
        let mean = y.iter().map(|x| x[0]).sum::<f64>() / 20.0;
        let sd = (y.iter().map(|x| (x[0] - mean).powi(2)).sum::<f64>() / 20.0).sqrt();
        let yh: Vec<Vector> = y.iter().map(|x| x.add_scalar(0.25)).collect();
        assert!((nrmse(&yh, &y).unwrap() - 0.25 / sd).abs() < 1e-12);
        assert_eq!(nrmse(&y, &y).unwrap(), 0.0);
        assert!(matches!(nrmse(&y, &vec![v(&[1.0]); 20]), Err(Error::Validation(_))));
    }

    #[test]
    fn nrmse_matches_scripted_evaluation() {
        // 50 pseudo-random steps; reference value recomputed inline with plain
        // slices, independent of the nalgebra path.
        let mut rng = crate::rng::stream(3, 0);
        let yh: Vec<f64> = (0..50).map(|_| crate::rng::uniform(&mut rng, -1.0, 1.0)).collect();
        let y: Vec<f64> = (0..50).map(|_| crate::rng::uniform(&mut rng, -2.0, 2.0)).collect();
        let n = 50.0;
        let mean = y.iter().sum::<f64>() / n;
        let sd = (y.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
        let rmse = (yh.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n).sqrt();
        let got = nrmse(
            &yh.iter().map(|a| v(&[*a])).collect::<Vec<_>>(),
            &y.iter().map(|a| v(&[*a])).collect::<Vec<_>>(),
        )
        .unwrap();
        assert!((got - rmse / sd).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_is_bitwise() {
        let mut p = true_system();
        p.a[(0, 1)] = 0.1 + 0.2;
        p.b[(1, 0)] = -1.0 / 3.0;
        let back = ModelParams::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn json_rejects_other_schema_versions() {
        let text = true_system().to_json().unwrap().replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(ModelParams::from_json(&text), Err(Error::SchemaVersion { found: 9, .. })));
    }

    proptest! {
        #[test]
        fn deadzone_sector_and_saturation_identity(v in -1e3f64..1e3) {
            let d = deadzone(v);
            prop_assert!(d * (v - d) >= 0.0);
            prop_assert!(d.abs() <= v.abs());
            prop_assert_eq!(d, v - v.clamp(-1.0, 1.0));
        }

        #[test]
        fn simulate_prefix_consistency(
            x0 in proptest::collection::vec(-6.0f64..6.0, 2),
            u in proptest::collection::vec(-0.5f64..0.5, 1..40),
            cut in 1usize..40,
        ) {
            let p = true_system();
            let u: Vec<Vector> = u.into_iter().map(|a| v(&[a])).collect();
            let k = cut.min(u.len());
            let x0 = Vector::from_vec(x0);
            let full = simulate(&p, &x0, &u).unwrap();
            let pre = simulate(&p, &x0, &u[..k]).unwrap();
            prop_assert_eq!(&full.y[..k], &pre.y[..]);
            prop_assert_eq!(&full.x[..=k], &pre.x[..]);
        }

        #[test]
        fn step_is_pure(x in proptest::collection::vec(-10.0f64..10.0, 2), u in -1.0f64..1.0) {
            let p = true_system();
            let x = Vector::from_vec(x);
            let a = step(&p, &x, &v(&[u])).unwrap();
            let b = step(&p, &x, &v(&[u])).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
