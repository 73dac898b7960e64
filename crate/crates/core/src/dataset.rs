//! The two-state benchmark system and its synthetic input/output dataset.
//!
//! Trajectories use either a sinusoid `a·sin(k·dt)` or i.i.d. uniform noise
//! on `[−a, a]` as input, with `a = sqrt(s²(1−α²))` taken from the true
//! system's certified region, and start either from a random state in
//! `[−x0_range, x0_range]²` or from the origin.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::linalg::{Mat, Vector};
use crate::model::{simulate, Dimensions, ModelParams, Trajectory, DEFAULT_DIVERGENCE_FLOOR};
use crate::rng::{self, streams};
use crate::sdp::{self, ConicSolver};
use crate::{Error, Result, SCHEMA_VERSION};

/// The data-generating system (`n = 2`, `r = e = 1`, `m = 2`).
pub fn true_system() -> ModelParams {
    let dims = Dimensions { n: 2, r: 1, e: 1, m: 2 };
    ModelParams {
        dims,
        a: Mat::from_row_slice(2, 2, &[0.998, 0.096, -0.048, 0.921]),
        b: Mat::from_row_slice(2, 1, &[0.0049, 0.096]),
        b2: Mat::from_row_slice(2, 2, &[0.4191, 0.4191, 0.3744, 0.3744]),
        c: Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        d: Mat::zeros(1, 1),
        d12: Mat::from_row_slice(1, 2, &[1.0, 1.0]),
        c2: Mat::from_row_slice(2, 2, &[0.18, 0.0, 0.0, 0.18]),
        d21: Mat::from_row_slice(2, 1, &[1.0, 1.0]),
    }
}

/// Largest certified region scale of [`true_system`] at contraction rate
/// `alpha`, from region maximization with the input bound left free.
pub fn true_region_scale(solver: &dyn ConicSolver, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(sdp::post_process(solver, &true_system(), alpha, 0.0)?.s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_sin: usize,
    pub n_noise: usize,
    pub n_sin_zero: usize,
    pub n_noise_zero: usize,
    pub length: usize,
    pub dt: f64,
    pub x0_range: f64,
    pub alpha_true: f64,
    /// Region scale of the true system; computed by [`true_region_scale`]
    /// when absent.
    pub s_true: Option<f64>,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_sin: 300,
            n_noise: 300,
            n_sin_zero: 150,
            n_noise_zero: 150,
            length: 50,
            dt: 0.1,
            x0_range: 6.0,
            alpha_true: 0.97,
            s_true: None,
            seed: 0,
        }
    }
}

/// Offset between a training seed and the seed of its test set.
pub const TEST_SEED_OFFSET: u64 = 0x7E57;

impl GenConfig {
    /// Desk-scale counts (30, 30, 15, 15), 90 trajectories.
    pub fn desk(seed: u64) -> Self {
        GenConfig {
            n_sin: 30,
            n_noise: 30,
            n_sin_zero: 15,
            n_noise_zero: 15,
            seed,
            ..GenConfig::default()
        }
    }

    pub fn total(&self) -> usize {
        self.n_sin + self.n_noise + self.n_sin_zero + self.n_noise_zero
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::Config("length must be >= 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if !(self.x0_range >= 0.0) {
            return Err(Error::Config("x0_range must be nonnegative".into()));
        }
        if !(self.alpha_true > 0.0 && self.alpha_true < 1.0) {
            return Err(Error::Config("alpha_true must lie in (0, 1)".into()));
        }
        if self.s_true.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Config("s_true must be positive".into()));
        }
        Ok(())
    }

    /// Same recipe with 10% of each count (rounded up) and another seed.
    pub fn test_split(&self) -> Self {
        let tenth = |c: usize| c.div_ceil(10);
        GenConfig {
            n_sin: tenth(self.n_sin),
            n_noise: tenth(self.n_noise),
            n_sin_zero: tenth(self.n_sin_zero),
            n_noise_zero: tenth(self.n_noise_zero),
            seed: self.seed.wrapping_add(TEST_SEED_OFFSET),
            ..self.clone()
        }
    }

    pub fn input_amplitude(&self, s_true: f64) -> f64 {
        (s_true * s_true * (1.0 - self.alpha_true * self.alpha_true)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Sine,
    Noise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// Generation recipe with `s_true` resolved.
    pub config: GenConfig,
    /// `max_{i,k,c} |u_k^{(i)}[c]|`.
    pub delta: f64,
    pub input_amplitude: f64,
    pub dims: Dimensions,
    pub generator: String,
    /// Input family of each trajectory, in order.
    pub kinds: Vec<InputKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub trajectories: Vec<Trajectory>,
}

/// `max |u|` over every trajectory, step and channel.
pub fn max_abs_input(trajectories: &[Trajectory]) -> f64 {
    trajectories
        .iter()
        .flat_map(|t| t.u.iter())
        .flat_map(|u| u.iter())
        .fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn generate(config: &GenConfig, solver: &dyn ConicSolver) -> Result<Dataset> {
    config.validate()?;
    let s_true = match config.s_true {
        Some(s) => s,
        None => true_region_scale(solver, config.alpha_true)?,
    };
    let amplitude = config.input_amplitude(s_true);
    let system = true_system();
    let groups = [
        (InputKind::Sine, config.n_sin, false),
        (InputKind::Noise, config.n_noise, false),
        (InputKind::Sine, config.n_sin_zero, true),
        (InputKind::Noise, config.n_noise_zero, true),
    ];
    let mut trajectories = Vec::with_capacity(config.total());
    let mut kinds = Vec::with_capacity(config.total());
    for (kind, count, zero_x0) in groups {
        for _ in 0..count {
            let index = trajectories.len() as u64;
            let mut r = rng::stream(config.seed, streams::TRAJECTORY_BASE + index);
            let x0 = if zero_x0 {
                Vector::zeros(2)
            } else {
                let a = rng::uniform(&mut r, -config.x0_range, config.x0_range);
                let b = rng::uniform(&mut r, -config.x0_range, config.x0_range);
                Vector::from_row_slice(&[a, b])
            };
            let u: Vec<Vector> = (0..config.length)
                .map(|k| {
                    let val = match kind {
                        InputKind::Sine => amplitude * (k as f64 * config.dt).sin(),
                        InputKind::Noise => rng::uniform(&mut r, -amplitude, amplitude),
                    };
                    Vector::from_element(1, val)
                })
                .collect();
            let rollout = simulate(&system, &x0, &u)?;
            if rollout.overflowed() {
                return Err(Error::Numerical("true system overflowed during generation".into()));
            }
            let diverged = rollout.is_divergent(DEFAULT_DIVERGENCE_FLOOR);
            trajectories.push(Trajectory {
                x0,
                u,
                y: rollout.y,
                diverged,
            });
            kinds.push(kind);
        }
    }
    let delta = max_abs_input(&trajectories);
    Ok(Dataset {
        meta: DatasetMeta {
            config: GenConfig {
                s_true: Some(s_true),
                ..config.clone()
            },
            delta,
            input_amplitude: amplitude,
            dims: system.dims,
            generator: format!("lure-sysid {} chacha8", env!("CARGO_PKG_VERSION")),
            kinds,
        },
        trajectories,
    })
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    schema_version: u32,
    meta: DatasetMeta,
    trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn delta(&self) -> f64 {
        self.meta.delta
    }

    /// Total number of input/output samples.
    pub fn num_points(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn num_diverged(&self) -> usize {
        self.trajectories.iter().filter(|t| t.diverged).count()
    }

    /// Checks shapes, finiteness and that the stored δ equals `max |u|`.
    pub fn validate(&self) -> Result<()> {
        let dims = self.meta.dims;
        for (i, t) in self.trajectories.iter().enumerate() {
            if t.u.len() != t.y.len() || t.u.is_empty() {
                return Err(Error::Validation(format!("trajectory {i}: u and y lengths differ or are empty")));
            }
            if t.x0.len() != dims.n
                || t.u.iter().any(|u| u.len() != dims.r)
                || t.y.iter().any(|y| y.len() != dims.e)
            {
                return Err(Error::Validation(format!("trajectory {i}: vector sizes do not match {dims:?}")));
            }
            let finite = t.x0.iter().chain(t.u.iter().flatten()).chain(t.y.iter().flatten()).all(|v| v.is_finite());
            if !finite {
                return Err(Error::Validation(format!("trajectory {i}: non-finite value")));
            }
        }
        let recomputed = max_abs_input(&self.trajectories);
        if recomputed != self.meta.delta {
            return Err(Error::Validation(format!(
                "stored delta {} differs from max |u| = {recomputed}",
                self.meta.delta
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = DatasetFile {
            schema_version: SCHEMA_VERSION,
            meta: self.meta.clone(),
            trajectories: self.trajectories.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json_at(text: &str, path: &Path) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(text).map_err(|e| Error::parse(path, &e))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: file.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let ds = Dataset {
            meta: file.meta,
            trajectories: file.trajectories,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_at(&text, path)
    }

    /// SHA-256 over the serialized trajectories, hex encoded.
    pub fn content_hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(&self.trajectories)?;
        Ok(hex::encode(Sha256::digest(bytes)))
    }

    /// Writes one CSV trajectory with header `k,u1..ur,y1..ye`.
    pub fn write_trajectory_csv<W: Write>(&self, index: usize, out: W) -> Result<()> {
        let t = self
            .trajectories
            .get(index)
            .ok_or_else(|| Error::Config(format!("no trajectory {index}")))?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string()];
        header.extend((1..=self.meta.dims.r).map(|i| format!("u{i}")));
        header.extend((1..=self.meta.dims.e).map(|i| format!("y{i}")));
        w.write_record(&header)?;
        for (k, (u, y)) in t.u.iter().zip(&t.y).enumerate() {
            let mut rec = vec![k.to_string()];
            rec.extend(u.iter().chain(y.iter()).map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Writes `traj_XXXX.csv` for every trajectory into `dir`.
    pub fn export_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for i in 0..self.len() {
            let path = dir.join(format!("traj_{i:04}.csv"));
            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            self.write_trajectory_csv(i, std::io::BufWriter::new(file))?;
        }
        Ok(())
    }
}
