//! Command implementations behind the `lure-sysid` binary.
//!
//! Every flag can also be set through an environment variable named
//! `LURE_<FLAG>` (e.g. `LURE_SEED`); flags win over the environment.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or parse, 3 infeasible,
//! 4 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::certificate::{check_certificate, Certificate};
use crate::dataset::{self, Dataset, GenConfig};
use crate::linalg::{self, Vector};
use crate::model::{mse, nrmse, simulate, ModelParams, Rollout, Trajectory, DEFAULT_DIVERGENCE_FLOOR};
use crate::sdp::{self, ClarabelSolver, ConicSolver, InitObjective};
use crate::sector::{self, BoundingBox, Ellipsoid, Polytope};
use crate::trainer::{self, Mode, Omega, RunConfig, TrainConfig, TrainOutput};
use crate::{Error, Result, SCHEMA_VERSION};

/// Text printed by `--version`.
pub const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nschema versions: dataset 1, model 1, certificate 1, run config 1, report 1"
);

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const IO: i32 = 2;
    pub const INFEASIBLE: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => exit::USAGE,
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::Csv(_)
        | Error::Json(_)
        | Error::SchemaVersion { .. }
        | Error::Validation(_)
        | Error::Dimension(_) => exit::IO,
        Error::Infeasible(_) => exit::INFEASIBLE,
        Error::Numerical(_) | Error::Singular(_) | Error::NonFinite(_) => exit::NUMERICAL,
    }
}

#[derive(Debug, Parser)]
#[command(name = "lure-sysid", version = VERSION, about = "Identification of regionally stable Lur'e models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic training and test datasets.
    Generate(GenerateArgs),
    /// Build a feasible initial model and certificate.
    Init(InitArgs),
    /// Train a model and write a run directory.
    Train(TrainArgs),
    /// Maximize the certified region of a trained model.
    Analyze(AnalyzeArgs),
    /// Evaluate a model on a dataset.
    Eval(EvalArgs),
    /// Train and evaluate all three modes on one dataset.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, env = "LURE_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "LURE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "LURE_N_SIN", default_value_t = 300)]
    pub n_sin: usize,
    #[arg(long, env = "LURE_N_NOISE", default_value_t = 300)]
    pub n_noise: usize,
    #[arg(long, env = "LURE_N_SIN_ZERO", default_value_t = 150)]
    pub n_sin_zero: usize,
    #[arg(long, env = "LURE_N_NOISE_ZERO", default_value_t = 150)]
    pub n_noise_zero: usize,
    #[arg(long, env = "LURE_LENGTH", default_value_t = 50)]
    pub length: usize,
    #[arg(long, env = "LURE_DT", default_value_t = 0.1)]
    pub dt: f64,
    #[arg(long, env = "LURE_X0_RANGE", default_value_t = 6.0)]
    pub x0_range: f64,
    #[arg(long, env = "LURE_ALPHA_TRUE", default_value_t = 0.97)]
    pub alpha_true: f64,
    /// Region scale of the true system; computed when omitted.
    #[arg(long, env = "LURE_S_TRUE")]
    pub s_true: Option<f64>,
    /// Skip the per-trajectory CSV export.
    #[arg(long, env = "LURE_NO_CSV")]
    pub no_csv: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ObjectiveArg {
    Feasibility,
    MaxMargin,
}

impl From<ObjectiveArg> for InitObjective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Feasibility => InitObjective::Feasibility,
            ObjectiveArg::MaxMargin => InitObjective::MaxMargin,
        }
    }
}

#[derive(Debug, Args)]
pub struct InitArgs {
    /// Dataset supplying the dimensions and δ.
    #[arg(long, env = "LURE_DATASET")]
    pub dataset: PathBuf,
    #[arg(long, env = "LURE_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "LURE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Overrides the dataset's δ.
    #[arg(long, env = "LURE_DELTA")]
    pub delta: Option<f64>,
    /// Radius of a ball of initial states the region must contain.
    #[arg(long, env = "LURE_BETA")]
    pub beta: Option<f64>,
    #[arg(long, env = "LURE_OBJECTIVE", value_enum, default_value = "feasibility")]
    pub objective: ObjectiveArg,
    /// `stdsec` additionally restores the certificate with `L = 0`.
    #[arg(long, env = "LURE_MODE", value_enum, default_value = "gensec")]
    pub mode: Mode,
}

/// Training flags; unset flags fall back to `--config`, then to defaults.
#[derive(Clone, Debug, Default, Args)]
pub struct TrainFlags {
    /// `config.json` of an earlier run to reproduce.
    #[arg(long, env = "LURE_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "LURE_EPOCHS")]
    pub epochs: Option<usize>,
    #[arg(long, env = "LURE_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    #[arg(long, env = "LURE_LR")]
    pub lr: Option<f64>,
    #[arg(long, env = "LURE_LR_DECAY")]
    pub lr_decay: Option<f64>,
    #[arg(long, env = "LURE_LR_MIN")]
    pub lr_min: Option<f64>,
    #[arg(long, env = "LURE_NU0")]
    pub nu0: Option<f64>,
    #[arg(long, env = "LURE_NU_DECAY")]
    pub nu_decay: Option<f64>,
    #[arg(long, env = "LURE_NU_MIN")]
    pub nu_min: Option<f64>,
    #[arg(long, env = "LURE_CHECK_EVERY")]
    pub check_every: Option<usize>,
    #[arg(long, env = "LURE_ROLLBACK_LIMIT")]
    pub rollback_limit: Option<usize>,
    #[arg(long, env = "LURE_SEED")]
    pub seed: Option<u64>,
    /// Seed of the initialization; defaults to `--seed`.
    #[arg(long, env = "LURE_INIT_SEED")]
    pub init_seed: Option<u64>,
}

impl TrainFlags {
    /// Resolved configuration and initialization seed.
    pub fn resolve(&self, mode: Option<Mode>) -> Result<(TrainConfig, u64)> {
        let (mut cfg, mut init_seed) = match &self.config {
            Some(path) => {
                let run = RunConfig::load(path)?;
                (run.train, Some(run.init_seed))
            }
            None => (TrainConfig::default(), None),
        };
        if let Some(m) = mode {
            cfg.mode = m;
        }
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { cfg.$field = v; })*
            };
        }
        set!(epochs => epochs, batch_size => batch_size, lr => learning_rate, lr_decay => lr_decay,
             lr_min => lr_min, nu0 => nu0, nu_decay => nu_decay, nu_min => nu_min,
             check_every => check_every, rollback_limit => rollback_limit, seed => seed);
        if self.seed.is_some() && self.init_seed.is_none() {
            init_seed = None;
        }
        let init_seed = self.init_seed.or(init_seed).unwrap_or(cfg.seed);
        cfg.validate()?;
        Ok((cfg, init_seed))
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, env = "LURE_DATASET")]
    pub dataset: PathBuf,
    #[arg(long, env = "LURE_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "LURE_MODE", value_enum)]
    pub mode: Option<Mode>,
    /// Directory with `model.json` and `certificate.json` to start from.
    #[arg(long, env = "LURE_INIT")]
    pub init: Option<PathBuf>,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, env = "LURE_MODEL")]
    pub model: PathBuf,
    /// Certificate supplying α when `--alpha` is absent.
    #[arg(long, env = "LURE_CERTIFICATE")]
    pub certificate: Option<PathBuf>,
    #[arg(long, env = "LURE_ALPHA")]
    pub alpha: Option<f64>,
    /// Dataset supplying δ when `--delta` is absent.
    #[arg(long, env = "LURE_DATASET")]
    pub dataset: Option<PathBuf>,
    #[arg(long, env = "LURE_DELTA")]
    pub delta: Option<f64>,
    #[arg(long, env = "LURE_OUT")]
    pub out: PathBuf,
    /// Points on the exported ellipse boundary.
    #[arg(long, env = "LURE_BOUNDARY_POINTS", default_value_t = 200)]
    pub boundary_points: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, env = "LURE_MODEL")]
    pub model: PathBuf,
    #[arg(long, env = "LURE_CERTIFICATE")]
    pub certificate: Option<PathBuf>,
    /// Dataset to evaluate on, usually the test split.
    #[arg(long, env = "LURE_DATASET")]
    pub dataset: PathBuf,
    /// Input bound used for the certificate check; defaults to the dataset's.
    #[arg(long, env = "LURE_DELTA")]
    pub delta: Option<f64>,
    #[arg(long, env = "LURE_LABEL", default_value = "model")]
    pub label: String,
    #[arg(long, env = "LURE_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, env = "LURE_DATASET")]
    pub dataset: PathBuf,
    #[arg(long, env = "LURE_TEST")]
    pub test: PathBuf,
    #[arg(long, env = "LURE_OUT")]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: TrainFlags,
}

/// Predicted-versus-true divergence counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Consistency {
    pub total: usize,
    pub truth_diverged: usize,
    pub pred_diverged: usize,
    pub both: usize,
    pub truth_only: usize,
    pub pred_only: usize,
    pub neither: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub s: f64,
    pub alpha: f64,
    /// Semi-axes of `E(P⁻¹/s²)`, largest first.
    pub semi_axes: Vec<f64>,
    #[serde(rename = "H", with = "linalg::rows")]
    pub h: linalg::Mat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub label: String,
    pub nrmse: f64,
    pub mse: f64,
    /// `passed`, `failed` or `none`.
    pub certificate: String,
    pub certificate_failures: Vec<String>,
    pub delta: f64,
    pub region: Option<RegionSummary>,
    pub consistency: Consistency,
    /// Trajectories whose prediction hit the overflow guard; their errors
    /// count over the finite prefix only.
    pub overflowed: usize,
}

/// Simulates `params` on every trajectory and fills the report.
pub fn evaluate(
    label: &str,
    params: &ModelParams,
    cert: Option<&Certificate>,
    data: &[Trajectory],
    delta: f64,
) -> Result<(EvalReport, Vec<Rollout>)> {
    if data.is_empty() {
        return Err(Error::Config("evaluation dataset is empty".into()));
    }
    let mut rollouts = Vec::with_capacity(data.len());
    let (mut y_hat, mut y): (Vec<Vector>, Vec<Vector>) = (Vec::new(), Vec::new());
    let mut c = Consistency {
        total: data.len(),
        ..Consistency::default()
    };
    let mut overflowed = 0;
    for t in data {
        let roll = simulate(params, &t.x0, &t.u)?;
        let pred = roll.is_divergent(DEFAULT_DIVERGENCE_FLOOR);
        overflowed += usize::from(roll.overflowed());
        y_hat.extend(roll.y.iter().cloned());
        y.extend(t.y[..roll.y.len()].iter().cloned());
        c.truth_diverged += usize::from(t.diverged);
        c.pred_diverged += usize::from(pred);
        match (t.diverged, pred) {
            (true, true) => c.both += 1,
            (true, false) => c.truth_only += 1,
            (false, true) => c.pred_only += 1,
            (false, false) => c.neither += 1,
        }
        rollouts.push(roll);
    }
    let (status, failures, region) = match cert {
        None => ("none".to_string(), Vec::new(), None),
        Some(cert) => {
            let report = check_certificate(params, cert, delta)?;
            let region = match (&report.region, &report.h) {
                (Some(x), Some(h)) => Some(RegionSummary {
                    s: cert.s,
                    alpha: cert.alpha,
                    semi_axes: Ellipsoid::new(x.clone())?.semi_axes(),
                    h: h.clone(),
                }),
                _ => None,
            };
            let status = if report.passed() { "passed" } else { "failed" };
            (status.to_string(), report.failures(), region)
        }
    };
    let report = EvalReport {
        schema_version: SCHEMA_VERSION,
        label: label.to_string(),
        nrmse: nrmse(&y_hat, &y)?,
        mse: mse(&y_hat, &y)?,
        certificate: status,
        certificate_failures: failures,
        delta,
        region,
        consistency: c,
        overflowed,
    };
    Ok((report, rollouts))
}

/// Predicted states, header `traj_id,k,x1..xn,diverged_truth,diverged_pred`.
pub fn write_phase_csv<W: Write>(out: W, data: &[Trajectory], rollouts: &[Rollout]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = data.first().map_or(0, |t| t.x0.len());
    let mut header = vec!["traj_id".to_string(), "k".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend(["diverged_truth".to_string(), "diverged_pred".to_string()]);
    w.write_record(&header)?;
    for (id, (t, roll)) in data.iter().zip(rollouts).enumerate() {
        let pred = roll.is_divergent(DEFAULT_DIVERGENCE_FLOOR);
        for (k, x) in roll.x.iter().enumerate() {
            let mut rec = vec![id.to_string(), k.to_string()];
            rec.extend(x.iter().map(|v| format!("{v:?}")));
            rec.extend([t.diverged.to_string(), pred.to_string()]);
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io("<phase.csv>", e))?;
    Ok(())
}

/// Writes `region.csv` (boundary of `E(P⁻¹/s²)`) and `polytope.csv` (lines
/// bounding `L(H)`, clipped to twice the ellipse's bounding box).
pub fn write_region_exports(dir: &Path, cert: &Certificate, points: usize) -> Result<()> {
    if cert.p.nrows() != 2 {
        return Ok(());
    }
    let p_inv = linalg::inverse_pd(&cert.p).ok_or_else(|| Error::Singular("P".into()))?;
    let boundary = sector::ellipsoid_boundary_2d(&Ellipsoid::new(linalg::symmetrize(&p_inv))?, cert.s, points)?;
    let path = dir.join("region.csv");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    sector::write_boundary_csv(std::io::BufWriter::new(file), &boundary)?;

    // Extent of E(P⁻¹/s²) along axis i is s·sqrt(P_ii).
    let half = |i: usize| (2.0 * cert.s * cert.p[(i, i)].sqrt()).max(1.0);
    let bbox = BoundingBox {
        x1: (-half(0), half(0)),
        x2: (-half(1), half(1)),
    };
    let h = crate::certificate::h_from_certificate(cert)?;
    let segments = sector::polytope_segments(&Polytope { h }, bbox)?;
    let path = dir.join("polytope.csv");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    sector::write_polytope_csv(std::io::BufWriter::new(file), &segments)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match run(cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let solver = ClarabelSolver::default();
    match cli.command {
        Command::Generate(a) => cmd_generate(&a, &solver),
        Command::Init(a) => cmd_init(&a, &solver),
        Command::Train(a) => cmd_train(&a, &solver),
        Command::Analyze(a) => cmd_analyze(&a, &solver),
        Command::Eval(a) => cmd_eval(&a),
        Command::Compare(a) => cmd_compare(&a, &solver),
    }
}

pub fn cmd_generate(a: &GenerateArgs, solver: &dyn ConicSolver) -> Result<()> {
    let cfg = GenConfig {
        n_sin: a.n_sin,
        n_noise: a.n_noise,
        n_sin_zero: a.n_sin_zero,
        n_noise_zero: a.n_noise_zero,
        length: a.length,
        dt: a.dt,
        x0_range: a.x0_range,
        alpha_true: a.alpha_true,
        s_true: a.s_true,
        seed: a.seed,
    };
    let train = dataset::generate(&cfg, solver)?;
    let test_cfg = GenConfig {
        s_true: train.meta.config.s_true,
        ..cfg.test_split()
    };
    let test = dataset::generate(&test_cfg, solver)?;
    create_dir(&a.out)?;
    train.save(&a.out.join("train.json"))?;
    test.save(&a.out.join("test.json"))?;
    if !a.no_csv {
        train.export_csv(&a.out.join("csv").join("train"))?;
        test.export_csv(&a.out.join("csv").join("test"))?;
    }
    println!("trajectories: {} train, {} test", train.len(), test.len());
    println!("points: {}", train.num_points());
    println!("diverged: {} train, {} test", train.num_diverged(), test.num_diverged());
    println!("s_true: {}", train.meta.config.s_true.unwrap_or(f64::NAN));
    println!("delta: {}", train.delta());
    Ok(())
}

/// Starting point for `mode` with the initialization options of `init`.
pub fn initial_point(
    solver: &dyn ConicSolver,
    ds: &Dataset,
    delta: f64,
    mode: Mode,
    seed: u64,
    beta: Option<f64>,
    objective: InitObjective,
) -> Result<Omega> {
    if beta.is_none() && objective == InitObjective::Feasibility {
        return trainer::initial_omega(solver, ds.meta.dims, delta, mode, seed);
    }
    let (params, cert) = sdp::initialize(solver, ds.meta.dims, delta, beta, seed, objective)?;
    let cert = if mode == Mode::StdSec {
        sdp::feasibility_restore(solver, &params, cert.s, cert.alpha, delta, true)?
    } else {
        cert
    };
    Ok(Omega::new(params, &cert))
}

pub fn cmd_init(a: &InitArgs, solver: &dyn ConicSolver) -> Result<()> {
    let ds = Dataset::load(&a.dataset)?;
    let delta = a.delta.unwrap_or(ds.delta());
    let omega = initial_point(solver, &ds, delta, a.mode, a.seed, a.beta, a.objective.into())?;
    create_dir(&a.out)?;
    omega.params.save(&a.out.join("model.json"))?;
    omega.certificate().save(&a.out.join("certificate.json"))?;
    println!("alpha: {}  s: {}  delta: {delta}", omega.alpha, omega.sigma.sqrt());
    Ok(())
}

fn load_init(dir: &Path) -> Result<Omega> {
    let params = ModelParams::load(&dir.join("model.json"))?;
    let cert = Certificate::load(&dir.join("certificate.json"))?;
    Ok(Omega::new(params, &cert))
}

/// Trains on `ds` and writes the run directory `out`.
pub fn train_run(
    ds: &Dataset,
    cfg: &TrainConfig,
    init_seed: u64,
    init: Option<Omega>,
    out: &Path,
    solver: &dyn ConicSolver,
) -> Result<TrainOutput> {
    let delta = cfg.delta.unwrap_or(ds.delta());
    let init = match init {
        Some(o) => o,
        None => trainer::initial_omega(solver, ds.meta.dims, delta, cfg.mode, init_seed)?,
    };
    let output = trainer::train(&ds.trajectories, delta, cfg, init, solver)?;
    let run = RunConfig::new(cfg, ds, delta, solver, init_seed)?;
    trainer::write_run_dir(out, &run, &output)?;
    Ok(output)
}

pub fn cmd_train(a: &TrainArgs, solver: &dyn ConicSolver) -> Result<()> {
    let ds = Dataset::load(&a.dataset)?;
    let (cfg, init_seed) = a.flags.resolve(a.mode)?;
    let init = a.init.as_deref().map(load_init).transpose()?;
    let out = train_run(&ds, &cfg, init_seed, init, &a.out, solver)?;
    let last = out.state.history.last();
    println!(
        "mode: {}  epochs: {}  final mse: {}  restorations: {}  rollbacks: {}",
        cfg.mode,
        out.state.epoch,
        last.map_or(f64::NAN, |r| r.mse),
        out.state.restorations,
        out.state.rollbacks
    );
    Ok(())
}

pub fn cmd_analyze(a: &AnalyzeArgs, solver: &dyn ConicSolver) -> Result<()> {
    let params = ModelParams::load(&a.model)?;
    let given = a.certificate.as_deref().map(Certificate::load).transpose()?;
    let alpha = match (a.alpha, &given) {
        (Some(al), _) => al,
        (None, Some(c)) => c.alpha,
        (None, None) => return Err(Error::Config("need --alpha or --certificate".into())),
    };
    let delta = match (a.delta, &a.dataset) {
        (Some(d), _) => d,
        (None, Some(path)) => Dataset::load(path)?.delta(),
        (None, None) => return Err(Error::Config("need --delta or --dataset".into())),
    };
    let cert = sdp::post_process(solver, &params, alpha, delta).map_err(|e| match (e, &given) {
        (Error::Infeasible(msg), Some(c)) => {
            let failed = check_certificate(&params, c, delta)
                .map(|r| r.failures().join(", "))
                .unwrap_or_default();
            Error::Infeasible(format!("{msg}; supplied certificate fails: {failed}"))
        }
        (Error::Infeasible(msg), None) => {
            Error::Infeasible(format!("{msg}; no P, L, M satisfy F < 0, G_i >= 0 and the delta bound"))
        }
        (e, _) => e,
    })?;
    let report = check_certificate(&params, &cert, delta)?;
    create_dir(&a.out)?;
    cert.save(&a.out.join("certificate.json"))?;
    std::fs::write(a.out.join("analysis.json"), report.to_json()?).map_err(|e| Error::io(a.out.join("analysis.json"), e))?;
    write_region_exports(&a.out, &cert, a.boundary_points)?;
    println!("s: {}  alpha: {alpha}  delta: {delta}  delta_max: {}", cert.s, report.delta_max);
    println!("L nonzero: {}", cert.l.amax() > 0.0);
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let params = ModelParams::load(&a.model)?;
    let cert = a.certificate.as_deref().map(Certificate::load).transpose()?;
    let ds = Dataset::load(&a.dataset)?;
    let delta = a.delta.unwrap_or(ds.delta());
    let (report, rollouts) = evaluate(&a.label, &params, cert.as_ref(), &ds.trajectories, delta)?;
    create_dir(&a.out)?;
    write_json(&a.out.join("report.json"), &report)?;
    let path = a.out.join("phase.csv");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_phase_csv(std::io::BufWriter::new(file), &ds.trajectories, &rollouts)?;
    if let Some(c) = cert.as_ref().filter(|_| report.certificate == "passed") {
        write_region_exports(&a.out, c, 200)?;
    }
    print_table(&[report]);
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub schema_version: u32,
    pub dataset_hash: String,
    pub test_hash: String,
    pub reports: Vec<EvalReport>,
}

/// Trains every mode on `train`, evaluates on `test` and writes one run
/// directory per mode plus `summary.json` and `summary.csv`.
pub fn compare(
    train: &Dataset,
    test: &Dataset,
    base: &TrainConfig,
    init_seed: u64,
    out: &Path,
    solver: &dyn ConicSolver,
) -> Result<CompareSummary> {
    let delta = base.delta.unwrap_or(train.delta());
    let mut reports = Vec::new();
    for mode in [Mode::NoSec, Mode::StdSec, Mode::GenSec] {
        let cfg = TrainConfig { mode, ..base.clone() };
        let dir = out.join(mode.name());
        let run = train_run(train, &cfg, init_seed, None, &dir, solver)?;
        let (report, rollouts) = evaluate(mode.name(), &run.params, run.certificate.as_ref(), &test.trajectories, delta)?;
        write_json(&dir.join("report.json"), &report)?;
        let path = dir.join("phase.csv");
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_phase_csv(std::io::BufWriter::new(file), &test.trajectories, &rollouts)?;
        if let Some(c) = &run.certificate {
            write_region_exports(&dir, c, 200)?;
        }
        reports.push(report);
    }
    let summary = CompareSummary {
        schema_version: SCHEMA_VERSION,
        dataset_hash: train.content_hash()?,
        test_hash: test.content_hash()?,
        reports,
    };
    write_json(&out.join("summary.json"), &summary)?;
    let path = out.join("summary.csv");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["model", "nrmse", "certificate", "truth_diverged", "pred_diverged", "consistent"])?;
    for r in &summary.reports {
        let c = &r.consistency;
        w.write_record([
            r.label.clone(),
            format!("{:?}", r.nrmse),
            r.certificate.clone(),
            c.truth_diverged.to_string(),
            c.pred_diverged.to_string(),
            (c.both + c.neither).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

pub fn cmd_compare(a: &CompareArgs, solver: &dyn ConicSolver) -> Result<()> {
    let train = Dataset::load(&a.dataset)?;
    let test = Dataset::load(&a.test)?;
    let (cfg, init_seed) = a.flags.resolve(None)?;
    create_dir(&a.out)?;
    let summary = compare(&train, &test, &cfg, init_seed, &a.out, solver)?;
    print_table(&summary.reports);
    Ok(())
}

fn print_table(reports: &[EvalReport]) {
    println!("{:<10} {:>12} {:>12} {:>16} {:>16}", "model", "NRMSE", "certificate", "truth diverged", "pred diverged");
    for r in reports {
        println!(
            "{:<10} {:>12.6} {:>12} {:>16} {:>16}",
            r.label, r.nrmse, r.certificate, r.consistency.truth_diverged, r.consistency.pred_diverged
        );
    }
}
