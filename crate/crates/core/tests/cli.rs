use std::path::Path;
use std::process::{Command, Output};

use lure_sysid::cli::EvalReport;
use lure_sysid::linalg::Mat;
use lure_sysid::{Dataset, Dimensions, ModelParams, SCHEMA_VERSION};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lure-sysid"));
    for (key, _) in std::env::vars() {
        if key.starts_with("LURE_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn text(out: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
}

const DESK: [&str; 8] = [
    "--n-sin",
    "30",
    "--n-noise",
    "30",
    "--n-sin-zero",
    "15",
    "--n-noise-zero",
    "15",
];

fn generate(dir: &Path, seed: &str) -> Output {
    run(bin()
        .args(["generate", "--out"])
        .arg(dir)
        .args(["--seed", seed, "--length", "50", "--dt", "0.1", "--no-csv"])
        .args(DESK))
}

#[test]
fn version_lists_schema_versions() {
    let out = run(bin().arg("--version"));
    assert!(out.status.success());
    assert!(text(&out).contains(&format!("dataset {SCHEMA_VERSION}")));
}

#[test]
fn generate_desk_scale() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["generate", "--out"])
        .arg(dir.path())
        .args(["--seed", "7", "--length", "50", "--dt", "0.1"])
        .args(DESK));
    assert!(out.status.success(), "{}", text(&out));
    let ds = Dataset::load(&dir.path().join("train.json")).unwrap();
    assert_eq!(ds.len(), 90);
    assert_eq!(Dataset::load(&dir.path().join("test.json")).unwrap().len(), 10);
    let csv = std::fs::read_to_string(dir.path().join("csv/train/traj_0000.csv")).unwrap();
    assert!(csv.starts_with("k,u1,y1\n"));
}

#[test]
fn environment_supplies_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(generate(&a, "7").status.success());
    let out = run(bin()
        .env("LURE_SEED", "7")
        .args(["generate", "--out"])
        .arg(&b)
        .args(["--no-csv"])
        .args(DESK));
    assert!(out.status.success(), "{}", text(&out));
    let out = run(bin()
        .env("LURE_SEED", "8")
        .args(["generate", "--out"])
        .arg(&c)
        .args(["--seed", "7", "--no-csv"])
        .args(DESK));
    assert!(out.status.success(), "{}", text(&out));
    let read = |d: &Path| std::fs::read(d.join("train.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(read(&a), read(&c));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(bin().arg("generate")).status.code(), Some(1));
    assert_eq!(run(bin().arg("frobnicate")).status.code(), Some(1));
    let out = run(bin().env("LURE_EPOCHS", "many").args(["train", "--dataset", "x", "--out", "y"]));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unreadable_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["init", "--dataset"])
        .arg(dir.path().join("missing.json"))
        .arg("--out")
        .arg(dir.path()));
    assert_eq!(out.status.code(), Some(2));

    assert!(generate(dir.path(), "1").status.success());
    let path = dir.path().join("train.json");
    let full = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &full[..full.len() / 2]).unwrap();
    let out = run(bin().args(["init", "--dataset"]).arg(&path).arg("--out").arg(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("line 1"), "{}", text(&out));
}

#[test]
fn unstable_model_analysis_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut params = ModelParams::zeros(Dimensions::new(2, 1, 1, 1).unwrap());
    params.a = Mat::identity(2, 2) * 1.5;
    let model = dir.path().join("model.json");
    params.save(&model).unwrap();
    let out = run(bin()
        .args(["analyze", "--model"])
        .arg(&model)
        .args(["--alpha", "0.9", "--delta", "0.1", "--out"])
        .arg(dir.path().join("an")));
    assert_eq!(out.status.code(), Some(3), "{}", text(&out));
    assert!(text(&out).contains("F < 0"), "{}", text(&out));
}

#[test]
fn train_analyze_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(generate(&data, "2").status.success());
    let train = data.join("train.json");
    let run_dir = dir.path().join("run");
    let out = run(bin()
        .args(["train", "--mode", "gensec", "--epochs", "20", "--dataset"])
        .arg(&train)
        .arg("--out")
        .arg(&run_dir));
    assert!(out.status.success(), "{}", text(&out));
    for f in ["config.json", "history.csv", "model.json", "certificate.json"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }

    // The emitted configuration reproduces the run exactly.
    let again = dir.path().join("again");
    let out = run(bin()
        .args(["train", "--dataset"])
        .arg(&train)
        .arg("--config")
        .arg(run_dir.join("config.json"))
        .arg("--out")
        .arg(&again));
    assert!(out.status.success(), "{}", text(&out));
    for f in ["config.json", "history.csv", "model.json", "certificate.json"] {
        assert_eq!(std::fs::read(run_dir.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }

    let an = dir.path().join("an");
    let out = run(bin()
        .args(["analyze", "--model"])
        .arg(run_dir.join("model.json"))
        .arg("--certificate")
        .arg(run_dir.join("certificate.json"))
        .arg("--dataset")
        .arg(&train)
        .arg("--out")
        .arg(&an));
    assert!(out.status.success(), "{}", text(&out));
    let region = std::fs::read_to_string(an.join("region.csv")).unwrap();
    assert_eq!(region.lines().count(), 201);

    let ev = dir.path().join("ev");
    let out = run(bin()
        .args(["eval", "--model"])
        .arg(run_dir.join("model.json"))
        .arg("--certificate")
        .arg(an.join("certificate.json"))
        .arg("--dataset")
        .arg(&train)
        .arg("--out")
        .arg(&ev));
    assert!(out.status.success(), "{}", text(&out));
    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(ev.join("report.json")).unwrap()).unwrap();
    let c = report.consistency;
    assert_eq!(c.both + c.truth_only + c.pred_only + c.neither, 90);
    assert_eq!(report.certificate, "passed");
    assert!(report.nrmse >= 0.0);
    assert_eq!(report.region.unwrap().semi_axes.len(), 2);
    let phase = std::fs::read_to_string(ev.join("phase.csv")).unwrap();
    assert!(phase.starts_with("traj_id,k,x1,x2,diverged_truth,diverged_pred\n"));
}

#[test]
fn compare_writes_a_summary_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(generate(&data, "3").status.success());
    let out_dir = dir.path().join("cmp");
    let out = run(bin()
        .args(["compare", "--epochs", "5", "--dataset"])
        .arg(data.join("train.json"))
        .arg("--test")
        .arg(data.join("test.json"))
        .arg("--out")
        .arg(&out_dir));
    assert!(out.status.success(), "{}", text(&out));
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let labels: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["nosec", "stdsec", "gensec"]);
    assert!(summary.contains("nosec") && summary.lines().nth(1).unwrap().contains(",none,"));
}
