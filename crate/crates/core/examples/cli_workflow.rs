//! Drives the command-line interface in-process: generate, train, analyze
//! and evaluate, the same sequence a shell session would run.

use lure_sysid::cli::main_with_args;

pub fn run_example() -> lure_sysid::Result<()> {
    let dir = std::env::temp_dir().join(format!("lure-sysid-cli-{}", std::process::id()));
    let d = |p: &str| dir.join(p).display().to_string();
    let steps: [Vec<String>; 4] = [
        vec!["generate".into(), "--out".into(), d("data"), "--seed".into(), "7".into(),
             "--n-sin".into(), "30".into(), "--n-noise".into(), "30".into(),
             "--n-sin-zero".into(), "15".into(), "--n-noise-zero".into(), "15".into(), "--no-csv".into()],
        vec!["train".into(), "--dataset".into(), d("data/train.json"), "--out".into(), d("run"),
             "--epochs".into(), "30".into()],
        vec!["analyze".into(), "--model".into(), d("run/model.json"), "--certificate".into(),
             d("run/certificate.json"), "--dataset".into(), d("data/train.json"), "--out".into(), d("run")],
        vec!["eval".into(), "--model".into(), d("run/model.json"), "--certificate".into(),
             d("run/certificate.json"), "--dataset".into(), d("data/test.json"), "--out".into(), d("eval")],
    ];
    for args in steps {
        println!("$ lure-sysid {}", args[0]);
        let code = main_with_args(std::iter::once("lure-sysid".to_string()).chain(args.clone()));
        if code != 0 {
            return Err(lure_sysid::Error::Config(format!("{} exited with {code}", args[0])));
        }
    }
    let report = std::fs::read_to_string(dir.join("eval/report.json")).map_err(|e| lure_sysid::Error::Io {
        path: dir.join("eval/report.json"),
        source: e,
    })?;
    println!("{}", &report[..report.len().min(400)]);
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}

#[allow(dead_code)]
fn main() -> lure_sysid::Result<()> {
    run_example()
}
