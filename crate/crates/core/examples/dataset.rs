//! Generates a small benchmark dataset, writes it as JSON and CSV and loads
//! it back.

use lure_sysid::dataset::{generate, Dataset, GenConfig};
use lure_sysid::sdp::ClarabelSolver;

pub fn run_example() -> lure_sysid::Result<()> {
    let config = GenConfig::desk(7);
    let ds = generate(&config, &ClarabelSolver::default())?;
    println!(
        "{} trajectories, {} points, {} diverged, delta = {:.6}",
        ds.len(),
        ds.num_points(),
        ds.num_diverged(),
        ds.delta()
    );

    let dir = std::env::temp_dir().join(format!("lure-sysid-dataset-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| lure_sysid::Error::Io { path: dir.clone(), source: e })?;
    let path = dir.join("train.json");
    ds.save(&path)?;
    ds.export_csv(&dir.join("csv"))?;
    let back = Dataset::load(&path)?;
    assert_eq!(back.content_hash()?, ds.content_hash()?);
    println!("round trip through {} ok, hash {}", path.display(), &ds.content_hash()?[..16]);
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}

#[allow(dead_code)]
fn main() -> lure_sysid::Result<()> {
    run_example()
}
