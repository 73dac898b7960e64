#[path = "../examples/simulate.rs"]
mod simulate;
#[path = "../examples/sector_condition.rs"]
mod sector_condition;
#[path = "../examples/certify.rs"]
mod certify;
#[path = "../examples/initialize.rs"]
mod initialize;
#[path = "../examples/dataset.rs"]
mod dataset;
#[path = "../examples/train.rs"]
mod train;
#[path = "../examples/compare_modes.rs"]
mod compare_modes;
#[path = "../examples/invariance.rs"]
mod invariance;
#[path = "../examples/cli_workflow.rs"]
mod cli_workflow;

#[test]
fn simulate_runs() {
    simulate::run_example().unwrap();
}

#[test]
fn sector_condition_runs() {
    sector_condition::run_example().unwrap();
}

#[test]
fn certify_runs() {
    certify::run_example().unwrap();
}

#[test]
fn initialize_runs() {
    initialize::run_example().unwrap();
}

#[test]
fn dataset_runs() {
    dataset::run_example().unwrap();
}

#[test]
fn train_runs() {
    train::run(5).unwrap();
}

#[test]
fn compare_modes_runs() {
    compare_modes::run(3).unwrap();
}

#[test]
fn invariance_runs() {
    invariance::run_example().unwrap();
}

#[test]
fn cli_workflow_runs() {
    cli_workflow::run_example().unwrap();
}
