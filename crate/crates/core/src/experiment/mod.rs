//! Configuration files, experiment recipes and result emission.

pub mod checkpoint;
pub mod checks;
pub mod config;
pub mod output;
pub mod recipes;

pub use checkpoint::Checkpoint;
pub use config::{load_experiment, load_scenario, ExperimentSpec, LoadedScenario, Recipe, SeedSpec};
pub use output::{emit_csv, emit_svg, CurveAggregate, Stats};
pub use recipes::{
    run_deploy, run_experiment, run_physical, run_schedule, run_sweep, run_train_deploy, DeployRow, ExperimentOutcome,
    RunOptions, Summary,
};
