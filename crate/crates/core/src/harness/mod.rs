//! Metrics, checkpoints, gradient-check reports, parameter tables and the
//! experiment grid behind the command-line tool.

mod checkpoint;
mod checks;
mod experiment;
mod gradcheck;
mod metrics;
mod params;

pub use checkpoint::{config_hash, Checkpoint, ParamBlock, StatsText, CHECKPOINT_VERSION};
pub use checks::{causality_violations, grl_contract, random_dann_batch, random_tensor, update_rule_gap, GrlReport};
pub use experiment::{
    median, median_convergence, run_cell, run_experiment, Cell, CellSummary, ExperimentReport, ExperimentSpec, Regime,
    RunFailure, RunResult, CONVERGENCE_HEADER, CURVES_HEADER, RUNS_HEADER, SUMMARY_HEADER,
};
pub use gradcheck::{
    run_gradcheck, standard_cases, GradcheckCase, GradcheckReport, GradcheckRow, GRADCHECK_STEP, GRADCHECK_TOLERANCE,
};
pub use metrics::{compute_mae, compute_rmse};
pub use params::{params_table, with_thousands, ParamsTable, TABLE_DEPTHS};
