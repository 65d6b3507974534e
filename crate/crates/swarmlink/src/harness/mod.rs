//! Experiment orchestration: configuration, training/evaluation runs, power
//! sweeps, attention dumps, cost tables, and metrics persistence.

pub mod config;
pub mod costs;
pub mod dump;
pub mod evalrun;
pub mod sweep;
pub mod train;

pub use config::{derive_seed, ExperimentConfig};
pub use costs::{cost_table, format_table, write_costs_csv, CostRow};
pub use dump::{attention_heatmaps, write_heatmaps};
pub use evalrun::{eval_loaded, eval_run, write_eval_artifacts, EvalSummary};
pub use sweep::{default_power_grid, standard_mechanisms, sweep, write_sweep_csv, SweepRow};
pub use train::{
    build_learners, collect_blocks, eval_world_seed, load_all, run_dir_for, train_run, world_seed,
    MetricsRow, TrainOutcome,
};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint was trained with mechanism '{checkpoint}' but the config selects '{config}'")]
    MechanismMismatch { checkpoint: String, config: String },
    #[error("the vanilla relay has no attention scores to dump")]
    NoAttentionScores,
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
