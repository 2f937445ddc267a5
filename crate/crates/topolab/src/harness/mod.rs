//! Experiment orchestration: task files and synthetic pools, the JSON
//! experiment config, deterministic CSV/summary persistence with a digest
//! manifest, the per-subcommand drivers, and the CLI front end.

pub mod cli;
pub mod config;
pub mod drivers;
pub mod report;
pub mod tasks;

pub use cli::cli_dispatch;
pub use config::{
    file_digest, hex_digest, ExperimentConfig, RunManifest, RunSettings, SweepSettings,
};
pub use drivers::{
    baseline_kinds, generate_topology, run_baselines, run_design, run_report, run_single,
    run_sweep, run_training,
};
pub use report::{
    prepare_path, sweep_summary, write_baselines_csv, write_sweep_csv, write_text, SeededSweep,
};
pub use tasks::{
    check_answer, generate_synthetic_tasks, load_tasks, partition_by_correctness, Partition,
};
