//! How far does one agent's forced error propagate as the graph sparsifies?
//! Walks a full→chain edge-removal path and reports TCTE per step over a pool
//! of originally-correct tasks.
//!
//!     cargo run --release --example error_sweep

use topolab::agents::AgentSpec;
use topolab::causal::{spearman, sweep_error_propagation, SweepOptions};
use topolab::harness::{generate_synthetic_tasks, partition_by_correctness};
use topolab::protocol::{Aggregation, RunConfig};
use topolab::rng::stream;
use topolab::topology::{build_named, sparsify_path, TopologyKind};

fn main() -> topolab::Result<()> {
    let n = 6;
    let agents = AgentSpec::uniform(n, 0.9, 0.7)?;
    let cfg = RunConfig::synthetic(3, Aggregation::MajorityVote, 0);

    // pool: tasks the fully connected system answers correctly
    let candidates = generate_synthetic_tasks(600, 4, 0)?;
    let full = build_named(&TopologyKind::Full, n, &mut stream(0, &[0xba5e]))?;
    let pool = partition_by_correctness(&full, &agents, &candidates, &cfg, 80, 0)?;
    println!("pool: {} originally-correct tasks", pool.correct.len());

    let path = sparsify_path(n, &mut stream(0, &[0x5ee9]))?;
    let report =
        sweep_error_propagation(&agents, &pool.correct, &cfg, &path, SweepOptions::default())?;

    println!("{:>10}  {:>8}  {:>8}", "sparsity", "tcte", "accuracy");
    for row in &report.rows {
        println!("{:>10.3}  {:>8.4}  {:>8.4}", row.topology_sparsity, row.tcte, row.accuracy);
    }

    let density: Vec<f64> = report.rows.iter().map(|r| 1.0 - r.topology_sparsity).collect();
    let tctes: Vec<f64> = report.rows.iter().map(|r| r.tcte).collect();
    println!("spearman(density, tcte) = {:+.3}", spearman(&density, &tctes));
    println!(
        "endpoints: full {:.4} vs chain {:.4}",
        report.rows.first().map_or(f64::NAN, |r| r.tcte),
        report.rows.last().map_or(f64::NAN, |r| r.tcte),
    );
    Ok(())
}
