//! The mirror question: does one agent's forced *correct* answer rescue an
//! originally-wrong system as the graph densifies? Walks chain→full and
//! reports insight TCTE per step.
//!
//!     cargo run --release --example insight_sweep

use topolab::agents::AgentSpec;
use topolab::causal::{spearman, sweep_insight_propagation, SweepOptions};
use topolab::harness::{generate_synthetic_tasks, partition_by_correctness};
use topolab::protocol::{Aggregation, RunConfig};
use topolab::rng::stream;
use topolab::topology::{build_named, densify_path, TopologyKind};

fn main() -> topolab::Result<()> {
    let n = 6;
    let agents = AgentSpec::uniform(n, 0.9, 0.7)?;
    let cfg = RunConfig::synthetic(3, Aggregation::MajorityVote, 0);

    // pool: tasks the chain gets wrong — can a corrected agent save them?
    let candidates = generate_synthetic_tasks(2000, 4, 1)?;
    let chain = build_named(&TopologyKind::Chain, n, &mut stream(0, &[0xba5e]))?;
    let pool = partition_by_correctness(&chain, &agents, &candidates, &cfg, 0, 80)?;
    println!("pool: {} originally-incorrect tasks", pool.incorrect.len());

    let path = densify_path(n, &mut stream(0, &[0x5ee9]))?;
    let report =
        sweep_insight_propagation(&agents, &pool.incorrect, &cfg, &path, SweepOptions::default())?;

    println!("{:>10}  {:>8}  {:>8}", "sparsity", "tcte", "accuracy");
    for row in &report.rows {
        println!("{:>10.3}  {:>8.4}  {:>8.4}", row.topology_sparsity, row.tcte, row.accuracy);
    }

    let density: Vec<f64> = report.rows.iter().map(|r| 1.0 - r.topology_sparsity).collect();
    let tctes: Vec<f64> = report.rows.iter().map(|r| r.tcte).collect();
    println!("spearman(density, tcte) = {:+.3}", spearman(&density, &tctes));
    println!(
        "endpoints: chain {:.4} vs full {:.4}",
        report.rows.first().map_or(f64::NAN, |r| r.tcte),
        report.rows.last().map_or(f64::NAN, |r| r.tcte),
    );
    Ok(())
}
