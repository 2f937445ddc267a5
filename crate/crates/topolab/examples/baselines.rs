//! Score the named topology families under both intervention modes at once:
//! error TCTE on originally-correct tasks, insight TCTE on originally-wrong
//! ones, natural accuracy over both pools.
//!
//!     cargo run --release --example baselines

use topolab::agents::AgentSpec;
use topolab::causal::baseline_suite;
use topolab::harness::{baseline_kinds, generate_synthetic_tasks, partition_by_correctness};
use topolab::protocol::{Aggregation, RunConfig};
use topolab::rng::stream;
use topolab::topology::{build_named, TopologyKind};

fn main() -> topolab::Result<()> {
    let n = 6;
    let agents = AgentSpec::uniform(n, 0.85, 0.6)?;
    let cfg = RunConfig::synthetic(3, Aggregation::MajorityVote, 2);

    let candidates = generate_synthetic_tasks(1500, 4, 2)?;
    let full = build_named(&TopologyKind::Full, n, &mut stream(2, &[0xba5e]))?;
    let pool = partition_by_correctness(&full, &agents, &candidates, &cfg, 60, 60)?;
    println!(
        "pools: {} correct / {} incorrect tasks\n",
        pool.correct.len(),
        pool.incorrect.len()
    );

    let rows = baseline_suite(&agents, &pool.correct, &pool.incorrect, &cfg, &baseline_kinds())?;
    println!("{:>10}  {:>10}  {:>12}  {:>8}", "kind", "error_tcte", "insight_tcte", "accuracy");
    for r in &rows {
        println!(
            "{:>10}  {:>10.4}  {:>12.4}  {:>8.4}",
            r.kind, r.error_tcte, r.insight_tcte, r.accuracy
        );
    }
    Ok(())
}
