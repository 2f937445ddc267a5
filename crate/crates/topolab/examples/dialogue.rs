//! One K-round dialogue between synthetic agents, transcript printed round
//! by round.
//!
//!     cargo run --example dialogue

use topolab::agents::{AgentSpec, TaskItem};
use topolab::protocol::{run_dialogue, Aggregation, RunConfig};
use topolab::rng::stream;
use topolab::topology::{build_named, TopologyKind};

fn main() -> topolab::Result<()> {
    let n = 5;
    let agents = AgentSpec::uniform(n, 0.8, 0.6)?;
    let mut rng = stream(0, &[0x10e0]);
    let t = build_named(&TopologyKind::Layered(2), n, &mut rng)?;
    let task = TaskItem::new(
        "demo-0",
        "Which checksum matches the reference implementation?",
        4,
        2,
        Some(vec!["0x9e37".into(), "0x79b9".into(), "0x85eb".into(), "0xca6b".into()]),
    )?;

    let cfg = RunConfig::synthetic(3, Aggregation::MajorityVote, 42);
    let outcome = run_dialogue(&t, &agents, &task, &cfg, None)?;

    println!("topology: {:?}", t.edges());
    println!("task: {} (gold {})", task.question, task.gold);
    for (r, row) in outcome.transcript.answers.iter().enumerate() {
        println!("round {}: {row:?}", r + 1);
    }
    println!(
        "final answer: {} — {}",
        outcome.final_answer,
        if outcome.correct == 1 { "correct" } else { "incorrect" }
    );
    println!("prompt characters exchanged: {}", outcome.transcript.message_chars);
    Ok(())
}
