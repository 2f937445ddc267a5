//! Checkpoint round-trip and per-query inference: train briefly, save, load,
//! and design topologies for fresh questions. Different questions can get
//! different graphs — the mask is query-conditioned.
//!
//!     cargo run --release --example design_topology

use topolab::agents::{AgentSpec, TaskItem};
use topolab::eib::{
    design_topology, synthetic_reward_env, train, Ablation, EibModel, EncoderCfg, Hyper,
    TrainConfig,
};
use topolab::harness::generate_synthetic_tasks;
use topolab::protocol::{Aggregation, RunConfig};
use topolab::rng::stream;

fn main() -> topolab::Result<()> {
    let agents = AgentSpec::uniform(5, 0.7, 0.6)?;
    let tasks = generate_synthetic_tasks(40, 4, 9)?;
    let run = RunConfig::synthetic(2, Aggregation::MajorityVote, 9);
    let cfg = TrainConfig {
        queries_per_batch: 40,
        epochs: 30,
        learning_rate: 0.2,
        seed: 9,
        ..TrainConfig::default()
    };
    let mut model = EibModel::init(Hyper::default(), EncoderCfg::default(), cfg.seed)?;
    let mut env = synthetic_reward_env(agents.clone(), run);
    train(&mut model, &agents, &tasks, &mut env, &cfg)?;

    let dir = std::env::temp_dir().join("topolab_design_example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let ckpt = dir.join("checkpoint.json");
    model.save(&ckpt)?;
    let restored = EibModel::load(&ckpt)?;
    assert_eq!(restored, model, "checkpoint round-trip must be exact");
    println!("checkpoint round-trips bit-exactly via {}", ckpt.display());

    for (i, question) in [
        "Which of the four options is marked correct?",
        "Estimate the checksum of the reference stream.",
    ]
    .iter()
    .enumerate()
    {
        let task = TaskItem::new(format!("query-{i}"), *question, 4, 0, None)?;
        let mut rng = stream(9, &[0xde51, i as u64]);
        let d = design_topology(&restored, &agents, &task, Ablation::FullModel, &mut rng)?;
        println!("\nquestion: {question}");
        println!("gate α = [dense {:.3}, sparse {:.3}]", d.alpha[0], d.alpha[1]);
        println!("sampled topology: {}", d.topology.to_json());
    }
    Ok(())
}
