//! Train the dual-view topology generator on the planted-expert benchmark:
//! agent 0 always answers correctly, the rest are coin-flippers, and the
//! REINFORCE objective is plain dialogue correctness. A learner that works
//! routes edges toward the expert.
//!
//!     cargo run --release --example train_learner

use topolab::agents::AgentSpec;
use topolab::eib::{
    mean_reward_from_model, mean_reward_from_probs, synthetic_reward_env, train, Ablation,
    EdgeProbs, EibModel, EncoderCfg, Hyper, TrainConfig,
};
use topolab::harness::generate_synthetic_tasks;
use topolab::protocol::{Aggregation, RunConfig};

fn main() -> topolab::Result<()> {
    let mut agents = vec![AgentSpec::new(0, "resident domain expert", 1.0, 0.8)?];
    for i in 1..6 {
        agents.push(AgentSpec::new(i, format!("generalist {i}"), 0.5, 0.8)?);
    }

    let tasks = generate_synthetic_tasks(60, 4, 0)?;
    let run = RunConfig::synthetic(2, Aggregation::MajorityVote, 0);
    let cfg = TrainConfig {
        samples_per_query: 4,
        learning_rate: 0.3,
        momentum: 0.9,
        queries_per_batch: 60,
        epochs: 60,
        seed: 0,
        ablation: Ablation::FullModel,
    };

    let mut env = synthetic_reward_env(agents.clone(), run);
    let untrained = mean_reward_from_probs(&EdgeProbs::uniform(6), &tasks, &mut env, 32, 0x5a5a)?;
    println!("untrained uniform-mask accuracy: {untrained:.4}");

    let mut model = EibModel::init(Hyper::default(), EncoderCfg::default(), cfg.seed)?;
    let report = train(&mut model, &agents, &tasks, &mut env, &cfg)?;
    for (i, s) in report.steps.iter().enumerate() {
        if i % 10 == 0 || i + 1 == report.steps.len() {
            println!(
                "step {i:>3}: batch reward {:.4}, |grad| {:.3}, gate α = [{:.3}, {:.3}]",
                s.mean_reward, s.grad_norm, s.mean_alpha[0], s.mean_alpha[1]
            );
        }
    }

    let trained =
        mean_reward_from_model(&model, &agents, &tasks, cfg.ablation, &mut env, 32, 0x5a5a)?;
    println!("trained accuracy: {trained:.4} ({:+.4} vs uniform)", trained - untrained);

    // where did the probability mass go? column 0 = edges into the expert's output
    let fp = topolab::eib::forward(&model, &agents, &tasks[0], cfg.ablation)?;
    println!("learned edge probabilities for {} (lower triangle):", tasks[0].id);
    for i in 1..6 {
        let row: Vec<String> = (0..i).map(|j| format!("{:.2}", fp.m_final.at(i, j))).collect();
        println!("  {i} ← [{}]", row.join(", "));
    }
    Ok(())
}
