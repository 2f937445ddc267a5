//! The enumeration oracle computes flip probabilities exactly by walking the
//! joint distribution of the paired (natural, counterfactual) dialogues, so
//! Monte Carlo estimates can be checked against ground truth.
//!
//!     cargo run --example exact_oracle

use topolab::agents::{AgentSpec, Intervention, InterventionMode, TaskItem};
use topolab::causal::{cape, exact_flip_probability, run_counterfactual_pair, FlipCondition};
use topolab::protocol::{Aggregation, RunConfig};
use topolab::rng::stream;
use topolab::topology::{build_named, Topology, TopologyKind};

fn main() -> topolab::Result<()> {
    let n = 3;
    let agents = AgentSpec::uniform(n, 0.7, 0.5)?;
    let task = TaskItem::new("oracle-0", "pick the marked option", 2, 0, None)?;
    let cfg = RunConfig::synthetic(2, Aggregation::MajorityVote, 0);
    let mut rng = stream(0, &[0x10e0]);
    let t = build_named(&TopologyKind::Chain, n, &mut rng)?;
    let iv = Intervention { target: 0, mode: InterventionMode::ForceError };

    let exact = exact_flip_probability(&t, &agents, &task, &cfg, &iv, FlipCondition::Any)?;

    let trials = 20_000u64;
    let mut flips = 0u32;
    for seed in 0..trials {
        let pair = run_counterfactual_pair(&t, &agents, &task, &cfg.with_seed(seed), Some(&iv))?;
        flips += u32::from(cape((&pair.0, &pair.1)));
    }
    let mc = flips as f64 / trials as f64;
    let se = (exact * (1.0 - exact) / trials as f64).sqrt();
    println!("P(flip | force agent 0 wrong, chain n=3, K=2)");
    println!("  exact       {exact:.6}");
    println!("  monte carlo {mc:.6} ± {:.6} (3 SE over {trials} paired runs)", 3.0 * se);
    assert!((mc - exact).abs() <= 3.0 * se + 1e-12);

    // conditioning splits the same joint distribution
    let on_correct =
        exact_flip_probability(&t, &agents, &task, &cfg, &iv, FlipCondition::OriginallyCorrect)?;
    let on_wrong =
        exact_flip_probability(&t, &agents, &task, &cfg, &iv, FlipCondition::OriginallyIncorrect)?;
    println!("  conditioned on an originally-correct run:   {on_correct:.6}");
    println!("  conditioned on an originally-incorrect run: {on_wrong:.6}");

    // d-separation: an agent with no path to the judge has zero effect
    let mut t2 = Topology::empty(3)?;
    t2.add_edge(2, 1)?; // judge 2 hears only agent 1
    let lonely = Intervention { target: 0, mode: InterventionMode::ForceError };
    let cfg_judge = RunConfig::synthetic(2, Aggregation::Judge(2), 0);
    let zero =
        exact_flip_probability(&t2, &agents, &task, &cfg_judge, &lonely, FlipCondition::Any)?;
    println!("disconnected agent, judge aggregation: flip probability = {zero}");
    Ok(())
}
