//! The K-round communication protocol and answer aggregation.
//!
//! Each round walks the agents in topological order; an agent sees the
//! current-round answers of its in-neighbors (within-round freshness) plus its
//! own previous-round answer from round 2 on (self-persistence). Randomness is
//! keyed by `(seed, agent, round)`, so a counterfactual run that forces one
//! agent's output leaves every other agent's draws untouched — the common
//! random numbers that make CAPE a deterministic bit per (task, seed).

use serde::{Deserialize, Serialize};

use crate::agents::{
    answer_text, apply_intervention, compose_prompt, parse_answer_text, synthetic_respond,
    AgentSpec, ForcedOutput, Intervention, Prompt, TaskItem,
};
use crate::error::{Error, Result};
use crate::llm::{llm_respond, LlmEndpoint};
use crate::rng::stream;
use crate::topology::Topology;

/// How the round-K answers become the system answer.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Most frequent answer; ties go to the smallest answer index.
    MajorityVote,
    /// The answer of the last agent in topological order.
    LastAgent,
    /// The answer of a designated agent.
    Judge(usize),
}

/// Who produces the agent outputs.
#[derive(Clone, Debug)]
pub enum Backend {
    Synthetic,
    Llm(LlmEndpoint),
}

/// Everything a single dialogue needs besides the topology, agents, and task.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub rounds: usize,
    pub aggregation: Aggregation,
    pub seed: u64,
    pub backend: Backend,
    /// Keep the composed prompts in the transcript (off in bulk sweeps).
    pub store_prompts: bool,
}

impl RunConfig {
    pub fn synthetic(rounds: usize, aggregation: Aggregation, seed: u64) -> Self {
        RunConfig { rounds, aggregation, seed, backend: Backend::Synthetic, store_prompts: false }
    }

    /// Same configuration, different seed — the usual per-task derivation.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.seed = seed;
        cfg
    }
}

/// Per-round, per-agent record of one dialogue.
#[derive(Clone, PartialEq, Debug)]
pub struct Transcript {
    /// `answers[t][i]`: agent i's answer index in round t+1 (K×N).
    pub answers: Vec<Vec<usize>>,
    /// Raw reply texts, kept for the LLM backend only.
    pub answer_texts: Option<Vec<Vec<String>>>,
    /// Composed prompts, kept when `store_prompts` is set.
    pub prompts: Option<Vec<Vec<Prompt>>>,
    /// Total characters of user-visible prompt text — the token-cost proxy.
    pub message_chars: usize,
}

/// A finished dialogue: the aggregated answer, its correctness, and the log.
#[derive(Clone, PartialEq, Debug)]
pub struct Outcome {
    pub final_answer: usize,
    pub correct: u8,
    pub transcript: Transcript,
}

/// Aggregate round-K answers into the system answer.
pub fn aggregate(answers: &[usize], mode: &Aggregation, task: &TaskItem) -> Result<usize> {
    if answers.is_empty() {
        return Err(Error::InvalidParameter("cannot aggregate zero answers".into()));
    }
    let k = task.alphabet_size;
    if let Some(&bad) = answers.iter().find(|&&a| a >= k) {
        return Err(Error::InvalidParameter(format!(
            "answer {bad} out of range for alphabet size {k}"
        )));
    }
    match mode {
        Aggregation::MajorityVote => {
            let mut counts = vec![0usize; k];
            for &a in answers {
                counts[a] += 1;
            }
            let mut best = 0usize;
            for a in 1..k {
                if counts[a] > counts[best] {
                    best = a;
                }
            }
            Ok(best)
        }
        Aggregation::LastAgent => Ok(*answers.last().unwrap()),
        Aggregation::Judge(j) => answers.get(*j).copied().ok_or_else(|| {
            Error::InvalidParameter(format!("judge index {j} out of range for {} agents", answers.len()))
        }),
    }
}

/// Run one dialogue, optionally under an intervention.
pub fn run_dialogue(
    t: &Topology,
    agents: &[AgentSpec],
    task: &TaskItem,
    cfg: &RunConfig,
    iv: Option<&Intervention>,
) -> Result<Outcome> {
    let n = t.n();
    if agents.len() != n {
        return Err(Error::Config(format!(
            "topology has {n} agents but {} specs were supplied",
            agents.len()
        )));
    }
    for (i, spec) in agents.iter().enumerate() {
        if spec.index != i {
            return Err(Error::Config(format!(
                "agent at position {i} carries index {}",
                spec.index
            )));
        }
    }
    if cfg.rounds < 1 {
        return Err(Error::Config("a dialogue needs at least one round".into()));
    }
    if let Aggregation::Judge(j) = cfg.aggregation {
        if j >= n {
            return Err(Error::Config(format!("judge index {j} out of range for n={n}")));
        }
    }
    let forced: Option<(usize, ForcedOutput)> = match iv {
        Some(iv) => {
            if iv.target >= n {
                return Err(Error::InvalidParameter(format!(
                    "intervention target {} out of range for n={n}",
                    iv.target
                )));
            }
            Some((iv.target, apply_intervention(iv, task)?))
        }
        None => None,
    };

    let order = t.topological_sort()?;
    let k = task.alphabet_size;
    let is_llm = matches!(cfg.backend, Backend::Llm(_));

    let mut prev_answers: Vec<usize> = vec![0; n];
    let mut answers: Vec<Vec<usize>> = Vec::with_capacity(cfg.rounds);
    let mut texts_log: Vec<Vec<String>> = Vec::new();
    let mut prompts_log: Vec<Vec<Prompt>> = Vec::new();
    let mut message_chars = 0usize;

    for round in 1..=cfg.rounds {
        let mut cur_answers: Vec<Option<usize>> = vec![None; n];
        let mut cur_texts: Vec<String> = vec![String::new(); n];
        let mut cur_prompts: Vec<Prompt> = Vec::new();
        for &i in &order {
            let neighbor_msgs: Vec<(usize, String)> = t
                .in_neighbors(i)
                .iter()
                .map(|&j| {
                    let text = cur_texts[j].clone();
                    debug_assert!(cur_answers[j].is_some(), "in-neighbor ran after receiver");
                    (j, text)
                })
                .collect();
            let prompt = compose_prompt(&agents[i], task, &neighbor_msgs, round);
            message_chars += prompt.user_text.chars().count();

            let (answer, text) = match &forced {
                Some((target, out)) if *target == i => match out {
                    ForcedOutput::Answer(a) => (*a, answer_text(*a)),
                    ForcedOutput::Text(s) => {
                        if !is_llm {
                            return Err(Error::Config(
                                "text interventions require the LLM backend".into(),
                            ));
                        }
                        let a = parse_answer_text(s, k).ok_or_else(|| {
                            Error::Validation(
                                "custom intervention text carries no answer letter".into(),
                            )
                        })?;
                        (a, s.clone())
                    }
                },
                _ => match &cfg.backend {
                    Backend::Synthetic => {
                        let mut incoming: Vec<usize> = t
                            .in_neighbors(i)
                            .iter()
                            .map(|&j| cur_answers[j].expect("topological order"))
                            .collect();
                        if round >= 2 {
                            incoming.push(prev_answers[i]);
                        }
                        let mut rng = stream(cfg.seed, &[i as u64, round as u64]);
                        let a = synthetic_respond(&agents[i], task, &incoming, &mut rng)?;
                        (a, answer_text(a))
                    }
                    Backend::Llm(ep) => {
                        let reply = llm_respond(&agents[i], &prompt, ep)?;
                        let a = parse_answer_text(&reply, k).ok_or_else(|| {
                            Error::MalformedResponse(format!(
                                "agent {i} reply carries no answer letter: {reply:?}"
                            ))
                        })?;
                        (a, reply)
                    }
                },
            };
            cur_answers[i] = Some(answer);
            cur_texts[i] = text;
            if cfg.store_prompts {
                cur_prompts.push(prompt);
            }
        }
        let row: Vec<usize> = cur_answers.into_iter().map(|a| a.unwrap()).collect();
        prev_answers = row.clone();
        answers.push(row);
        if is_llm {
            texts_log.push(cur_texts);
        }
        if cfg.store_prompts {
            prompts_log.push(cur_prompts);
        }
    }
    let final_answer = aggregate(&prev_answers, &cfg.aggregation, task)?;
    let correct = u8::from(final_answer == task.gold);
    Ok(Outcome {
        final_answer,
        correct,
        transcript: Transcript {
            answers,
            answer_texts: if is_llm { Some(texts_log) } else { None },
            prompts: if cfg.store_prompts { Some(prompts_log) } else { None },
            message_chars,
        },
    })
}

/// Wire form of a finished dialogue:
/// `{"task_id", "seed", "answers": [[…]×K], "final", "correct", "message_chars"}`.
pub fn transcript_export(task_id: &str, seed: u64, outcome: &Outcome) -> serde_json::Value {
    serde_json::json!({
        "task_id": task_id,
        "seed": seed,
        "answers": outcome.transcript.answers,
        "final": outcome.final_answer,
        "correct": outcome.correct,
        "message_chars": outcome.transcript.message_chars,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{CustomOutput, InterventionMode};
    use crate::rng::{mix64, stream as rstream, u01};
    use crate::topology::{build_named, sparsify_path, TopologyKind};

    fn rng0() -> rand_chacha::ChaCha8Rng {
        rstream(0, &[99])
    }

    fn task4() -> TaskItem {
        TaskItem::new("t0", "Pick one.", 4, 2, None).unwrap()
    }

    #[test]
    fn aggregate_reference_cases() {
        let t = task4();
        assert_eq!(aggregate(&[2, 2, 0], &Aggregation::MajorityVote, &t).unwrap(), 2);
        assert_eq!(aggregate(&[0, 1], &Aggregation::MajorityVote, &t).unwrap(), 0);
        assert_eq!(aggregate(&[3, 1, 2], &Aggregation::Judge(1), &t).unwrap(), 1);
        assert_eq!(aggregate(&[3, 1, 2], &Aggregation::LastAgent, &t).unwrap(), 2);
        assert!(aggregate(&[], &Aggregation::MajorityVote, &t).is_err());
        assert!(aggregate(&[9], &Aggregation::MajorityVote, &t).is_err());
    }

    #[test]
    fn two_agent_chain_copies_gold() {
        // c₀=1 ⇒ agent 0 emits gold; λ₁=1 ⇒ agent 1 copies it; LastAgent sees gold.
        let t = build_named(&TopologyKind::Chain, 2, &mut rng0()).unwrap();
        let agents = vec![
            AgentSpec::new(0, "expert", 1.0, 0.0).unwrap(),
            AgentSpec::new(1, "echo", 0.0, 1.0).unwrap(),
        ];
        let cfg = RunConfig::synthetic(1, Aggregation::LastAgent, 7);
        let out = run_dialogue(&t, &agents, &task4(), &cfg, None).unwrap();
        assert_eq!(out.final_answer, 2);
        assert_eq!(out.correct, 1);

        let iv = Intervention { target: 0, mode: InterventionMode::ForceError };
        let out = run_dialogue(&t, &agents, &task4(), &cfg, Some(&iv)).unwrap();
        assert_eq!(out.correct, 0);
        assert_eq!(out.final_answer, 3); // (2+1) mod 4
    }

    #[test]
    fn determinism_same_seed_same_outcome() {
        let t = build_named(&TopologyKind::Full, 5, &mut rng0()).unwrap();
        let agents = AgentSpec::uniform(5, 0.8, 0.6).unwrap();
        let cfg = RunConfig::synthetic(3, Aggregation::MajorityVote, 123);
        let a = run_dialogue(&t, &agents, &task4(), &cfg, None).unwrap();
        let b = run_dialogue(&t, &agents, &task4(), &cfg, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn crn_pairing_isolates_the_target() {
        // Intervening on the last agent (no outgoing edges) leaves every other
        // agent's answers bit-identical in every round.
        let t = build_named(&TopologyKind::Full, 5, &mut rng0()).unwrap();
        let agents = AgentSpec::uniform(5, 0.7, 0.8).unwrap();
        let cfg = RunConfig::synthetic(3, Aggregation::MajorityVote, 55);
        let natural = run_dialogue(&t, &agents, &task4(), &cfg, None).unwrap();
        let iv = Intervention { target: 4, mode: InterventionMode::ForceError };
        let forced = run_dialogue(&t, &agents, &task4(), &cfg, Some(&iv)).unwrap();
        for round in 0..3 {
            for agent in 0..4 {
                assert_eq!(
                    natural.transcript.answers[round][agent],
                    forced.transcript.answers[round][agent]
                );
            }
            assert_eq!(forced.transcript.answers[round][4], 3);
        }
    }

    #[test]
    fn null_custom_matches_natural_in_deterministic_setup() {
        // c=1, λ=0 agents answer gold every round, so forcing gold on any
        // target replays the natural dialogue exactly.
        let t = build_named(&TopologyKind::Full, 4, &mut rng0()).unwrap();
        let agents = AgentSpec::uniform(4, 1.0, 0.0).unwrap();
        let cfg = RunConfig::synthetic(2, Aggregation::MajorityVote, 9);
        let natural = run_dialogue(&t, &agents, &task4(), &cfg, None).unwrap();
        for target in 0..4 {
            let iv = Intervention {
                target,
                mode: InterventionMode::Custom(CustomOutput::Answer(2)),
            };
            let cf = run_dialogue(&t, &agents, &task4(), &cfg, Some(&iv)).unwrap();
            assert_eq!(natural, cf);
        }
    }

    #[test]
    fn within_round_freshness_and_self_persistence() {
        // λ=1 chain with a stubborn head: in round 1 the whole chain copies the
        // head's current answer (within-round freshness); with K=2 and
        // self-persistence it stays locked.
        let n = 4;
        let t = build_named(&TopologyKind::Chain, n, &mut rng0()).unwrap();
        let mut agents = vec![AgentSpec::new(0, "head", 1.0, 0.0).unwrap()];
        for i in 1..n {
            agents.push(AgentSpec::new(i, "echo", 0.0, 1.0).unwrap());
        }
        let cfg = RunConfig::synthetic(2, Aggregation::MajorityVote, 31);
        let out = run_dialogue(&t, &agents, &task4(), &cfg, None).unwrap();
        for round in 0..2 {
            assert_eq!(out.transcript.answers[round], vec![2, 2, 2, 2]);
        }
    }

    #[test]
    fn independent_prior_majority_matches_binomial() {
        // Empty topology, K=1: five independent draws with p(gold)=c; majority
        // over k=2 answers is a binomial event with an exact probability.
        let n = 5;
        let c: f64 = 0.7;
        let t = Topology::empty(n).unwrap();
        let agents = AgentSpec::uniform(n, c, 1.0).unwrap();
        let task = TaskItem::new("b", "q", 2, 0, None).unwrap();
        let trials = 10_000u64;
        let mut correct = 0u64;
        for s in 0..trials {
            let cfg = RunConfig::synthetic(1, Aggregation::MajorityVote, mix64(&[s, 77]));
            correct += run_dialogue(&t, &agents, &task, &cfg, None).unwrap().correct as u64;
        }
        let p_majority: f64 = (3..=5)
            .map(|m| {
                let comb = [1.0, 5.0, 10.0, 10.0, 5.0, 1.0][m];
                comb * c.powi(m as i32) * (1.0 - c).powi((5 - m) as i32)
            })
            .sum();
        let freq = correct as f64 / trials as f64;
        let se = (p_majority * (1.0 - p_majority) / trials as f64).sqrt();
        assert!(
            (freq - p_majority).abs() <= 3.0 * se,
            "freq {freq} vs analytic {p_majority} (se {se})"
        );
    }

    #[test]
    fn message_chars_monotone_in_edges() {
        let agents = AgentSpec::uniform(6, 0.9, 0.7).unwrap();
        let cfg = RunConfig::synthetic(3, Aggregation::MajorityVote, 5);
        let path = sparsify_path(6, &mut rng0()).unwrap();
        let mut last = usize::MAX;
        for step in &path.steps {
            let out = run_dialogue(step, &agents, &task4(), &cfg, None).unwrap();
            assert!(out.transcript.message_chars <= last);
            last = out.transcript.message_chars;
        }
    }

    #[test]
    fn prompt_log_only_on_request() {
        let t = build_named(&TopologyKind::Chain, 3, &mut rng0()).unwrap();
        let agents = AgentSpec::uniform(3, 0.9, 0.5).unwrap();
        let mut cfg = RunConfig::synthetic(2, Aggregation::MajorityVote, 1);
        let out = run_dialogue(&t, &agents, &task4(), &cfg, None).unwrap();
        assert!(out.transcript.prompts.is_none());
        cfg.store_prompts = true;
        let out = run_dialogue(&t, &agents, &task4(), &cfg, None).unwrap();
        let prompts = out.transcript.prompts.unwrap();
        assert_eq!(prompts.len(), 2);
        assert_eq!(prompts[0].len(), 3);
        assert!(prompts[0][1].user_text.starts_with("Pick one."));
    }

    #[test]
    fn config_errors() {
        let t = build_named(&TopologyKind::Chain, 3, &mut rng0()).unwrap();
        let agents = AgentSpec::uniform(2, 0.9, 0.5).unwrap();
        let cfg = RunConfig::synthetic(3, Aggregation::MajorityVote, 1);
        assert!(run_dialogue(&t, &agents, &task4(), &cfg, None).is_err());

        let agents = AgentSpec::uniform(3, 0.9, 0.5).unwrap();
        let cfg = RunConfig::synthetic(3, Aggregation::Judge(5), 1);
        assert!(run_dialogue(&t, &agents, &task4(), &cfg, None).is_err());

        let cfg = RunConfig::synthetic(3, Aggregation::MajorityVote, 1);
        let iv = Intervention { target: 9, mode: InterventionMode::ForceError };
        assert!(run_dialogue(&t, &agents, &task4(), &cfg, Some(&iv)).is_err());
    }

    #[test]
    fn transcript_export_shape() {
        let t = build_named(&TopologyKind::Chain, 2, &mut rng0()).unwrap();
        let agents = AgentSpec::uniform(2, 0.9, 0.5).unwrap();
        let cfg = RunConfig::synthetic(2, Aggregation::MajorityVote, 3);
        let out = run_dialogue(&t, &agents, &task4(), &cfg, None).unwrap();
        let v = transcript_export("t0", 3, &out);
        assert_eq!(v["task_id"], "t0");
        assert_eq!(v["seed"], 3);
        assert_eq!(v["answers"].as_array().unwrap().len(), 2);
        assert!(v["message_chars"].as_u64().unwrap() > 0);
    }

    #[test]
    fn streams_differ_across_agents_and_rounds() {
        let a = u01(&mut rstream(1, &[0, 1]));
        let b = u01(&mut rstream(1, &[1, 1]));
        let c = u01(&mut rstream(1, &[0, 2]));
        assert_ne!(a, b);
        assert_ne!(a, c);
    }
}
