//! REINFORCE training of the mask generator, plus the frozen-batch surrogate
//! used for gradient verification, inference-time topology design, and
//! reward evaluation helpers.
//!
//! The per-batch objective is (1/B) Σ_q (1/S) Σ_s (φ_{q,s} − b) ·
//! log p(G_{q,s} | M_final(q)), with b the batch-mean reward. Freezing the
//! sampled topologies and weights makes this a deterministic scalar whose
//! exact gradient is the policy gradient — and checkable by finite
//! differences.

use serde::{Deserialize, Serialize};

use crate::agents::{AgentSpec, TaskItem};
use crate::eib::backward::{backward, ModelGrads};
use crate::eib::forward::{forward, Ablation};
use crate::eib::linalg::Mat;
use crate::eib::mask::{log_prob, sample_topology, EdgeProbs};
use crate::eib::model::EibModel;
use crate::error::{Error, Result};
use crate::protocol::{run_dialogue, RunConfig};
use crate::rng::{fnv1a64, mix64, stream};
use crate::topology::Topology;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Topologies sampled per query (S).
    pub samples_per_query: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Queries per policy-gradient step (B).
    pub queries_per_batch: usize,
    /// Passes over the task list.
    pub epochs: usize,
    pub seed: u64,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            samples_per_query: 4,
            learning_rate: 0.05,
            momentum: 0.9,
            queries_per_batch: 60,
            epochs: 1,
            seed: 0,
            ablation: Ablation::FullModel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_query == 0 || self.queries_per_batch == 0 || self.epochs == 0 {
            return Err(Error::InvalidParameter(
                "samples_per_query, queries_per_batch and epochs must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter("momentum must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One sampled rollout kept for the surrogate: the drawn topology and its
/// advantage weight (reward − baseline).
pub struct FrozenSample {
    pub topology: Topology,
    pub weight: f64,
    pub reward: f64,
}

pub struct FrozenQuery {
    pub task: TaskItem,
    pub samples: Vec<FrozenSample>,
    /// Gate output at freeze time (diagnostic only).
    pub alpha: [f64; 2],
}

/// A batch with all stochastic choices resolved: rollouts done, rewards and
/// baseline fixed. The surrogate loss/gradient below are deterministic
/// functions of the model given this.
pub struct FrozenBatch {
    pub agents: Vec<AgentSpec>,
    pub queries: Vec<FrozenQuery>,
    pub ablation: Ablation,
    pub baseline: f64,
}

/// Roll out a batch exactly as a training step would: per (query, sample),
/// draw a topology from the current mask and score it with `env`. `env` gets
/// (topology, task, derived seed) and must be deterministic per seed.
pub fn freeze_batch<E>(
    model: &EibModel,
    agents: &[AgentSpec],
    tasks: &[TaskItem],
    env: &mut E,
    cfg: &TrainConfig,
    step: u64,
) -> Result<FrozenBatch>
where
    E: FnMut(&Topology, &TaskItem, u64) -> Result<f64>,
{
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(Error::InvalidParameter("training batch has no queries".into()));
    }
    let mut queries = Vec::with_capacity(tasks.len());
    let mut reward_sum = 0.0;
    let mut reward_count = 0usize;
    for (qi, task) in tasks.iter().enumerate() {
        let fp = forward(model, agents, task, cfg.ablation)?;
        let mut samples = Vec::with_capacity(cfg.samples_per_query);
        for s in 0..cfg.samples_per_query {
            let mut trng = stream(cfg.seed, &[0x7e41, step, qi as u64, s as u64]);
            let topology = sample_topology(&fp.m_final, &mut trng);
            let run_seed = mix64(&[cfg.seed, 0x0e2f, step, qi as u64, s as u64]);
            let reward = env(&topology, task, run_seed)?;
            reward_sum += reward;
            reward_count += 1;
            samples.push(FrozenSample { topology, weight: 0.0, reward });
        }
        queries.push(FrozenQuery { task: task.clone(), samples, alpha: fp.alpha });
    }
    let baseline = reward_sum / reward_count as f64;
    for q in &mut queries {
        for s in &mut q.samples {
            s.weight = s.reward - baseline;
        }
    }
    Ok(FrozenBatch { agents: agents.to_vec(), queries, ablation: cfg.ablation, baseline })
}

/// (1/B) Σ_q (1/S) Σ_s weight · log_prob(M_final(q), G_s) — the quantity
/// whose gradient is the REINFORCE estimate.
pub fn surrogate_loss(model: &EibModel, batch: &FrozenBatch) -> Result<f64> {
    let mut total = 0.0;
    for fq in &batch.queries {
        let fp = forward(model, &batch.agents, &fq.task, batch.ablation)?;
        let per: f64 = fq
            .samples
            .iter()
            .map(|s| s.weight * log_prob(&fp.m_final, &s.topology))
            .sum();
        total += per / fq.samples.len() as f64;
    }
    Ok(total / batch.queries.len() as f64)
}

/// Exact gradient of `surrogate_loss` in the model's flat layout.
pub fn surrogate_grad(model: &EibModel, batch: &FrozenBatch) -> Result<ModelGrads> {
    let mut acc = ModelGrads::zeros_like(model);
    let b = batch.queries.len() as f64;
    for fq in &batch.queries {
        let fp = forward(model, &batch.agents, &fq.task, batch.ablation)?;
        let n = fp.m_final.n;
        let mut d_final = Mat::zeros(n, n);
        let s_count = fq.samples.len() as f64;
        for s in &fq.samples {
            if s.weight == 0.0 {
                continue;
            }
            for i in 1..n {
                for j in 0..i {
                    let m = fp.m_final.at(i, j);
                    let d = if s.topology.has_edge(i, j) { 1.0 / m } else { -1.0 / (1.0 - m) };
                    *d_final.at_mut(i, j) += s.weight / s_count * d;
                }
            }
        }
        let g = backward(model, &fp, &d_final);
        acc.add_scaled(&g, 1.0 / b);
    }
    Ok(acc)
}

/// Per-step diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct StepStats {
    pub mean_reward: f64,
    pub baseline: f64,
    pub grad_norm: f64,
    pub mean_alpha: [f64; 2],
}

/// One REINFORCE ascent step with momentum: roll out, differentiate the
/// frozen surrogate, update in place. `velocity` carries momentum across
/// steps and must start as zeros of `flat_len`.
pub fn policy_gradient_step<E>(
    model: &mut EibModel,
    agents: &[AgentSpec],
    tasks: &[TaskItem],
    env: &mut E,
    cfg: &TrainConfig,
    step: u64,
    velocity: &mut [f64],
) -> Result<StepStats>
where
    E: FnMut(&Topology, &TaskItem, u64) -> Result<f64>,
{
    if velocity.len() != model.flat_len() {
        return Err(Error::InvalidParameter(format!(
            "velocity buffer has length {}, model has {} parameters",
            velocity.len(),
            model.flat_len()
        )));
    }
    let batch = freeze_batch(model, agents, tasks, env, cfg, step)?;
    let grads = surrogate_grad(model, &batch)?;
    if !grads.is_finite() {
        return Err(Error::NonFiniteGradient(format!("at step {step}")));
    }
    let flat_grad = grads.to_flat();
    let mut params = model.to_flat();
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&flat_grad) {
        *v = cfg.momentum * *v + g;
        *p += cfg.learning_rate * *v;
    }
    model.assign_flat(&params)?;

    let mut alpha = [0.0f64; 2];
    for q in &batch.queries {
        alpha[0] += q.alpha[0];
        alpha[1] += q.alpha[1];
    }
    let nq = batch.queries.len() as f64;
    Ok(StepStats {
        mean_reward: batch.baseline,
        baseline: batch.baseline,
        grad_norm: grads.euclidean_norm(),
        mean_alpha: [alpha[0] / nq, alpha[1] / nq],
    })
}

pub struct TrainReport {
    pub steps: Vec<StepStats>,
}

impl TrainReport {
    pub fn first_mean_reward(&self) -> f64 {
        self.steps.first().map_or(0.0, |s| s.mean_reward)
    }
    pub fn last_mean_reward(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.mean_reward)
    }
}

/// Epoch loop: chunk the task list into batches of `queries_per_batch` and
/// take one policy-gradient step per chunk.
pub fn train<E>(
    model: &mut EibModel,
    agents: &[AgentSpec],
    tasks: &[TaskItem],
    env: &mut E,
    cfg: &TrainConfig,
) -> Result<TrainReport>
where
    E: FnMut(&Topology, &TaskItem, u64) -> Result<f64>,
{
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(Error::InvalidParameter("training needs at least one task".into()));
    }
    let mut velocity = vec![0.0; model.flat_len()];
    let mut steps = Vec::new();
    let mut step = 0u64;
    for _ in 0..cfg.epochs {
        for chunk in tasks.chunks(cfg.queries_per_batch) {
            let stats =
                policy_gradient_step(model, agents, chunk, env, cfg, step, &mut velocity)?;
            steps.push(stats);
            step += 1;
        }
    }
    Ok(TrainReport { steps })
}

/// Inference: one forward pass, one sampled topology, with the gate weights
/// and fused mask returned for inspection.
pub struct Design {
    pub topology: Topology,
    pub alpha: [f64; 2],
    pub m_final: EdgeProbs,
}

pub fn design_topology(
    model: &EibModel,
    agents: &[AgentSpec],
    task: &TaskItem,
    ablation: Ablation,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Design> {
    let fp = forward(model, agents, task, ablation)?;
    let topology = sample_topology(&fp.m_final, rng);
    Ok(Design { topology, alpha: fp.alpha, m_final: fp.m_final })
}

/// Reward closure for the synthetic backend: run one dialogue on the sampled
/// topology and return 1.0 iff the aggregated answer is correct.
pub fn synthetic_reward_env(
    agents: Vec<AgentSpec>,
    run: RunConfig,
) -> impl FnMut(&Topology, &TaskItem, u64) -> Result<f64> {
    move |t, task, seed| {
        let outcome = run_dialogue(t, &agents, task, &run.with_seed(seed), None)?;
        Ok(f64::from(outcome.correct))
    }
}

/// Mean reward of topologies sampled from a fixed mask. Seeds are derived
/// from (task id, sample index) so model and mask evaluations are paired.
pub fn mean_reward_from_probs<E>(
    m: &EdgeProbs,
    tasks: &[TaskItem],
    env: &mut E,
    samples_per_task: usize,
    seed: u64,
) -> Result<f64>
where
    E: FnMut(&Topology, &TaskItem, u64) -> Result<f64>,
{
    if tasks.is_empty() || samples_per_task == 0 {
        return Err(Error::InvalidParameter("evaluation needs tasks and samples".into()));
    }
    let mut total = 0.0;
    for task in tasks {
        let tid = fnv1a64(task.id.as_bytes());
        for s in 0..samples_per_task {
            let mut trng = stream(seed, &[0xe7a1, tid, s as u64]);
            let t = sample_topology(m, &mut trng);
            total += env(&t, task, mix64(&[seed, 0xe7a2, tid, s as u64]))?;
        }
    }
    Ok(total / (tasks.len() * samples_per_task) as f64)
}

/// Mean reward with the mask regenerated per query by the model — same seed
/// derivation as `mean_reward_from_probs` for paired comparisons.
pub fn mean_reward_from_model<E>(
    model: &EibModel,
    agents: &[AgentSpec],
    tasks: &[TaskItem],
    ablation: Ablation,
    env: &mut E,
    samples_per_task: usize,
    seed: u64,
) -> Result<f64>
where
    E: FnMut(&Topology, &TaskItem, u64) -> Result<f64>,
{
    if tasks.is_empty() || samples_per_task == 0 {
        return Err(Error::InvalidParameter("evaluation needs tasks and samples".into()));
    }
    let mut total = 0.0;
    for task in tasks {
        let fp = forward(model, agents, task, ablation)?;
        let tid = fnv1a64(task.id.as_bytes());
        for s in 0..samples_per_task {
            let mut trng = stream(seed, &[0xe7a1, tid, s as u64]);
            let t = sample_topology(&fp.m_final, &mut trng);
            total += env(&t, task, mix64(&[seed, 0xe7a2, tid, s as u64]))?;
        }
    }
    Ok(total / (tasks.len() * samples_per_task) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eib::model::{EncoderCfg, Hyper};
    use crate::protocol::Aggregation;

    fn small_model(seed: u64) -> EibModel {
        let hyper = Hyper { layers: 2, input_dim: 12, hidden: 5, gate_hidden: 4 };
        EibModel::init(hyper, EncoderCfg { dim: 12, salt: 5 }, seed).unwrap()
    }

    fn crew() -> Vec<AgentSpec> {
        vec![
            AgentSpec::new(0, "oracle consultant", 1.0, 0.8).unwrap(),
            AgentSpec::new(1, "generalist", 0.5, 0.8).unwrap(),
            AgentSpec::new(2, "generalist", 0.5, 0.8).unwrap(),
        ]
    }

    fn tasks(k: usize) -> Vec<TaskItem> {
        (0..6)
            .map(|i| {
                TaskItem::new(format!("t{i}"), format!("question number {i}"), k, i % k, None)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn equal_rewards_freeze_to_zero_update() {
        let mut model = small_model(1);
        let before = model.to_flat();
        let agents = crew();
        let tasks = tasks(4);
        let mut env = |_: &Topology, _: &TaskItem, _: u64| Ok(1.0);
        let cfg = TrainConfig { samples_per_query: 3, queries_per_batch: 6, ..Default::default() };
        let mut velocity = vec![0.0; model.flat_len()];
        let stats =
            policy_gradient_step(&mut model, &agents, &tasks, &mut env, &cfg, 0, &mut velocity)
                .unwrap();
        assert_eq!(stats.grad_norm, 0.0);
        assert_eq!(model.to_flat(), before);
        assert!(velocity.iter().all(|&v| v == 0.0));
        assert!((stats.mean_reward - 1.0).abs() < 1e-15);
    }

    #[test]
    fn surrogate_matches_finite_difference_through_the_whole_stack() {
        let mut model = small_model(2);
        let agents = crew();
        let tasks = tasks(4);
        let cfg = TrainConfig {
            samples_per_query: 2,
            queries_per_batch: 6,
            seed: 3,
            ..Default::default()
        };
        // varied rewards so weights are non-trivial
        let mut env = |t: &Topology, _: &TaskItem, seed: u64| {
            Ok(((t.edge_count() + seed as usize) % 3) as f64 * 0.5)
        };
        let batch = freeze_batch(&model, &agents, &tasks, &mut env, &cfg, 0).unwrap();
        let grad = surrogate_grad(&model, &batch).unwrap().to_flat();
        let flat = model.to_flat();
        let h = 1e-5;
        // spot-check a spread of coordinates instead of all of them
        let mut worst = 0.0f64;
        for idx in (0..flat.len()).step_by(17) {
            let mut p = flat.clone();
            p[idx] += h;
            model.assign_flat(&p).unwrap();
            let lp = surrogate_loss(&model, &batch).unwrap();
            p[idx] -= 2.0 * h;
            model.assign_flat(&p).unwrap();
            let lm = surrogate_loss(&model, &batch).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let a = grad[idx];
            let scale = fd.abs().max(a.abs());
            if scale > 1e-7 {
                worst = worst.max((fd - a).abs() / scale);
            }
        }
        model.assign_flat(&flat).unwrap();
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn training_is_deterministic() {
        let agents = crew();
        let tasks = tasks(4);
        let run = RunConfig::synthetic(2, Aggregation::MajorityVote, 0);
        let cfg = TrainConfig {
            samples_per_query: 2,
            queries_per_batch: 3,
            epochs: 2,
            seed: 9,
            learning_rate: 0.1,
            ..Default::default()
        };
        let go = || {
            let mut model = small_model(4);
            let mut env = synthetic_reward_env(agents.clone(), run.clone());
            train(&mut model, &agents, &tasks, &mut env, &cfg).unwrap();
            model.to_flat()
        };
        assert_eq!(go(), go());
    }

    #[test]
    fn design_is_deterministic_and_reports_diagnostics() {
        let model = small_model(5);
        let agents = crew();
        let task = &tasks(4)[0];
        let a = design_topology(&model, &agents, task, Ablation::FullModel, &mut stream(7, &[1]))
            .unwrap();
        let b = design_topology(&model, &agents, task, Ablation::FullModel, &mut stream(7, &[1]))
            .unwrap();
        assert_eq!(a.topology.edges(), b.topology.edges());
        assert!((a.alpha[0] + a.alpha[1] - 1.0).abs() < 1e-12);
        assert_eq!(a.m_final, b.m_final);
        a.topology.validate().unwrap();
    }

    #[test]
    fn zero_weight_dense_only_design_is_the_uniform_mask() {
        let mut model = small_model(6);
        for lp in &mut model.dense {
            lp.w.data.iter_mut().for_each(|v| *v = 0.0);
            lp.b.iter_mut().for_each(|v| *v = 0.0);
        }
        let agents = crew();
        let task = &tasks(4)[0];
        let d = design_topology(&model, &agents, task, Ablation::DenseOnly, &mut stream(7, &[2]))
            .unwrap();
        for i in 1..3 {
            for j in 0..i {
                assert_eq!(d.m_final.at(i, j), 0.5);
            }
        }
        assert_eq!(d.alpha, [1.0, 0.0]);
    }

    #[test]
    fn reward_learning_moves_the_mask_toward_the_expert() {
        // Tiny smoke test: rewarding edges out of agent 0 must raise the
        // fused probability of (0→1) relative to where it started.
        let mut model = small_model(7);
        let agents = crew();
        let tasks = tasks(2);
        let task0 = tasks[0].clone();
        let before = forward(&model, &agents, &task0, Ablation::FullModel).unwrap().m_final;
        let mut env =
            |t: &Topology, _: &TaskItem, _: u64| Ok(if t.has_edge(1, 0) { 1.0 } else { 0.0 });
        let cfg = TrainConfig {
            samples_per_query: 4,
            queries_per_batch: 6,
            epochs: 25,
            learning_rate: 0.3,
            seed: 1,
            ..Default::default()
        };
        train(&mut model, &agents, &tasks, &mut env, &cfg).unwrap();
        let after = forward(&model, &agents, &task0, Ablation::FullModel).unwrap().m_final;
        assert!(
            after.at(1, 0) > before.at(1, 0) + 0.1,
            "p(0→1) did not rise: {} → {}",
            before.at(1, 0),
            after.at(1, 0)
        );
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cfg = TrainConfig { learning_rate: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig { momentum: 1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig { samples_per_query: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn paired_evaluation_uses_matching_seeds() {
        // A model whose fused mask equals the uniform mask must score
        // identically to EdgeProbs::uniform under paired evaluation.
        let mut model = small_model(8);
        let flat = vec![0.0; model.flat_len()];
        model.assign_flat(&flat).unwrap();
        let agents = crew();
        let tasks = tasks(2);
        let run = RunConfig::synthetic(2, Aggregation::MajorityVote, 0);
        let mut env1 = synthetic_reward_env(agents.clone(), run.clone());
        let mut env2 = synthetic_reward_env(agents.clone(), run);
        let a = mean_reward_from_model(
            &model,
            &agents,
            &tasks,
            Ablation::FullModel,
            &mut env1,
            5,
            13,
        )
        .unwrap();
        let b =
            mean_reward_from_probs(&EdgeProbs::uniform(3), &tasks, &mut env2, 5, 13).unwrap();
        assert_eq!(a, b);
    }
}
