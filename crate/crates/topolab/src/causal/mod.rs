//! Counterfactual influence metrics and the propagation experiment drivers.
//!
//! CAPE is the indicator that forcing one agent's output flips the system
//! answer's correctness; both runs of a pair share common random numbers, so
//! the flip is a deterministic bit per (task, seed, target). TCTE averages
//! CAPE over agents with 1/√degree weights, downweighting agents whose raw
//! reach is an artifact of sitting on many edges. The sweep drivers walk a
//! Full↔Chain interpolation and report TCTE and accuracy per density step;
//! [`exact`] provides a brute-force enumeration oracle for small instances.

pub mod exact;

pub use exact::{exact_flip_probability, FlipCondition};

use serde::{Deserialize, Serialize};

use crate::agents::{AgentSpec, Intervention, InterventionMode, TaskItem};
use crate::error::{Error, Result};
use crate::protocol::{run_dialogue, Outcome, RunConfig};
use crate::rng::{fnv1a64, mix64};
use crate::topology::{SweepDirection, SweepPath, Topology, TopologyKind};

/// One counterfactual pair's verdict for one agent.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CapeRecord {
    pub agent: usize,
    pub flipped: u8,
    pub y_orig: u8,
    pub y_cf: u8,
}

/// One sweep step: the topology's sparsity, its degree-weighted flip mass,
/// and the un-intervened accuracy on the sweep pool.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TcteRecord {
    pub topology_sparsity: f64,
    pub tcte: f64,
    pub accuracy: f64,
    pub n_queries: usize,
}

/// Which propagation question a sweep answers.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationMode {
    /// Forced errors on originally-correct queries (sparsify axis).
    ErrorPropagation,
    /// Forced correct answers on originally-incorrect queries (densify axis).
    InsightPropagation,
}

impl PropagationMode {
    pub fn csv_tag(self) -> &'static str {
        match self {
            PropagationMode::ErrorPropagation => "error",
            PropagationMode::InsightPropagation => "insight",
        }
    }

    fn intervention_mode(self) -> InterventionMode {
        match self {
            PropagationMode::ErrorPropagation => InterventionMode::ForceError,
            PropagationMode::InsightPropagation => InterventionMode::ForceAnswer,
        }
    }
}

/// The full result of one sweep, rows in path order (sparsity monotone).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepReport {
    pub direction: PropagationMode,
    pub rows: Vec<TcteRecord>,
}

/// Tuning knobs the sweep drivers accept beyond the run configuration.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Re-filter the pool for original (in)correctness at every topology step
    /// instead of trusting the endpoint filtering. Off by default.
    pub refilter_per_step: bool,
}

/// Derive the per-task dialogue seed from the master seed and the task id.
pub fn task_seed(master: u64, task: &TaskItem) -> u64 {
    mix64(&[master, fnv1a64(task.id.as_bytes())])
}

/// Run the natural and intervened dialogues under shared random streams.
///
/// `iv = None` is the null intervention: the counterfactual run replays the
/// natural one exactly, certifying the common-random-numbers pairing (and
/// making null-intervention TCTE zero identically).
pub fn run_counterfactual_pair(
    t: &Topology,
    agents: &[AgentSpec],
    task: &TaskItem,
    cfg: &RunConfig,
    iv: Option<&Intervention>,
) -> Result<(Outcome, Outcome)> {
    let orig = run_dialogue(t, agents, task, cfg, None)?;
    let cf = run_dialogue(t, agents, task, cfg, iv)?;
    Ok((orig, cf))
}

/// 1 iff the pair's correctness bits differ.
pub fn cape(pair: (&Outcome, &Outcome)) -> u8 {
    u8::from(pair.0.correct != pair.1.correct)
}

/// Degree-weighted mean flip indicator: (1/N) Σ CAPE_i / √max(d_i, 1).
pub fn tcte(capes: &[(usize, u8)], t: &Topology) -> Result<f64> {
    let n = t.n();
    let mut seen = vec![false; n];
    let mut total = 0.0;
    for &(agent, flipped) in capes {
        if agent >= n {
            return Err(Error::InvalidParameter(format!(
                "cape record for agent {agent} out of range (n={n})"
            )));
        }
        if seen[agent] {
            return Err(Error::InvalidParameter(format!(
                "duplicate cape record for agent {agent}"
            )));
        }
        seen[agent] = true;
        let d = t.degree(agent)?.max(1);
        total += flipped as f64 / (d as f64).sqrt();
    }
    if !seen.iter().all(|&s| s) {
        return Err(Error::InvalidParameter(
            "tcte needs exactly one cape record per agent".into(),
        ));
    }
    Ok(total / n as f64)
}

/// Per-query TCTE for every agent as target, plus the natural correctness bit.
fn tcte_for_task(
    t: &Topology,
    agents: &[AgentSpec],
    task: &TaskItem,
    cfg: &RunConfig,
    mode: PropagationMode,
) -> Result<(f64, u8)> {
    let natural = run_dialogue(t, agents, task, cfg, None)?;
    let mut records = Vec::with_capacity(t.n());
    for target in 0..t.n() {
        let iv = Intervention { target, mode: mode.intervention_mode() };
        let cf = run_dialogue(t, agents, task, cfg, Some(&iv))?;
        records.push((target, cape((&natural, &cf))));
    }
    Ok((tcte(&records, t)?, natural.correct))
}

fn sweep(
    agents: &[AgentSpec],
    tasks: &[TaskItem],
    cfg: &RunConfig,
    path: &SweepPath,
    mode: PropagationMode,
    opts: SweepOptions,
) -> Result<SweepReport> {
    if tasks.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{} sweep needs a nonempty task pool",
            mode.csv_tag()
        )));
    }
    let want_correct = mode == PropagationMode::ErrorPropagation;
    let mut rows = Vec::with_capacity(path.steps.len());
    for step in &path.steps {
        let mut tcte_sum = 0.0;
        let mut correct_sum = 0usize;
        let mut used = 0usize;
        for task in tasks {
            let cfg_task = cfg.with_seed(task_seed(cfg.seed, task));
            if opts.refilter_per_step {
                let natural = run_dialogue(step, agents, task, &cfg_task, None)?;
                if (natural.correct == 1) != want_correct {
                    continue;
                }
            }
            let (value, y_orig) = tcte_for_task(step, agents, task, &cfg_task, mode)?;
            tcte_sum += value;
            correct_sum += y_orig as usize;
            used += 1;
        }
        if used == 0 {
            return Err(Error::Shortfall(format!(
                "no {} tasks left at sparsity {:.4} after per-step re-filtering",
                if want_correct { "originally-correct" } else { "originally-incorrect" },
                step.sparsity()?
            )));
        }
        rows.push(TcteRecord {
            topology_sparsity: step.sparsity().unwrap_or(0.0),
            tcte: tcte_sum / used as f64,
            accuracy: correct_sum as f64 / used as f64,
            n_queries: used,
        });
    }
    Ok(SweepReport { direction: mode, rows })
}

/// Error-propagation sweep: ForceError interventions over originally-correct
/// tasks along a Full→Chain path.
pub fn sweep_error_propagation(
    agents: &[AgentSpec],
    tasks_correct: &[TaskItem],
    cfg: &RunConfig,
    path: &SweepPath,
    opts: SweepOptions,
) -> Result<SweepReport> {
    if path.direction != SweepDirection::Sparsify {
        return Err(Error::InvalidParameter(
            "error-propagation sweeps walk the sparsify path".into(),
        ));
    }
    sweep(agents, tasks_correct, cfg, path, PropagationMode::ErrorPropagation, opts)
}

/// Insight-propagation sweep: ForceAnswer interventions over
/// originally-incorrect tasks along a Chain→Full path.
pub fn sweep_insight_propagation(
    agents: &[AgentSpec],
    tasks_incorrect: &[TaskItem],
    cfg: &RunConfig,
    path: &SweepPath,
    opts: SweepOptions,
) -> Result<SweepReport> {
    if path.direction != SweepDirection::Densify {
        return Err(Error::InvalidParameter(
            "insight-propagation sweeps walk the densify path".into(),
        ));
    }
    sweep(agents, tasks_incorrect, cfg, path, PropagationMode::InsightPropagation, opts)
}

/// Un-intervened accuracy per path step on an unfiltered pool. This is the
/// curve where an interior sparsity optimum would show up; filtered pools pin
/// one endpoint at accuracy 1 or 0 by construction.
pub fn accuracy_profile(
    agents: &[AgentSpec],
    tasks: &[TaskItem],
    cfg: &RunConfig,
    path: &SweepPath,
) -> Result<Vec<TcteRecord>> {
    if tasks.is_empty() {
        return Err(Error::InvalidParameter("accuracy profile needs tasks".into()));
    }
    let mut rows = Vec::with_capacity(path.steps.len());
    for step in &path.steps {
        let mut correct_sum = 0usize;
        for task in tasks {
            let cfg_task = cfg.with_seed(task_seed(cfg.seed, task));
            correct_sum += run_dialogue(step, agents, task, &cfg_task, None)?.correct as usize;
        }
        rows.push(TcteRecord {
            topology_sparsity: step.sparsity()?,
            tcte: 0.0,
            accuracy: correct_sum as f64 / tasks.len() as f64,
            n_queries: tasks.len(),
        });
    }
    Ok(rows)
}

/// One row of the named-topology comparison table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BaselineRow {
    pub kind: String,
    pub error_tcte: f64,
    pub insight_tcte: f64,
    pub accuracy: f64,
}

/// Evaluate both intervention modes once per named topology.
///
/// `error_tcte` averages over the originally-correct pool, `insight_tcte over
/// the originally-incorrect pool, and `accuracy` is the natural accuracy over
/// both pools together.
pub fn baseline_suite(
    agents: &[AgentSpec],
    tasks_correct: &[TaskItem],
    tasks_incorrect: &[TaskItem],
    cfg: &RunConfig,
    kinds: &[TopologyKind],
) -> Result<Vec<BaselineRow>> {
    if kinds.is_empty() {
        return Err(Error::InvalidParameter("baseline suite needs at least one topology".into()));
    }
    let n = agents.len();
    let mut rows = Vec::with_capacity(kinds.len());
    for (pos, kind) in kinds.iter().enumerate() {
        let mut rng = crate::rng::stream(cfg.seed, &[0xba5e, pos as u64]);
        let t = crate::topology::build_named(kind, n, &mut rng)?;
        let mut error_sum = 0.0;
        let mut insight_sum = 0.0;
        let mut correct = 0usize;
        for task in tasks_correct {
            let cfg_task = cfg.with_seed(task_seed(cfg.seed, task));
            let (v, y) = tcte_for_task(&t, agents, task, &cfg_task, PropagationMode::ErrorPropagation)?;
            error_sum += v;
            correct += y as usize;
        }
        for task in tasks_incorrect {
            let cfg_task = cfg.with_seed(task_seed(cfg.seed, task));
            let (v, y) =
                tcte_for_task(&t, agents, task, &cfg_task, PropagationMode::InsightPropagation)?;
            insight_sum += v;
            correct += y as usize;
        }
        let total = tasks_correct.len() + tasks_incorrect.len();
        rows.push(BaselineRow {
            kind: kind.to_string(),
            error_tcte: if tasks_correct.is_empty() { 0.0 } else { error_sum / tasks_correct.len() as f64 },
            insight_tcte: if tasks_incorrect.is_empty() {
                0.0
            } else {
                insight_sum / tasks_incorrect.len() as f64
            },
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        });
    }
    Ok(rows)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "spearman needs paired samples");
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mean) * (b - mean);
        dx += (a - mean).powi(2);
        dy += (b - mean).powi(2);
    }
    if dx == 0.0 || dy == 0.0 {
        return 0.0;
    }
    num / (dx * dy).sqrt()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &slot in &idx[i..=j] {
            out[slot] = avg;
        }
        i = j + 1;
    }
    out
}
