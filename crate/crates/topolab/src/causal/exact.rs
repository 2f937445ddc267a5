//! Brute-force enumeration oracle for counterfactual flip probabilities.
//!
//! The Monte Carlo pipeline pairs the natural and intervened runs through
//! common random numbers: agent `i` in round `t` pushes one shared uniform
//! through the inverse CDF of whichever answer distribution its arm produced.
//! This oracle enumerates that *joint* process exactly. Per (agent, round)
//! cell the shared uniform induces the comonotone coupling of the two answer
//! distributions — at most 2k−1 atoms from merging the two CDF partitions —
//! and cells are independent across agents and rounds, so the joint chain can
//! be expanded round by round in topological order.
//!
//! Cost scales with the number of joint assignments, (k²)^n; the guard
//! `k^n ≤ 4096, K ≤ 3` admits instances up to ~16.7M joint states (≈134 MB
//! per distribution vector) in the worst case, far beyond anything the test
//! grid (n ≤ 4, k = 2) touches.

use crate::agents::{
    apply_intervention, mixture_distribution, AgentSpec, ForcedOutput, Intervention, TaskItem,
};
use crate::error::{Error, Result};
use crate::protocol::{aggregate, Backend, RunConfig};
use crate::topology::Topology;

/// Which outcomes of the natural process the flip probability conditions on.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FlipCondition {
    /// Unconditional: P(y_cf ≠ y_orig). This matches the Monte Carlo flip
    /// rate over paired seeds.
    Any,
    /// P(flip | natural run correct).
    OriginallyCorrect,
    /// P(flip | natural run incorrect).
    OriginallyIncorrect,
}

/// Exact probability that the intervention flips the aggregated answer's
/// correctness, under the same common-random-numbers pairing the simulator
/// uses.
pub fn exact_flip_probability(
    t: &Topology,
    agents: &[AgentSpec],
    task: &TaskItem,
    cfg: &RunConfig,
    iv: &Intervention,
    condition: FlipCondition,
) -> Result<f64> {
    let n = t.n();
    let k = task.alphabet_size;
    if agents.len() != n {
        return Err(Error::Config(format!(
            "topology has {n} agents but {} specs were supplied",
            agents.len()
        )));
    }
    if !matches!(cfg.backend, Backend::Synthetic) {
        return Err(Error::InvalidParameter(
            "the enumeration oracle covers the synthetic backend only".into(),
        ));
    }
    if iv.target >= n {
        return Err(Error::InvalidParameter(format!(
            "intervention target {} out of range for n={n}",
            iv.target
        )));
    }
    let forced = match apply_intervention(iv, task)? {
        ForcedOutput::Answer(a) => a,
        ForcedOutput::Text(_) => {
            return Err(Error::InvalidParameter(
                "text interventions are not enumerable on the synthetic backend".into(),
            ))
        }
    };
    let natural_space = (k as u64).checked_pow(n as u32);
    match natural_space {
        Some(s) if s <= 4096 => {}
        _ => {
            return Err(Error::Tractability(format!(
                "k^n = {k}^{n} exceeds 4096"
            )))
        }
    }
    if cfg.rounds > 3 {
        return Err(Error::Tractability(format!(
            "K = {} exceeds 3 rounds",
            cfg.rounds
        )));
    }
    if cfg.rounds < 1 {
        return Err(Error::Config("a dialogue needs at least one round".into()));
    }

    // Joint state: one (natural, counterfactual) answer pair per agent,
    // encoded in base k² with agent i at digit i.
    let kk = k * k;
    let size = kk.pow(n as u32);
    let stride: Vec<usize> = (0..n).map(|i| kk.pow(i as u32)).collect();
    let mut dist = vec![0.0f64; size];
    dist[0] = 1.0; // placeholder assignment; round 1 never reads previous answers
    let mut next = vec![0.0f64; size];

    let in_neighbors: Vec<Vec<usize>> = (0..n).map(|i| t.in_neighbors(i)).collect();

    for round in 1..=cfg.rounds {
        for i in 0..n {
            next.iter_mut().for_each(|x| *x = 0.0);
            let neighbors = &in_neighbors[i];
            for (state, &mass) in dist.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let pair_of = |agent: usize| (state / stride[agent]) % kk;
                let mut nat_in: Vec<usize> = Vec::with_capacity(neighbors.len() + 1);
                let mut cf_in: Vec<usize> = Vec::with_capacity(neighbors.len() + 1);
                for &j in neighbors {
                    let pj = pair_of(j);
                    nat_in.push(pj / k);
                    cf_in.push(pj % k);
                }
                if round >= 2 {
                    let pi = pair_of(i);
                    nat_in.push(pi / k);
                    cf_in.push(pi % k);
                }
                let p = mixture_distribution(&agents[i], task, &nat_in);
                let q = if iv.target == i {
                    let mut q = vec![0.0; k];
                    q[forced] = 1.0;
                    q
                } else {
                    mixture_distribution(&agents[i], task, &cf_in)
                };
                let base = state - pair_of(i) * stride[i];
                couple_comonotone(&p, &q, |a, b, w| {
                    next[base + (a * k + b) * stride[i]] += mass * w;
                });
            }
            std::mem::swap(&mut dist, &mut next);
        }
    }

    // Score round-K answers of both arms per joint assignment.
    let mut flip_mass = 0.0;
    let mut cond_mass = 0.0;
    let mut nat = vec![0usize; n];
    let mut cf = vec![0usize; n];
    for (state, &mass) in dist.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        for agent in 0..n {
            let pair = (state / stride[agent]) % kk;
            nat[agent] = pair / k;
            cf[agent] = pair % k;
        }
        let y_nat = u8::from(aggregate(&nat, &cfg.aggregation, task)? == task.gold);
        let y_cf = u8::from(aggregate(&cf, &cfg.aggregation, task)? == task.gold);
        let in_condition = match condition {
            FlipCondition::Any => true,
            FlipCondition::OriginallyCorrect => y_nat == 1,
            FlipCondition::OriginallyIncorrect => y_nat == 0,
        };
        if in_condition {
            cond_mass += mass;
            if y_nat != y_cf {
                flip_mass += mass;
            }
        }
    }
    if condition != FlipCondition::Any && cond_mass <= 0.0 {
        return Err(Error::InvalidParameter(
            "conditioning event has probability zero".into(),
        ));
    }
    if condition == FlipCondition::Any {
        // cond_mass is the full mass; dividing normalizes away float drift.
        cond_mass = cond_mass.max(f64::MIN_POSITIVE);
    }
    Ok(flip_mass / cond_mass)
}

/// Push one shared uniform through both inverse CDFs: walk the merged CDF
/// breakpoints and emit each interval as a (natural, counterfactual) atom.
fn couple_comonotone(p: &[f64], q: &[f64], mut emit: impl FnMut(usize, usize, f64)) {
    let k = p.len();
    let mut ia = 0usize;
    let mut ib = 0usize;
    let mut ca = p[0];
    let mut cb = q[0];
    let mut lo = 0.0f64;
    loop {
        let hi = ca.min(cb).min(1.0);
        if hi > lo {
            emit(ia, ib, hi - lo);
        }
        if hi >= 1.0 - 1e-15 {
            break;
        }
        lo = hi;
        // advance whichever arm's cumulative boundary we just hit
        if ca <= cb {
            ia += 1;
            if ia >= k {
                ia = k - 1;
                ca = f64::INFINITY;
            } else {
                ca += p[ia];
            }
        } else {
            ib += 1;
            if ib >= k {
                ib = k - 1;
                cb = f64::INFINITY;
            } else {
                cb += q[ib];
            }
        }
    }
}
