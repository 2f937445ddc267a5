//! Edge-probability masks: the learner's output distribution over topologies.

use rand_chacha::ChaCha8Rng;

use crate::rng::u01;
use crate::topology::Topology;

/// Entries below/above this are clamped so log-probabilities stay finite.
pub const PROB_CLAMP: f64 = 1e-6;

/// Symmetric N×N matrix of edge-inclusion probabilities. The meaningful
/// entries are the j < i pairs (the lower triangle, mirrored for symmetry);
/// the diagonal is carried along but never sampled.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeProbs {
    pub n: usize,
    m: Vec<f64>,
}

impl EdgeProbs {
    /// All pair probabilities at 0.5 — the distribution an untrained,
    /// zero-weight model produces.
    pub fn uniform(n: usize) -> Self {
        EdgeProbs { n, m: vec![0.5; n * n] }
    }

    pub(crate) fn from_raw(n: usize, m: Vec<f64>) -> Self {
        debug_assert_eq!(m.len(), n * n);
        debug_assert!(m.iter().all(|p| (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(p)));
        EdgeProbs { n, m }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.n + j]
    }

    pub(crate) fn values(&self) -> &[f64] {
        &self.m
    }
}

/// One independent Bernoulli draw per j < i pair, in (i, j) lexicographic
/// order; the result is acyclic by construction since only sender < receiver
/// edges exist.
pub fn sample_topology(m: &EdgeProbs, rng: &mut ChaCha8Rng) -> Topology {
    let mut t = Topology::empty(m.n).expect("mask dimension is positive");
    for i in 1..m.n {
        for j in 0..i {
            if u01(rng) < m.at(i, j) {
                t.add_edge(i, j).expect("j < i by construction");
            }
        }
    }
    t
}

/// Log-probability of drawing `t` from the mask:
/// Σ_{j<i} e·ln m[i][j] + (1−e)·ln(1−m[i][j]).
pub fn log_prob(m: &EdgeProbs, t: &Topology) -> f64 {
    assert_eq!(m.n, t.n(), "mask and topology sizes differ");
    let mut lp = 0.0;
    for i in 1..m.n {
        for j in 0..i {
            let p = m.at(i, j);
            lp += if t.has_edge(i, j) { p.ln() } else { (1.0 - p).ln() };
        }
    }
    lp
}
