//! Communication graphs over a canonical agent order.
//!
//! A topology is a receive matrix: `adj[i][j] = true` means agent `j` sends to
//! agent `i`. Only strictly lower-triangular entries (`j < i`) may be set, so
//! every representable graph is acyclic by construction and the topological
//! order is always `0, 1, …, n-1`. The module builds the named families
//! (Full, Chain, Star, Layered, Random, Tree) and the two one-edge-at-a-time
//! sweep paths between Full and Chain used by the propagation analyses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::u01;
use rand_chacha::ChaCha8Rng;

/// An N-agent DAG stored as a strictly lower-triangular receive matrix.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Topology {
    n: usize,
    adj: Vec<bool>, // row-major n×n; adj[i*n+j] ⇔ i receives from j
}

impl Topology {
    /// The edgeless graph on `n` agents.
    pub fn empty(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidParameter("agent count must be ≥ 1".into()));
        }
        Ok(Topology { n, adj: vec![false; n * n] })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, receiver: usize, sender: usize) -> bool {
        receiver < self.n && sender < self.n && self.adj[receiver * self.n + sender]
    }

    /// Insert the edge `receiver ← sender`; only `sender < receiver` is representable.
    pub fn add_edge(&mut self, receiver: usize, sender: usize) -> Result<()> {
        if receiver >= self.n || sender >= self.n {
            return Err(Error::InvalidParameter(format!(
                "edge ({receiver}←{sender}) out of range for n={}",
                self.n
            )));
        }
        if sender >= receiver {
            return Err(Error::InvalidParameter(format!(
                "edge ({receiver}←{sender}) violates the canonical order (sender must precede receiver)"
            )));
        }
        self.adj[receiver * self.n + sender] = true;
        Ok(())
    }

    pub fn remove_edge(&mut self, receiver: usize, sender: usize) {
        if receiver < self.n && sender < self.n {
            self.adj[receiver * self.n + sender] = false;
        }
    }

    /// Edges as `(receiver, sender)` pairs in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..i {
                if self.adj[i * self.n + j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&e| e).count()
    }

    /// Agents that send to `i`, ascending.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        (0..i.min(self.n)).filter(|&j| self.adj[i * self.n + j]).collect()
    }

    /// Total degree of agent `i`: incoming plus outgoing edges.
    pub fn degree(&self, i: usize) -> Result<usize> {
        if i >= self.n {
            return Err(Error::InvalidParameter(format!(
                "agent index {i} out of range for n={}",
                self.n
            )));
        }
        let incoming = (0..self.n).filter(|&j| self.adj[i * self.n + j]).count();
        let outgoing = (0..self.n).filter(|&r| self.adj[r * self.n + i]).count();
        Ok(incoming + outgoing)
    }

    /// 1 − |E| / (n(n−1)/2): 0 for Full, 1 for the empty graph.
    pub fn sparsity(&self) -> Result<f64> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(
                "sparsity is undefined for a single agent".into(),
            ));
        }
        let max_edges = self.n * (self.n - 1) / 2;
        Ok(1.0 - self.edge_count() as f64 / max_edges as f64)
    }

    /// Kahn's algorithm with min-index tie-breaking. The lower-triangular
    /// invariant makes the result `[0, 1, …, n-1]`; the cycle branch is a
    /// defensive check on the representation.
    pub fn topological_sort(&self) -> Result<Vec<usize>> {
        let n = self.n;
        let mut indegree: Vec<usize> = (0..n)
            .map(|i| (0..n).filter(|&j| self.adj[i * n + j]).count())
            .collect();
        let mut placed = vec![false; n];
        let mut order = Vec::with_capacity(n);
        for _ in 0..n {
            let next = (0..n).find(|&i| !placed[i] && indegree[i] == 0);
            let i = next.ok_or_else(|| {
                Error::Cycle("no remaining agent with in-degree 0".into())
            })?;
            placed[i] = true;
            order.push(i);
            for r in 0..n {
                if self.adj[r * n + i] {
                    indegree[r] -= 1;
                }
            }
        }
        Ok(order)
    }

    /// Defensive structural check: strictly lower-triangular and acyclic.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.n {
            for j in i..self.n {
                if self.adj[i * self.n + j] {
                    return Err(Error::Cycle(format!(
                        "non-lower-triangular entry ({i}←{j})"
                    )));
                }
            }
        }
        self.topological_sort().map(|_| ())
    }

    pub fn to_json(&self) -> String {
        let wire = TopologyWire {
            n: self.n,
            edges: self.edges(),
        };
        serde_json::to_string(&wire).expect("topology serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let wire: TopologyWire =
            serde_json::from_str(s).map_err(|e| Error::Validation(format!("topology json: {e}")))?;
        let mut t = Topology::empty(wire.n)?;
        for (r, s) in wire.edges {
            t.add_edge(r, s)?;
        }
        Ok(t)
    }
}

/// Wire format: `{"n": 3, "edges": [[1,0],[2,1]]}` with edges sorted
/// lexicographically; integer-only, so it round-trips bit-exactly.
#[derive(Serialize, Deserialize)]
struct TopologyWire {
    n: usize,
    edges: Vec<(usize, usize)>,
}

/// The named topology families.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Full,
    Chain,
    Star,
    Layered(usize),
    Random(f64),
    Tree(usize),
}

impl std::fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TopologyKind::Full => write!(f, "full"),
            TopologyKind::Chain => write!(f, "chain"),
            TopologyKind::Star => write!(f, "star"),
            TopologyKind::Layered(l) => write!(f, "layered:{l}"),
            TopologyKind::Random(p) => write!(f, "random:{p}"),
            TopologyKind::Tree(b) => write!(f, "tree:{b}"),
        }
    }
}

impl std::str::FromStr for TopologyKind {
    type Err = Error;

    /// Inverse of `Display`: `full`, `chain`, `star`, `layered:2`,
    /// `random:0.5`, `tree:3`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown topology kind {s:?}"));
        match s {
            "full" => return Ok(TopologyKind::Full),
            "chain" => return Ok(TopologyKind::Chain),
            "star" => return Ok(TopologyKind::Star),
            _ => {}
        }
        let (name, arg) = s.split_once(':').ok_or_else(bad)?;
        match name {
            "layered" => Ok(TopologyKind::Layered(arg.parse().map_err(|_| bad())?)),
            "random" => Ok(TopologyKind::Random(arg.parse().map_err(|_| bad())?)),
            "tree" => Ok(TopologyKind::Tree(arg.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

/// Build the canonical instance of a named family.
///
/// Only `Random` consumes the stream; the chain backbone is always included
/// there so the graph stays connected along the canonical order.
pub fn build_named(kind: &TopologyKind, n: usize, rng: &mut ChaCha8Rng) -> Result<Topology> {
    let mut t = Topology::empty(n)?;
    match *kind {
        TopologyKind::Full => {
            for i in 0..n {
                for j in 0..i {
                    t.add_edge(i, j)?;
                }
            }
        }
        TopologyKind::Chain => {
            for i in 1..n {
                t.add_edge(i, i - 1)?;
            }
        }
        TopologyKind::Star => {
            for i in 1..n {
                t.add_edge(i, 0)?;
            }
        }
        TopologyKind::Layered(layers) => {
            if layers == 0 || layers > n {
                return Err(Error::InvalidParameter(format!(
                    "layered topology needs 1 ≤ layers ≤ n, got layers={layers}, n={n}"
                )));
            }
            // Near-equal contiguous layers; the remainder goes to the earliest layers.
            let base = n / layers;
            let extra = n % layers;
            let mut bounds = Vec::with_capacity(layers + 1);
            let mut start = 0;
            for l in 0..layers {
                bounds.push(start);
                start += base + usize::from(l < extra);
            }
            bounds.push(n);
            for l in 0..layers.saturating_sub(1) {
                for r in bounds[l + 1]..bounds[l + 2] {
                    for s in bounds[l]..bounds[l + 1] {
                        t.add_edge(r, s)?;
                    }
                }
            }
        }
        TopologyKind::Random(p) => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!(
                    "random topology density must lie in [0,1], got {p}"
                )));
            }
            for i in 1..n {
                t.add_edge(i, i - 1)?;
            }
            for i in 0..n {
                for j in 0..i {
                    if j + 1 == i {
                        continue; // backbone edge, already present
                    }
                    if u01(rng) < p {
                        t.add_edge(i, j)?;
                    }
                }
            }
        }
        TopologyKind::Tree(branching) => {
            if branching < 1 {
                return Err(Error::InvalidParameter(
                    "tree branching factor must be ≥ 1".into(),
                ));
            }
            for i in 1..n {
                t.add_edge(i, (i - 1) / branching)?;
            }
        }
    }
    Ok(t)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepDirection {
    Sparsify,
    Densify,
}

/// An ordered interpolation between Full and Chain where consecutive steps
/// differ by exactly one non-backbone edge.
#[derive(Clone, Debug)]
pub struct SweepPath {
    pub direction: SweepDirection,
    pub steps: Vec<Topology>,
}

fn non_backbone_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..i {
            if j + 1 != i {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

fn shuffled<T>(mut items: Vec<T>, rng: &mut ChaCha8Rng) -> Vec<T> {
    // Fisher–Yates on top of the keyed uniform so paths are platform-stable.
    for k in (1..items.len()).rev() {
        let pick = (u01(rng) * (k + 1) as f64) as usize;
        items.swap(k, pick.min(k));
    }
    items
}

/// Full → Chain, removing one uniformly random non-backbone edge per step.
pub fn sparsify_path(n: usize, rng: &mut ChaCha8Rng) -> Result<SweepPath> {
    if n < 2 {
        return Err(Error::InvalidParameter("sweep paths need n ≥ 2".into()));
    }
    let order = shuffled(non_backbone_pairs(n), rng);
    let mut current = build_named(&TopologyKind::Full, n, rng)?;
    let mut steps = vec![current.clone()];
    for (r, s) in order {
        current.remove_edge(r, s);
        steps.push(current.clone());
    }
    Ok(SweepPath { direction: SweepDirection::Sparsify, steps })
}

/// Chain → Full, adding one uniformly random absent edge per step.
pub fn densify_path(n: usize, rng: &mut ChaCha8Rng) -> Result<SweepPath> {
    if n < 2 {
        return Err(Error::InvalidParameter("sweep paths need n ≥ 2".into()));
    }
    let order = shuffled(non_backbone_pairs(n), rng);
    let mut current = build_named(&TopologyKind::Chain, n, rng)?;
    let mut steps = vec![current.clone()];
    for (r, s) in order {
        current.add_edge(r, s)?;
        steps.push(current.clone());
    }
    Ok(SweepPath { direction: SweepDirection::Densify, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        stream(seed, &[0x70])
    }

    #[test]
    fn chain_3_edges() {
        let t = build_named(&TopologyKind::Chain, 3, &mut rng(0)).unwrap();
        assert_eq!(t.edges(), vec![(1, 0), (2, 1)]);
    }

    #[test]
    fn star_4_edges() {
        let t = build_named(&TopologyKind::Star, 4, &mut rng(0)).unwrap();
        assert_eq!(t.edges(), vec![(1, 0), (2, 0), (3, 0)]);
    }

    #[test]
    fn layered_3_of_6_is_the_bipartite_stack() {
        let t = build_named(&TopologyKind::Layered(3), 6, &mut rng(0)).unwrap();
        assert_eq!(
            t.edges(),
            vec![(2, 0), (2, 1), (3, 0), (3, 1), (4, 2), (4, 3), (5, 2), (5, 3)]
        );
    }

    #[test]
    fn random_density_one_is_full() {
        let r = build_named(&TopologyKind::Random(1.0), 4, &mut rng(5)).unwrap();
        let f = build_named(&TopologyKind::Full, 4, &mut rng(5)).unwrap();
        assert_eq!(r, f);
    }

    #[test]
    fn tree_parent_rule() {
        let t = build_named(&TopologyKind::Tree(2), 7, &mut rng(0)).unwrap();
        assert_eq!(
            t.edges(),
            vec![(1, 0), (2, 0), (3, 1), (4, 1), (5, 2), (6, 2)]
        );
    }

    #[test]
    fn layered_rejects_too_many_layers() {
        assert!(build_named(&TopologyKind::Layered(7), 6, &mut rng(0)).is_err());
        assert!(build_named(&TopologyKind::Random(1.5), 6, &mut rng(0)).is_err());
    }

    #[test]
    fn topological_sort_is_canonical() {
        for kind in [TopologyKind::Chain, TopologyKind::Full, TopologyKind::Star] {
            let t = build_named(&kind, 4, &mut rng(0)).unwrap();
            assert_eq!(t.topological_sort().unwrap(), vec![0, 1, 2, 3]);
        }
        let mut t = Topology::empty(3).unwrap();
        t.add_edge(2, 0).unwrap();
        t.add_edge(2, 1).unwrap();
        assert_eq!(t.topological_sort().unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn sparsity_reference_points() {
        let full = build_named(&TopologyKind::Full, 6, &mut rng(0)).unwrap();
        let chain = build_named(&TopologyKind::Chain, 6, &mut rng(0)).unwrap();
        let empty = Topology::empty(6).unwrap();
        assert_eq!(full.sparsity().unwrap(), 0.0);
        assert!((chain.sparsity().unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(empty.sparsity().unwrap(), 1.0);
        assert!(Topology::empty(1).unwrap().sparsity().is_err());
    }

    #[test]
    fn degree_reference_points() {
        let chain = build_named(&TopologyKind::Chain, 3, &mut rng(0)).unwrap();
        assert_eq!(chain.degree(1).unwrap(), 2);
        assert_eq!(chain.degree(0).unwrap(), 1);
        let full = build_named(&TopologyKind::Full, 4, &mut rng(0)).unwrap();
        for i in 0..4 {
            assert_eq!(full.degree(i).unwrap(), 3);
        }
        assert!(full.degree(4).is_err());
    }

    #[test]
    fn sparsify_path_shape_n6() {
        let path = sparsify_path(6, &mut rng(9)).unwrap();
        assert_eq!(path.steps.len(), 11);
        assert_eq!(path.steps[0].sparsity().unwrap(), 0.0);
        let chain = build_named(&TopologyKind::Chain, 6, &mut rng(0)).unwrap();
        assert_eq!(*path.steps.last().unwrap(), chain);
        // every step keeps the backbone
        for step in &path.steps {
            for i in 1..6 {
                assert!(step.has_edge(i, i - 1));
            }
        }
    }

    #[test]
    fn n2_paths_are_degenerate() {
        let path = sparsify_path(2, &mut rng(1)).unwrap();
        assert_eq!(path.steps.len(), 1);
        let full = build_named(&TopologyKind::Full, 2, &mut rng(0)).unwrap();
        let chain = build_named(&TopologyKind::Chain, 2, &mut rng(0)).unwrap();
        assert_eq!(path.steps[0], full);
        assert_eq!(full, chain);
    }

    #[test]
    fn densify_path_shape() {
        // Path length is |E_full| − |E_chain| + 1; for n=3 that is 3 − 2 + 1 = 2:
        // chain (2 edges) → +1 edge → full (3 edges).
        let path = densify_path(3, &mut rng(4)).unwrap();
        assert_eq!(path.steps.len(), 2);
        assert_eq!(path.steps[0].edge_count(), 2);
        assert_eq!(path.steps[1].edge_count(), 3);
        let p6 = densify_path(6, &mut rng(4)).unwrap();
        assert_eq!(p6.steps.len(), 11);
    }

    #[test]
    fn identical_seeds_identical_paths() {
        let a = sparsify_path(6, &mut rng(42)).unwrap();
        let b = sparsify_path(6, &mut rng(42)).unwrap();
        for (x, y) in a.steps.iter().zip(&b.steps) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn json_round_trip() {
        let t = build_named(&TopologyKind::Layered(2), 5, &mut rng(0)).unwrap();
        let s = t.to_json();
        let back = Topology::from_json(&s).unwrap();
        assert_eq!(t, back);
        assert_eq!(s, back.to_json());
    }

    #[test]
    fn kind_name_round_trip() {
        let kinds = [
            TopologyKind::Full,
            TopologyKind::Chain,
            TopologyKind::Star,
            TopologyKind::Layered(2),
            TopologyKind::Random(0.5),
            TopologyKind::Tree(3),
        ];
        for k in kinds {
            let back: TopologyKind = k.to_string().parse().unwrap();
            assert_eq!(back, k);
        }
        assert!("ring".parse::<TopologyKind>().is_err());
        assert!("layered:x".parse::<TopologyKind>().is_err());
        assert!("layered".parse::<TopologyKind>().is_err());
    }

    #[test]
    fn random_edge_count_mean_matches_density() {
        // mean |E| over seeds ≈ p·(#non-backbone pairs) + (n−1)
        let n = 6;
        let p = 0.3;
        let trials = 10_000;
        let mut total = 0usize;
        for s in 0..trials {
            let t = build_named(&TopologyKind::Random(p), n, &mut rng(s)).unwrap();
            total += t.edge_count();
        }
        let pairs = (n * (n - 1) / 2 - (n - 1)) as f64;
        let expected = p * pairs + (n - 1) as f64;
        let var = pairs * p * (1.0 - p);
        let se = (var / trials as f64).sqrt();
        let mean = total as f64 / trials as f64;
        assert!(
            (mean - expected).abs() < 3.0 * se + 1e-9,
            "mean {mean} vs expected {expected} (se {se})"
        );
    }

    proptest! {
        #[test]
        fn all_builders_are_lower_triangular(seed in 0u64..500, n in 1usize..9) {
            let kinds = [
                TopologyKind::Full,
                TopologyKind::Chain,
                TopologyKind::Star,
                TopologyKind::Layered(((seed as usize) % n) + 1),
                TopologyKind::Random((seed % 11) as f64 / 10.0),
                TopologyKind::Tree(((seed as usize) % 3) + 1),
            ];
            for kind in kinds {
                let t = build_named(&kind, n, &mut rng(seed)).unwrap();
                prop_assert!(t.validate().is_ok());
                prop_assert_eq!(t.topological_sort().unwrap(), (0..n).collect::<Vec<_>>());
            }
        }

        #[test]
        fn degree_sum_is_twice_edges(seed in 0u64..500, n in 2usize..9) {
            let t = build_named(&TopologyKind::Random(0.5), n, &mut rng(seed)).unwrap();
            let total: usize = (0..n).map(|i| t.degree(i).unwrap()).sum();
            prop_assert_eq!(total, 2 * t.edge_count());
        }

        #[test]
        fn paths_change_one_edge_per_step(seed in 0u64..200, n in 2usize..8) {
            for path in [sparsify_path(n, &mut rng(seed)).unwrap(),
                         densify_path(n, &mut rng(seed)).unwrap()] {
                for w in path.steps.windows(2) {
                    let a: std::collections::HashSet<_> = w[0].edges().into_iter().collect();
                    let b: std::collections::HashSet<_> = w[1].edges().into_iter().collect();
                    prop_assert_eq!(a.symmetric_difference(&b).count(), 1);
                }
            }
        }
    }
}
