//! Differentiable pipeline from agent/task text to an edge-probability mask:
//! dual-view GNN encoders, sigmoid mask decoding, query gate, convex fusion.
//! Every intermediate the backward pass needs is kept in the trace structs.

use serde::{Deserialize, Serialize};

use crate::agents::{AgentSpec, TaskItem};
use crate::eib::encoder::{encode_node, encode_query};
use crate::eib::linalg::{dot, Mat};
use crate::eib::mask::{EdgeProbs, PROB_CLAMP};
use crate::eib::model::{EibModel, GateParams, LayerParams};
use crate::error::{Error, Result};

/// The two template graphs the GNN views aggregate over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum View {
    /// All-pairs template (densest topology).
    Dense,
    /// Path template (sparsest connected topology).
    Sparse,
}

/// Which parts of the model are live. `FullModel` is the real thing; the
/// others exist for ablation studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    FullModel,
    DenseOnly,
    SparseOnly,
    /// Both views, gate bypassed: α fixed at (0.5, 0.5).
    NoFusion,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Row-stochastic aggregation operator: row i averages over {i} ∪ N(i) in the
/// template graph, treated as undirected.
pub(crate) fn template_operator(n: usize, view: View) -> Mat {
    let mut p = Mat::zeros(n, n);
    for i in 0..n {
        let mut members = vec![i];
        match view {
            View::Dense => members.extend((0..n).filter(|&j| j != i)),
            View::Sparse => {
                if i > 0 {
                    members.push(i - 1);
                }
                if i + 1 < n {
                    members.push(i + 1);
                }
            }
        }
        let w = 1.0 / members.len() as f64;
        for j in members {
            *p.at_mut(i, j) = w;
        }
    }
    p
}

/// Everything one GNN view computed, kept for the backward pass.
pub struct ViewTrace {
    /// Aggregation operator for this view.
    pub p: Mat,
    /// Per-layer aggregated inputs A_l = P · h_{l−1} (n×in).
    pub agg: Vec<Mat>,
    /// Per-layer pre-activations (n×out).
    pub pre: Vec<Mat>,
    /// Final node embeddings Z (n×H).
    pub z: Mat,
}

/// Message passing: h_0 = X; h_l = act(P·h_{l−1}·W_lᵀ + b_l), ReLU inside,
/// identity at the output layer.
pub fn gnn_forward(p: &Mat, x: &Mat, layers: &[LayerParams]) -> Result<ViewTrace> {
    if layers.is_empty() {
        return Err(Error::InvalidParameter("a GNN needs at least one layer".into()));
    }
    if p.rows != x.rows || p.cols != x.rows {
        return Err(Error::InvalidParameter(format!(
            "aggregation operator is {}×{} but features have {} rows",
            p.rows, p.cols, x.rows
        )));
    }
    let mut agg = Vec::with_capacity(layers.len());
    let mut pres = Vec::with_capacity(layers.len());
    let mut cur = x.clone();
    let last = layers.len() - 1;
    for (l, lp) in layers.iter().enumerate() {
        if lp.w.cols != cur.cols {
            return Err(Error::InvalidParameter(format!(
                "layer {l} expects {} inputs, got {}",
                lp.w.cols, cur.cols
            )));
        }
        let a = p.mul(&cur);
        let mut pre = a.mul_nt(&lp.w);
        for r in 0..pre.rows {
            for (c, bias) in lp.b.iter().enumerate() {
                *pre.at_mut(r, c) += bias;
            }
        }
        cur = pre.clone();
        if l != last {
            for v in &mut cur.data {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        agg.push(a);
        pres.push(pre);
    }
    Ok(ViewTrace { p: p.clone(), agg, pre: pres, z: cur })
}

/// Sigmoid of pairwise inner products, clamped away from {0, 1}. The raw
/// (pre-clamp) sigmoids are returned for the backward pass.
pub fn decode_mask(z: &Mat) -> (EdgeProbs, Mat) {
    let g = z.mul_nt(z);
    let mut raw = Mat::zeros(g.rows, g.cols);
    let mut m = vec![0.0; g.rows * g.cols];
    for idx in 0..g.data.len() {
        let s = sigmoid(g.data[idx]);
        raw.data[idx] = s;
        m[idx] = s.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    }
    (EdgeProbs::from_raw(g.rows, m), raw)
}

/// Gate intermediates for the backward pass.
pub struct GateEval {
    pub hpre: Vec<f64>,
    pub h: Vec<f64>,
    pub alpha: [f64; 2],
}

/// α = softmax(W2 · ReLU(W1·Q + b1) + b2).
pub fn gate(q: &[f64], gp: &GateParams) -> GateEval {
    let mut hpre = gp.w1.matvec(q);
    for (v, b) in hpre.iter_mut().zip(&gp.b1) {
        *v += b;
    }
    let h: Vec<f64> = hpre.iter().map(|&v| v.max(0.0)).collect();
    let mut logits = gp.w2.matvec(&h);
    for (v, b) in logits.iter_mut().zip(&gp.b2) {
        *v += b;
    }
    let mx = logits[0].max(logits[1]);
    let e0 = (logits[0] - mx).exp();
    let e1 = (logits[1] - mx).exp();
    let alpha = [e0 / (e0 + e1), e1 / (e0 + e1)];
    GateEval { hpre, h, alpha }
}

/// Entrywise convex combination of the two masks, re-clamped.
pub fn fuse(md: &EdgeProbs, ms: &EdgeProbs, alpha: [f64; 2]) -> Result<EdgeProbs> {
    if md.n != ms.n {
        return Err(Error::InvalidParameter(format!(
            "cannot fuse masks of sizes {} and {}",
            md.n, ms.n
        )));
    }
    let m: Vec<f64> = md
        .values()
        .iter()
        .zip(ms.values())
        .map(|(&a, &b)| (alpha[0] * a + alpha[1] * b).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
        .collect();
    Ok(EdgeProbs::from_raw(md.n, m))
}

/// Full forward trace for one (agents, task) instance.
pub struct ForwardPass {
    pub x: Mat,
    pub q: Vec<f64>,
    pub dense: ViewTrace,
    pub sparse: ViewTrace,
    pub m_dense: EdgeProbs,
    pub m_sparse: EdgeProbs,
    /// Raw sigmoids per view (pre-clamp), for derivative masking.
    pub raw_dense: Mat,
    pub raw_sparse: Mat,
    /// None when the ablation bypasses the gate.
    pub gate: Option<GateEval>,
    pub alpha: [f64; 2],
    pub m_final: EdgeProbs,
    pub ablation: Ablation,
}

pub fn forward(
    model: &EibModel,
    agents: &[AgentSpec],
    task: &TaskItem,
    ablation: Ablation,
) -> Result<ForwardPass> {
    if agents.is_empty() {
        return Err(Error::InvalidParameter("forward pass needs at least one agent".into()));
    }
    for (pos, a) in agents.iter().enumerate() {
        if a.index != pos {
            return Err(Error::Config(format!(
                "agent at position {pos} has index {}; specs must be in canonical order",
                a.index
            )));
        }
    }
    let n = agents.len();
    let d = model.encoder.dim;
    let mut x = Mat::zeros(n, d);
    for (i, a) in agents.iter().enumerate() {
        x.row_mut(i).copy_from_slice(&encode_node(a, task, d, model.encoder.salt));
    }
    let q = encode_query(task, d, model.encoder.salt);

    let dense = gnn_forward(&template_operator(n, View::Dense), &x, &model.dense)?;
    let sparse = gnn_forward(&template_operator(n, View::Sparse), &x, &model.sparse)?;
    let (m_dense, raw_dense) = decode_mask(&dense.z);
    let (m_sparse, raw_sparse) = decode_mask(&sparse.z);

    let (gate_eval, alpha, m_final) = match ablation {
        Ablation::FullModel => {
            let ge = gate(&q, &model.gate);
            let alpha = ge.alpha;
            let m = fuse(&m_dense, &m_sparse, alpha)?;
            (Some(ge), alpha, m)
        }
        Ablation::DenseOnly => (None, [1.0, 0.0], m_dense.clone()),
        Ablation::SparseOnly => (None, [0.0, 1.0], m_sparse.clone()),
        Ablation::NoFusion => {
            let alpha = [0.5, 0.5];
            let m = fuse(&m_dense, &m_sparse, alpha)?;
            (None, alpha, m)
        }
    };

    Ok(ForwardPass {
        x,
        q,
        dense,
        sparse,
        m_dense,
        m_sparse,
        raw_dense,
        raw_sparse,
        gate: gate_eval,
        alpha,
        m_final,
        ablation,
    })
}

/// Convenience wrapper around `dot` for tests and diagnostics.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eib::model::{EncoderCfg, Hyper};

    pub(crate) fn const_layer(out: usize, inp: usize, w: f64, b: f64) -> LayerParams {
        LayerParams { w: Mat { rows: out, cols: inp, data: vec![w; out * inp] }, b: vec![b; out] }
    }

    #[test]
    fn two_node_full_mean_aggregation() {
        // D=H=1, W=[1], b=0: both nodes see mean(2,4)=3.
        let p = template_operator(2, View::Dense);
        let x = Mat::from_rows(vec![vec![2.0], vec![4.0]]);
        let layers = vec![const_layer(1, 1, 1.0, 0.0)];
        let tr = gnn_forward(&p, &x, &layers).unwrap();
        assert_eq!(tr.z.data, vec![3.0, 3.0]);
    }

    #[test]
    fn zero_weights_zero_output() {
        let p = template_operator(3, View::Sparse);
        let x = Mat::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let layers = vec![const_layer(4, 2, 0.0, 0.0), const_layer(4, 4, 0.0, 0.0)];
        let tr = gnn_forward(&p, &x, &layers).unwrap();
        assert!(tr.z.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn chain_template_respects_end_symmetry() {
        // Symmetric input around node 1 stays symmetric under the 0↔2 swap.
        let p = template_operator(3, View::Sparse);
        let x = Mat::from_rows(vec![vec![7.0, 1.0], vec![2.0, 2.0], vec![7.0, 1.0]]);
        let layers = vec![const_layer(2, 2, 0.5, 0.1), const_layer(2, 2, 1.0, 0.0)];
        let tr = gnn_forward(&p, &x, &layers).unwrap();
        assert_eq!(tr.z.row(0), tr.z.row(2));
        assert_ne!(tr.z.row(0), tr.z.row(1));
    }

    #[test]
    fn decode_reference_values() {
        let sig1 = 0.7310585786300049; // σ(1)
        let z = Mat::zeros(2, 3);
        let (m, _) = decode_mask(&z);
        assert_eq!(m.at(1, 0), 0.5);

        let z = Mat::from_rows(vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
        let (m, _) = decode_mask(&z);
        assert!((m.at(1, 0) - sig1).abs() < 1e-12);

        let z = Mat::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let (m, _) = decode_mask(&z);
        assert_eq!(m.at(1, 0), 0.5);
        assert!((m.at(0, 0) - sig1).abs() < 1e-12);
        // symmetry
        assert_eq!(m.at(1, 0), m.at(0, 1));
    }

    #[test]
    fn decode_clamps_extreme_products() {
        let z = Mat::from_rows(vec![vec![100.0], vec![100.0], vec![-100.0]]);
        let (m, _) = decode_mask(&z);
        assert_eq!(m.at(1, 0), 1.0 - PROB_CLAMP);
        assert_eq!(m.at(2, 0), PROB_CLAMP);
    }

    #[test]
    fn gate_reference_values() {
        let q = vec![0.3, -0.2];
        let zero = GateParams {
            w1: Mat::zeros(3, 2),
            b1: vec![0.0; 3],
            w2: Mat::zeros(2, 3),
            b2: vec![0.0, 0.0],
        };
        let ge = gate(&q, &zero);
        assert_eq!(ge.alpha, [0.5, 0.5]);

        let mut ln2 = zero.clone();
        ln2.b2 = vec![2.0f64.ln(), 0.0];
        let ge = gate(&q, &ln2);
        assert!((ge.alpha[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((ge.alpha[1] - 1.0 / 3.0).abs() < 1e-12);

        let mut ten = zero.clone();
        ten.b2 = vec![10.0, 0.0];
        let ge = gate(&q, &ten);
        assert!((ge.alpha[0] - 0.9999546021312976).abs() < 1e-9);
        assert!((ge.alpha[0] + ge.alpha[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fuse_reference_and_convexity() {
        let md = EdgeProbs::from_raw(2, vec![0.8; 4]);
        let ms = EdgeProbs::from_raw(2, vec![0.2; 4]);
        assert_eq!(fuse(&md, &ms, [1.0, 0.0]).unwrap(), md);
        let mid = fuse(&md, &ms, [0.5, 0.5]).unwrap();
        assert!((mid.at(1, 0) - 0.5).abs() < 1e-12);
        let skew = fuse(&md, &ms, [0.25, 0.75]).unwrap();
        assert!(skew.at(1, 0) >= 0.2 && skew.at(1, 0) <= 0.8);
    }

    #[test]
    fn full_forward_is_deterministic_and_ablations_route() {
        let hyper = Hyper { layers: 2, input_dim: 16, hidden: 6, gate_hidden: 4 };
        let model = EibModel::init(hyper, EncoderCfg { dim: 16, salt: 3 }, 7).unwrap();
        let agents = vec![
            AgentSpec::new(0, "lead analyst", 0.9, 0.5).unwrap(),
            AgentSpec::new(1, "verifier", 0.6, 0.5).unwrap(),
            AgentSpec::new(2, "skeptic", 0.6, 0.5).unwrap(),
        ];
        let task = TaskItem::new("t", "which option is prime?", 4, 2, None).unwrap();

        let a = forward(&model, &agents, &task, Ablation::FullModel).unwrap();
        let b = forward(&model, &agents, &task, Ablation::FullModel).unwrap();
        assert_eq!(a.m_final, b.m_final);
        assert_eq!(a.alpha, b.alpha);

        let d = forward(&model, &agents, &task, Ablation::DenseOnly).unwrap();
        assert_eq!(d.m_final, d.m_dense);
        assert_eq!(d.alpha, [1.0, 0.0]);
        let s = forward(&model, &agents, &task, Ablation::SparseOnly).unwrap();
        assert_eq!(s.m_final, s.m_sparse);
        let nf = forward(&model, &agents, &task, Ablation::NoFusion).unwrap();
        assert_eq!(nf.alpha, [0.5, 0.5]);
        let expect = 0.5 * nf.m_dense.at(1, 0) + 0.5 * nf.m_sparse.at(1, 0);
        assert!((nf.m_final.at(1, 0) - expect).abs() < 1e-12);

        // fused mask sits between the two views entrywise
        for i in 1..3 {
            for j in 0..i {
                let lo = a.m_dense.at(i, j).min(a.m_sparse.at(i, j));
                let hi = a.m_dense.at(i, j).max(a.m_sparse.at(i, j));
                assert!(a.m_final.at(i, j) >= lo - 1e-12 && a.m_final.at(i, j) <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn identical_roles_make_exchangeable_rows() {
        // Agents 1 and 2 share a role; under the all-pairs template their Z
        // rows and mask rows/columns must coincide.
        let hyper = Hyper { layers: 3, input_dim: 16, hidden: 5, gate_hidden: 4 };
        let model = EibModel::init(hyper, EncoderCfg { dim: 16, salt: 3 }, 11).unwrap();
        let agents = vec![
            AgentSpec::new(0, "planner", 0.9, 0.5).unwrap(),
            AgentSpec::new(1, "worker", 0.6, 0.5).unwrap(),
            AgentSpec::new(2, "worker", 0.6, 0.5).unwrap(),
        ];
        let task = TaskItem::new("t", "sort the options", 3, 0, None).unwrap();
        let fp = forward(&model, &agents, &task, Ablation::FullModel).unwrap();
        assert_eq!(fp.dense.z.row(1), fp.dense.z.row(2));
        assert!((fp.m_dense.at(1, 0) - fp.m_dense.at(2, 0)).abs() < 1e-15);
    }

    #[test]
    fn shape_errors_are_reported() {
        let p = template_operator(2, View::Dense);
        let x = Mat::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let layers = vec![const_layer(2, 3, 1.0, 0.0)];
        assert!(gnn_forward(&p, &x, &layers).is_err());
        let p3 = template_operator(3, View::Dense);
        let layers = vec![const_layer(2, 2, 1.0, 0.0)];
        assert!(gnn_forward(&p3, &x, &layers).is_err());
    }
}
