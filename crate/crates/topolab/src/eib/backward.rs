//! Exact reverse-mode differentiation through fuse → gate → mask decode →
//! GNN stacks, mirroring `forward.rs` step by step. No autodiff framework:
//! each adjoint is derived by hand so it can be checked against central
//! finite differences.

use crate::eib::forward::{Ablation, ForwardPass, ViewTrace};
use crate::eib::linalg::Mat;
use crate::eib::mask::PROB_CLAMP;
use crate::eib::model::{EibModel, GateParams, LayerParams};

/// Gradients, shaped exactly like the parameters they belong to.
pub struct ModelGrads {
    pub dense: Vec<LayerParams>,
    pub sparse: Vec<LayerParams>,
    pub gate: GateParams,
}

impl ModelGrads {
    pub fn zeros_like(model: &EibModel) -> Self {
        let zero_stack = |stack: &[LayerParams]| {
            stack
                .iter()
                .map(|lp| LayerParams {
                    w: Mat::zeros(lp.w.rows, lp.w.cols),
                    b: vec![0.0; lp.b.len()],
                })
                .collect::<Vec<_>>()
        };
        ModelGrads {
            dense: zero_stack(&model.dense),
            sparse: zero_stack(&model.sparse),
            gate: GateParams {
                w1: Mat::zeros(model.gate.w1.rows, model.gate.w1.cols),
                b1: vec![0.0; model.gate.b1.len()],
                w2: Mat::zeros(model.gate.w2.rows, model.gate.w2.cols),
                b2: vec![0.0; model.gate.b2.len()],
            },
        }
    }

    /// Same layout as `EibModel::to_flat`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for lp in self.dense.iter().chain(self.sparse.iter()) {
            out.extend_from_slice(&lp.w.data);
            out.extend_from_slice(&lp.b);
        }
        out.extend_from_slice(&self.gate.w1.data);
        out.extend_from_slice(&self.gate.b1);
        out.extend_from_slice(&self.gate.w2.data);
        out.extend_from_slice(&self.gate.b2);
        out
    }

    pub fn add_scaled(&mut self, other: &ModelGrads, s: f64) {
        let add_stack = |a: &mut Vec<LayerParams>, b: &[LayerParams]| {
            for (x, y) in a.iter_mut().zip(b) {
                for (u, v) in x.w.data.iter_mut().zip(&y.w.data) {
                    *u += s * v;
                }
                for (u, v) in x.b.iter_mut().zip(&y.b) {
                    *u += s * v;
                }
            }
        };
        add_stack(&mut self.dense, &other.dense);
        add_stack(&mut self.sparse, &other.sparse);
        for (u, v) in self.gate.w1.data.iter_mut().zip(&other.gate.w1.data) {
            *u += s * v;
        }
        for (u, v) in self.gate.b1.iter_mut().zip(&other.gate.b1) {
            *u += s * v;
        }
        for (u, v) in self.gate.w2.data.iter_mut().zip(&other.gate.w2.data) {
            *u += s * v;
        }
        for (u, v) in self.gate.b2.iter_mut().zip(&other.gate.b2) {
            *u += s * v;
        }
    }

    pub fn euclidean_norm(&self) -> f64 {
        self.to_flat().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|x| x.is_finite())
    }
}

/// Backpropagate a loss gradient with respect to the fused mask's meaningful
/// entries (`d_final[i][j]` for j < i; other entries ignored) into parameter
/// space. `fp` must come from `forward` on the same model.
pub fn backward(model: &EibModel, fp: &ForwardPass, d_final: &Mat) -> ModelGrads {
    let n = fp.m_final.n;
    debug_assert_eq!(d_final.rows, n);
    debug_assert_eq!(d_final.cols, n);
    let mut grads = ModelGrads::zeros_like(model);

    // Fusion / ablation routing: split dL/dM_final between the views and,
    // for the full model, the gate weights. The convex combination of two
    // clamped masks stays inside [ε, 1−ε], so the fuse-stage re-clamp is the
    // identity on the backward path.
    let mut d_md = Mat::zeros(n, n);
    let mut d_ms = Mat::zeros(n, n);
    let mut d_alpha = [0.0f64; 2];
    for i in 1..n {
        for j in 0..i {
            let g = d_final.at(i, j);
            if g == 0.0 {
                continue;
            }
            match fp.ablation {
                Ablation::FullModel | Ablation::NoFusion => {
                    *d_md.at_mut(i, j) = fp.alpha[0] * g;
                    *d_ms.at_mut(i, j) = fp.alpha[1] * g;
                    d_alpha[0] += g * fp.m_dense.at(i, j);
                    d_alpha[1] += g * fp.m_sparse.at(i, j);
                }
                Ablation::DenseOnly => *d_md.at_mut(i, j) = g,
                Ablation::SparseOnly => *d_ms.at_mut(i, j) = g,
            }
        }
    }

    if let (Ablation::FullModel, Some(ge)) = (fp.ablation, fp.gate.as_ref()) {
        // softmax: dℓ_i = α_i (dα_i − Σ_k dα_k α_k)
        let inner = d_alpha[0] * ge.alpha[0] + d_alpha[1] * ge.alpha[1];
        let d_logits = [
            ge.alpha[0] * (d_alpha[0] - inner),
            ge.alpha[1] * (d_alpha[1] - inner),
        ];
        grads.gate.w2.add_outer(&d_logits, &ge.h);
        for (b, d) in grads.gate.b2.iter_mut().zip(d_logits) {
            *b += d;
        }
        let dh = model.gate.w2.t_matvec(&d_logits);
        let dhpre: Vec<f64> = dh
            .iter()
            .zip(&ge.hpre)
            .map(|(&g, &pre)| if pre > 0.0 { g } else { 0.0 })
            .collect();
        grads.gate.w1.add_outer(&dhpre, &fp.q);
        for (b, d) in grads.gate.b1.iter_mut().zip(dhpre) {
            *b += d;
        }
    }

    let dz_dense = decode_backward(&fp.dense.z, &fp.raw_dense, &d_md);
    let dz_sparse = decode_backward(&fp.sparse.z, &fp.raw_sparse, &d_ms);
    gnn_backward(&model.dense, &fp.dense, dz_dense, &mut grads.dense);
    gnn_backward(&model.sparse, &fp.sparse, dz_sparse, &mut grads.sparse);
    grads
}

/// dL/dZ from dL/dM where M = clamp(σ(Z·Zᵀ)): for each meaningful pair,
/// dg = dm · σ(g)(1−σ(g)) unless the clamp was active, then dg feeds both
/// endpoint rows.
fn decode_backward(z: &Mat, raw: &Mat, d_m: &Mat) -> Mat {
    let n = z.rows;
    let mut dz = Mat::zeros(n, z.cols);
    for i in 1..n {
        for j in 0..i {
            let g = d_m.at(i, j);
            if g == 0.0 {
                continue;
            }
            let s = raw.at(i, j);
            if s < PROB_CLAMP || s > 1.0 - PROB_CLAMP {
                continue; // clamped entry: locally constant
            }
            let dg = g * s * (1.0 - s);
            for c in 0..z.cols {
                *dz.at_mut(i, c) += dg * z.at(j, c);
                *dz.at_mut(j, c) += dg * z.at(i, c);
            }
        }
    }
    dz
}

/// Walk the layer stack backwards: ReLU masks (identity at the top layer),
/// weight/bias accumulation, then push through W and the aggregation
/// operator Pᵀ.
fn gnn_backward(layers: &[LayerParams], tr: &ViewTrace, dz: Mat, out: &mut [LayerParams]) {
    let last = layers.len() - 1;
    let mut d_out = dz;
    for l in (0..layers.len()).rev() {
        let mut d_pre = d_out;
        if l != last {
            let pre = &tr.pre[l];
            for (idx, v) in d_pre.data.iter_mut().enumerate() {
                if pre.data[idx] <= 0.0 {
                    *v = 0.0;
                }
            }
        }
        let dw = d_pre.mul_tn(&tr.agg[l]);
        for (u, v) in out[l].w.data.iter_mut().zip(&dw.data) {
            *u += v;
        }
        for (u, v) in out[l].b.iter_mut().zip(d_pre.col_sums()) {
            *u += v;
        }
        let d_agg = d_pre.mul(&layers[l].w);
        d_out = tr.p.mul_tn(&d_agg);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentSpec, TaskItem};
    use crate::eib::forward::forward;
    use crate::eib::mask::log_prob;
    use crate::eib::model::{EncoderCfg, Hyper};
    use crate::eib::sample_topology;
    use crate::rng::stream;
    use crate::topology::Topology;

    fn setup(seed: u64, ablation: Ablation) -> (EibModel, Vec<AgentSpec>, TaskItem, Ablation) {
        let hyper = Hyper { layers: 2, input_dim: 12, hidden: 5, gate_hidden: 4 };
        let model = EibModel::init(hyper, EncoderCfg { dim: 12, salt: 5 }, seed).unwrap();
        let agents = vec![
            AgentSpec::new(0, "lead", 0.9, 0.4).unwrap(),
            AgentSpec::new(1, "backup", 0.5, 0.6).unwrap(),
            AgentSpec::new(2, "reviewer", 0.5, 0.6).unwrap(),
        ];
        let task = TaskItem::new("b", "pick the safest route", 4, 1, None).unwrap();
        (model, agents, task, ablation)
    }

    /// Loss = Σ w_s · log_prob(m_final, t_s); analytic gradient of the mask
    /// entries feeds `backward`.
    fn loss(model: &EibModel, agents: &[AgentSpec], task: &TaskItem, ab: Ablation, samples: &[(Topology, f64)]) -> f64 {
        let fp = forward(model, agents, task, ab).unwrap();
        samples.iter().map(|(t, w)| w * log_prob(&fp.m_final, t)).sum()
    }

    fn analytic(
        model: &EibModel,
        agents: &[AgentSpec],
        task: &TaskItem,
        ab: Ablation,
        samples: &[(Topology, f64)],
    ) -> Vec<f64> {
        let fp = forward(model, agents, task, ab).unwrap();
        let n = fp.m_final.n;
        let mut d_final = Mat::zeros(n, n);
        for (t, w) in samples {
            for i in 1..n {
                for j in 0..i {
                    let m = fp.m_final.at(i, j);
                    let e = if t.has_edge(i, j) { 1.0 } else { 0.0 };
                    *d_final.at_mut(i, j) += w * (e / m - (1.0 - e) / (1.0 - m));
                }
            }
        }
        backward(model, &fp, &d_final).to_flat()
    }

    fn fd_check(seed: u64, ablation: Ablation) -> f64 {
        let (mut model, agents, task, ab) = setup(seed, ablation);
        let fp = forward(&model, &agents, &task, ab).unwrap();
        let mut rng = stream(seed, &[0xfd]);
        let samples: Vec<(Topology, f64)> = (0..3)
            .map(|s| (sample_topology(&fp.m_final, &mut rng), [0.7, -0.4, 1.1][s]))
            .collect();
        let grad = analytic(&model, &agents, &task, ab, &samples);
        let flat = model.to_flat();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for idx in 0..flat.len() {
            let mut plus = flat.clone();
            plus[idx] += h;
            model.assign_flat(&plus).unwrap();
            let lp = loss(&model, &agents, &task, ab, &samples);
            let mut minus = flat.clone();
            minus[idx] -= h;
            model.assign_flat(&minus).unwrap();
            let lm = loss(&model, &agents, &task, ab, &samples);
            let fd = (lp - lm) / (2.0 * h);
            let a = grad[idx];
            let scale = fd.abs().max(a.abs());
            if scale < 1e-7 {
                continue; // below the finite-difference noise floor
            }
            worst = worst.max((fd - a).abs() / scale);
        }
        model.assign_flat(&flat).unwrap();
        worst
    }

    #[test]
    fn gradients_match_finite_differences_full_model() {
        let worst = fd_check(3, Ablation::FullModel);
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn gradients_match_finite_differences_ablations() {
        for (seed, ab) in [
            (5, Ablation::DenseOnly),
            (6, Ablation::SparseOnly),
            (7, Ablation::NoFusion),
        ] {
            let worst = fd_check(seed, ab);
            assert!(worst < 1e-4, "{ab:?}: max relative error {worst}");
        }
    }

    #[test]
    fn unused_branch_gets_zero_gradient() {
        let (model, agents, task, ab) = setup(9, Ablation::DenseOnly);
        let fp = forward(&model, &agents, &task, ab).unwrap();
        let mut rng = stream(9, &[1]);
        let t = sample_topology(&fp.m_final, &mut rng);
        let grads = analytic(&model, &agents, &task, ab, &[(t, 1.0)]);
        // layout: dense | sparse | gate — everything after the dense stack is zero
        let dense_len: usize = model.dense.iter().map(|l| l.w.data.len() + l.b.len()).sum();
        assert!(grads[..dense_len].iter().any(|&g| g != 0.0));
        assert!(grads[dense_len..].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn grad_norm_and_accumulation() {
        let (model, agents, task, ab) = setup(11, Ablation::FullModel);
        let fp = forward(&model, &agents, &task, ab).unwrap();
        let mut d = Mat::zeros(3, 3);
        *d.at_mut(1, 0) = 1.0;
        let g1 = backward(&model, &fp, &d);
        let mut acc = ModelGrads::zeros_like(&model);
        acc.add_scaled(&g1, 2.0);
        acc.add_scaled(&g1, -1.0);
        let a = acc.to_flat();
        let b = g1.to_flat();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(g1.is_finite());
        assert!(g1.euclidean_norm() > 0.0);
    }
}
