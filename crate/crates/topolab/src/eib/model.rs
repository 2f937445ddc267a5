//! Learner parameters: two GNN stacks (one per template view) plus the
//! query-conditioned fusion gate, with init, a flat parameter view for the
//! optimizer and gradient checks, and JSON checkpointing.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eib::linalg::Mat;
use crate::error::{Error, Result};
use crate::rng::{stream, u01};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyper {
    /// GNN depth L.
    pub layers: usize,
    /// Embedding dimension D (must match the encoder).
    pub input_dim: usize,
    /// Hidden width H of every GNN layer.
    pub hidden: usize,
    /// Width of the gate's hidden layer.
    pub gate_hidden: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper { layers: 3, input_dim: 64, hidden: 32, gate_hidden: 16 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderCfg {
    pub dim: usize,
    pub salt: u64,
}

impl Default for EncoderCfg {
    fn default() -> Self {
        EncoderCfg { dim: 64, salt: 0x5eed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// out×in weight matrix.
    pub w: Mat,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    /// gate_hidden×input_dim
    pub w1: Mat,
    pub b1: Vec<f64>,
    /// 2×gate_hidden
    pub w2: Mat,
    pub b2: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EibModel {
    pub encoder: EncoderCfg,
    pub hyper: Hyper,
    /// GNN over the all-pairs template.
    pub dense: Vec<LayerParams>,
    /// GNN over the chain template.
    pub sparse: Vec<LayerParams>,
    pub gate: GateParams,
}

/// (out, in) shapes of the L GNN layers: D→H, then H→H.
fn layer_shapes(h: &Hyper) -> Vec<(usize, usize)> {
    (0..h.layers)
        .map(|l| (h.hidden, if l == 0 { h.input_dim } else { h.hidden }))
        .collect()
}

impl EibModel {
    /// Fresh model with every parameter drawn uniformly from
    /// [−1/√fan_in, +1/√fan_in] using the run seed.
    pub fn init(hyper: Hyper, encoder: EncoderCfg, seed: u64) -> Result<Self> {
        if hyper.layers == 0 || hyper.input_dim == 0 || hyper.hidden == 0 || hyper.gate_hidden == 0
        {
            return Err(Error::InvalidParameter(
                "model dimensions must all be positive".into(),
            ));
        }
        if encoder.dim != hyper.input_dim {
            return Err(Error::Config(format!(
                "encoder dimension {} does not match model input dimension {}",
                encoder.dim, hyper.input_dim
            )));
        }
        let mut rng = stream(seed, &[0xe1b]);
        let mut draw = |fan_in: usize, n: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| (2.0 * u01(&mut rng) - 1.0) * bound).collect()
        };
        let stack = |draw: &mut dyn FnMut(usize, usize) -> Vec<f64>| -> Vec<LayerParams> {
            layer_shapes(&hyper)
                .into_iter()
                .map(|(out, inp)| LayerParams {
                    w: Mat { rows: out, cols: inp, data: draw(inp, out * inp) },
                    b: draw(inp, out),
                })
                .collect()
        };
        let dense = stack(&mut draw);
        let sparse = stack(&mut draw);
        let gate = GateParams {
            w1: Mat {
                rows: hyper.gate_hidden,
                cols: hyper.input_dim,
                data: draw(hyper.input_dim, hyper.gate_hidden * hyper.input_dim),
            },
            b1: draw(hyper.input_dim, hyper.gate_hidden),
            w2: Mat { rows: 2, cols: hyper.gate_hidden, data: draw(hyper.gate_hidden, 2 * hyper.gate_hidden) },
            b2: draw(hyper.gate_hidden, 2),
        };
        Ok(EibModel { encoder, hyper, dense, sparse, gate })
    }

    /// Total learnable parameter count.
    pub fn flat_len(&self) -> usize {
        let gnn: usize = layer_shapes(&self.hyper)
            .iter()
            .map(|(o, i)| o * i + o)
            .sum();
        2 * gnn
            + self.gate.w1.data.len()
            + self.gate.b1.len()
            + self.gate.w2.data.len()
            + self.gate.b2.len()
    }

    /// All parameters in one vector: dense layers (w then b, in order), then
    /// sparse layers, then gate w1, b1, w2, b2. Gradients and checkpoints use
    /// the same ordering.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
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

    /// Overwrite every parameter from a flat vector laid out as `to_flat`.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.flat_len() {
            return Err(Error::InvalidParameter(format!(
                "flat parameter vector has length {}, model expects {}",
                flat.len(),
                self.flat_len()
            )));
        }
        let mut pos = 0usize;
        let mut take = |n: usize| {
            let s = &flat[pos..pos + n];
            pos += n;
            s
        };
        for lp in self.dense.iter_mut().chain(self.sparse.iter_mut()) {
            let nw = lp.w.data.len();
            lp.w.data.copy_from_slice(take(nw));
            let nb = lp.b.len();
            lp.b.copy_from_slice(take(nb));
        }
        let g = &mut self.gate;
        let n = g.w1.data.len();
        g.w1.data.copy_from_slice(take(n));
        let n = g.b1.len();
        g.b1.copy_from_slice(take(n));
        let n = g.w2.data.len();
        g.w2.data.copy_from_slice(take(n));
        let n = g.b2.len();
        g.b2.copy_from_slice(take(n));
        Ok(())
    }

    /// Shape consistency of every tensor against the stored hyperparameters.
    pub fn validate(&self) -> Result<()> {
        let shapes = layer_shapes(&self.hyper);
        for (name, stack) in [("dense", &self.dense), ("sparse", &self.sparse)] {
            if stack.len() != self.hyper.layers {
                return Err(Error::Validation(format!(
                    "{name} view has {} layers, hyperparameters say {}",
                    stack.len(),
                    self.hyper.layers
                )));
            }
            for (l, (lp, &(out, inp))) in stack.iter().zip(&shapes).enumerate() {
                if lp.w.rows != out || lp.w.cols != inp || lp.w.data.len() != out * inp {
                    return Err(Error::Validation(format!(
                        "{name} layer {l} weight expected {out}×{inp}, found {}×{} with {} entries",
                        lp.w.rows,
                        lp.w.cols,
                        lp.w.data.len()
                    )));
                }
                if lp.b.len() != out {
                    return Err(Error::Validation(format!(
                        "{name} layer {l} bias expected length {out}, found {}",
                        lp.b.len()
                    )));
                }
            }
        }
        let g = &self.gate;
        let (hg, d) = (self.hyper.gate_hidden, self.hyper.input_dim);
        if g.w1.rows != hg || g.w1.cols != d || g.w1.data.len() != hg * d {
            return Err(Error::Validation(format!(
                "gate w1 expected {hg}×{d}, found {}×{}",
                g.w1.rows, g.w1.cols
            )));
        }
        if g.b1.len() != hg {
            return Err(Error::Validation(format!(
                "gate b1 expected length {hg}, found {}",
                g.b1.len()
            )));
        }
        if g.w2.rows != 2 || g.w2.cols != hg || g.w2.data.len() != 2 * hg {
            return Err(Error::Validation(format!(
                "gate w2 expected 2×{hg}, found {}×{}",
                g.w2.rows, g.w2.cols
            )));
        }
        if g.b2.len() != 2 {
            return Err(Error::Validation(format!(
                "gate b2 expected length 2, found {}",
                g.b2.len()
            )));
        }
        if self.encoder.dim != self.hyper.input_dim {
            return Err(Error::Validation(format!(
                "encoder dimension {} does not match input dimension {}",
                self.encoder.dim, self.hyper.input_dim
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let wire = CheckpointWire { version: CHECKPOINT_VERSION, model: self.clone() };
        let text = serde_json::to_string_pretty(&wire)?;
        fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let wire: CheckpointWire = serde_json::from_str(&text)?;
        if wire.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                wire.version
            )));
        }
        wire.model.validate()?;
        Ok(wire.model)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointWire {
    version: u32,
    #[serde(flatten)]
    model: EibModel,
}
