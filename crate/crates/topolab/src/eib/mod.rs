//! The EIB learner: a topology generator that encodes agent roles and the
//! query as hashed text features, runs two GNN stacks over fixed dense/sparse
//! template graphs, decodes each into an edge-probability mask, fuses them
//! with a query-conditioned gate, and samples lower-triangular topologies.
//! Trained with REINFORCE; all gradients are derived by hand and verified
//! against finite differences.

mod backward;
mod encoder;
mod forward;
pub mod linalg;
mod mask;
mod model;
mod train;

pub use backward::{backward, ModelGrads};
pub use encoder::{encode_node, encode_query, encode_text};
pub use forward::{
    cosine, decode_mask, forward, fuse, gate, gnn_forward, Ablation, ForwardPass, GateEval, View,
    ViewTrace,
};
pub use mask::{log_prob, sample_topology, EdgeProbs, PROB_CLAMP};
pub use model::{EibModel, EncoderCfg, GateParams, Hyper, LayerParams, CHECKPOINT_VERSION};
pub use train::{
    design_topology, freeze_batch, mean_reward_from_model, mean_reward_from_probs,
    policy_gradient_step, surrogate_grad, surrogate_loss, synthetic_reward_env, train, Design,
    FrozenBatch, FrozenQuery, FrozenSample, StepStats, TrainConfig, TrainReport,
};
