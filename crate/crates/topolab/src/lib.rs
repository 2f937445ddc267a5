//! A desk-scale laboratory for multi-agent communication topologies.
//!
//! The crate simulates K-round message passing between LLM-style agents over
//! directed acyclic communication graphs, measures each agent's causal
//! influence on the system answer with counterfactual interventions (CAPE and
//! its degree-weighted aggregate TCTE), sweeps topology density to study how
//! errors and insights propagate, and trains a small dual-view graph network
//! that generates topologies per query via REINFORCE.
//!
//! Layout:
//! - [`topology`]: DAGs over a canonical agent order, named families, sweep paths.
//! - [`agents`]: prompt composition, the synthetic stochastic agent, interventions.
//! - [`llm`]: the chat-completions wire client used by the LLM backend.
//! - [`protocol`]: the K-round dialogue engine and answer aggregation.
//! - [`causal`]: CAPE/TCTE, propagation sweeps, baselines, and an exact
//!   enumeration oracle for small instances.
//! - [`eib`]: the dual-view GNN topology generator and its REINFORCE trainer,
//!   with hand-derived gradients.
//! - [`harness`]: task ingestion, pool construction, reports, and the CLI.
//!
//! Everything is deterministic given a seed: randomness flows through
//! counter-style keyed streams (see [`rng`]), so counterfactual pairs share
//! common random numbers and repeated runs are byte-identical.

pub mod agents;
pub mod causal;
pub mod eib;
pub mod error;
pub mod harness;
pub mod llm;
pub mod protocol;
pub mod rng;
pub mod topology;

pub use error::{Error, Result};
