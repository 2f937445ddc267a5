//! Deterministic text features via signed n-gram hashing.
//!
//! Stands in for a pretrained sentence encoder: token 1–3-grams are hashed
//! into `dim` buckets with a sign bit, then L2-normalized. Same string, same
//! salt, same platform-independent vector.

use crate::agents::{AgentSpec, TaskItem};
use crate::rng::fnv1a64;

pub fn encode_text(text: &str, dim: usize, salt: u64) -> Vec<f64> {
    assert!(dim >= 1, "embedding dimension must be positive");
    let mut v = vec![0.0f64; dim];
    let tokens: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_ascii_lowercase())
        .collect();
    let mut buf = Vec::with_capacity(64);
    for width in 1..=3usize {
        if tokens.len() < width {
            break;
        }
        for window in tokens.windows(width) {
            buf.clear();
            buf.extend_from_slice(&salt.to_le_bytes());
            for (i, tok) in window.iter().enumerate() {
                if i > 0 {
                    buf.push(0x1f); // unit separator between tokens
                }
                buf.extend_from_slice(tok.as_bytes());
            }
            let h = fnv1a64(&buf);
            let bucket = ((h >> 1) % dim as u64) as usize;
            let sign = if h & 1 == 1 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Features for one agent on one task: role text joined with the question.
/// An empty role degenerates to the bare question, so the query embedding is
/// `encode_node` with the role stripped.
pub fn encode_node(spec: &AgentSpec, task: &TaskItem, dim: usize, salt: u64) -> Vec<f64> {
    if spec.role_text.is_empty() {
        encode_text(&task.question, dim, salt)
    } else {
        encode_text(&format!("{}\n{}", spec.role_text, task.question), dim, salt)
    }
}

/// The query embedding Q that drives the fusion gate.
pub fn encode_query(task: &TaskItem, dim: usize, salt: u64) -> Vec<f64> {
    encode_text(&task.question, dim, salt)
}
