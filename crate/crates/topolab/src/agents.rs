//! Individual agents: prompt composition, the synthetic stochastic agent used
//! for exact verification, and the do-style intervention mechanism.
//!
//! The synthetic agent answers multi-choice questions from the mixture
//!
//! ```text
//! p(a) = (1 − λ)·prior(a) + λ·freq_incoming(a)
//! ```
//!
//! where the prior puts mass `c` on the gold answer and spreads the rest
//! uniformly, and `freq_incoming` is the empirical distribution of the answers
//! the agent received this round. Competence `c` and social weight `λ` make
//! error and insight propagation exactly enumerable, which the oracle in
//! [`crate::causal::exact`] exploits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::u01;
use rand_chacha::ChaCha8Rng;

/// One agent: a role description plus the synthetic-backend behavior knobs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AgentSpec {
    pub index: usize,
    pub role_text: String,
    /// c: probability mass the agent's own prior puts on the gold answer.
    pub competence: f64,
    /// λ: how strongly incoming messages pull the agent away from its prior.
    pub social_weight: f64,
}

impl AgentSpec {
    pub fn new(index: usize, role_text: impl Into<String>, competence: f64, social_weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&competence) {
            return Err(Error::InvalidParameter(format!(
                "competence must lie in [0,1], got {competence}"
            )));
        }
        if !(0.0..=1.0).contains(&social_weight) {
            return Err(Error::InvalidParameter(format!(
                "social weight must lie in [0,1], got {social_weight}"
            )));
        }
        Ok(AgentSpec { index, role_text: role_text.into(), competence, social_weight })
    }

    /// `count` uniform agents, the usual synthetic cohort.
    pub fn uniform(count: usize, competence: f64, social_weight: f64) -> Result<Vec<Self>> {
        (0..count)
            .map(|i| AgentSpec::new(i, format!("agent {i}"), competence, social_weight))
            .collect()
    }
}

/// What an agent is shown: a system half (role and round context) and a user
/// half (the query followed by neighbor responses).
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Prompt {
    pub system_text: String,
    pub user_text: String,
}

/// A do-operator forcing one agent's output in every round.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Intervention {
    pub target: usize,
    pub mode: InterventionMode,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionMode {
    /// Force the deterministic wrong answer (gold + 1 mod k).
    ForceError,
    /// Force the gold answer.
    ForceAnswer,
    /// Force a chosen answer index or, for LLM backends, a raw message.
    Custom(CustomOutput),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CustomOutput {
    Answer(usize),
    Text(String),
}

/// What an intervened agent emits.
#[derive(Clone, Debug, PartialEq)]
pub enum ForcedOutput {
    Answer(usize),
    Text(String),
}

/// A multi-choice query with `alphabet_size` answers and a gold index.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskItem {
    pub id: String,
    pub question: String,
    pub alphabet_size: usize,
    pub gold: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
}

impl TaskItem {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        alphabet_size: usize,
        gold: usize,
        choices: Option<Vec<String>>,
    ) -> Result<Self> {
        if alphabet_size < 2 {
            return Err(Error::InvalidParameter(format!(
                "answer alphabet must have at least 2 entries, got {alphabet_size}"
            )));
        }
        if gold >= alphabet_size {
            return Err(Error::InvalidParameter(format!(
                "gold index {gold} out of range for alphabet size {alphabet_size}"
            )));
        }
        if let Some(c) = &choices {
            if c.len() != alphabet_size {
                return Err(Error::InvalidParameter(format!(
                    "got {} choices for alphabet size {alphabet_size}",
                    c.len()
                )));
            }
        }
        Ok(TaskItem { id: id.into(), question: question.into(), alphabet_size, gold, choices })
    }
}

/// Render an answer index as the message text agents exchange.
pub fn answer_text(idx: usize) -> String {
    if idx < 26 {
        ((b'A' + idx as u8) as char).to_string()
    } else {
        format!("#{idx}")
    }
}

/// Parse an agent's free-text reply back into an answer index.
///
/// The first single-letter token inside the alphabet wins ("the answer is C"
/// → 2); failing that, the first uppercase in-alphabet letter anywhere (so
/// "(B)" glued to punctuation still parses but the 'a' in "answer" does not).
pub fn parse_answer_text(text: &str, alphabet_size: usize) -> Option<usize> {
    let in_alphabet = |ch: char| {
        let idx = (ch.to_ascii_uppercase() as u8 - b'A') as usize;
        (idx < alphabet_size).then_some(idx)
    };
    for token in text.split(|ch: char| !ch.is_ascii_alphanumeric()) {
        let mut chars = token.chars();
        if let (Some(ch), None) = (chars.next(), chars.next()) {
            if ch.is_ascii_alphabetic() {
                if let Some(idx) = in_alphabet(ch) {
                    return Some(idx);
                }
            }
        }
    }
    text.chars()
        .filter(|ch| ch.is_ascii_uppercase())
        .find_map(in_alphabet)
}

/// Build the prompt an agent sees: the question, then neighbor responses in
/// ascending sender order. Pure — identical inputs give identical prompts.
pub fn compose_prompt(
    spec: &AgentSpec,
    task: &TaskItem,
    neighbor_msgs: &[(usize, String)],
    round: usize,
) -> Prompt {
    let mut msgs: Vec<&(usize, String)> = neighbor_msgs.iter().collect();
    msgs.sort_by_key(|(sender, _)| *sender);
    let mut user_text = task.question.clone();
    for (sender, text) in msgs {
        user_text.push_str(&format!("\nAgent {sender} said: {text}"));
    }
    Prompt {
        system_text: format!("{}\nYou are agent {} in round {round} of a group discussion. Answer with a single choice letter.", spec.role_text, spec.index),
        user_text,
    }
}

/// The synthetic agent's answer distribution given this round's incoming
/// answers. Always sums to 1 exactly (both components are distributions).
pub fn mixture_distribution(spec: &AgentSpec, task: &TaskItem, incoming: &[usize]) -> Vec<f64> {
    let k = task.alphabet_size;
    let c = spec.competence;
    let off = (1.0 - c) / (k - 1) as f64;
    let mut p: Vec<f64> = (0..k).map(|a| if a == task.gold { c } else { off }).collect();
    if !incoming.is_empty() {
        let lam = spec.social_weight;
        let w = lam / incoming.len() as f64;
        for q in p.iter_mut() {
            *q *= 1.0 - lam;
        }
        for &a in incoming {
            p[a] += w;
        }
    }
    p
}

/// Inverse-CDF sample: the smallest index whose cumulative mass exceeds `u`.
pub fn sample_index(p: &[f64], u: f64) -> usize {
    let mut cdf = 0.0;
    for (a, &q) in p.iter().enumerate() {
        cdf += q;
        if u < cdf {
            return a;
        }
    }
    p.len() - 1 // guard against cumulative rounding at u ≈ 1
}

/// Draw one answer from the mixture using the supplied stream.
pub fn synthetic_respond(
    spec: &AgentSpec,
    task: &TaskItem,
    incoming: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    for &a in incoming {
        if a >= task.alphabet_size {
            return Err(Error::InvalidParameter(format!(
                "incoming answer {a} out of range for alphabet size {}",
                task.alphabet_size
            )));
        }
    }
    let p = mixture_distribution(spec, task, incoming);
    Ok(sample_index(&p, u01(rng)))
}

/// Resolve an intervention into the output the target agent will emit.
pub fn apply_intervention(iv: &Intervention, task: &TaskItem) -> Result<ForcedOutput> {
    match &iv.mode {
        InterventionMode::ForceAnswer => Ok(ForcedOutput::Answer(task.gold)),
        InterventionMode::ForceError => {
            Ok(ForcedOutput::Answer((task.gold + 1) % task.alphabet_size))
        }
        InterventionMode::Custom(CustomOutput::Answer(a)) => {
            if *a >= task.alphabet_size {
                return Err(Error::InvalidParameter(format!(
                    "custom answer {a} out of range for alphabet size {}",
                    task.alphabet_size
                )));
            }
            Ok(ForcedOutput::Answer(*a))
        }
        InterventionMode::Custom(CustomOutput::Text(t)) => Ok(ForcedOutput::Text(t.clone())),
    }
}
