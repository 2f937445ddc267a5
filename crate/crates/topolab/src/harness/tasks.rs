//! Task ingestion and pool construction: JSON Lines loading, synthetic task
//! generation, and the originally-correct / originally-incorrect split that
//! the propagation sweeps consume.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::agents::{AgentSpec, TaskItem};
use crate::causal::task_seed;
use crate::error::{Error, Result};
use crate::protocol::{run_dialogue, RunConfig};
use crate::rng::{stream, u01};
use crate::topology::Topology;

#[derive(Deserialize)]
struct TaskLine {
    id: String,
    question: String,
    choices: Vec<String>,
    gold: GoldField,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GoldField {
    Index(usize),
    Letter(String),
}

fn gold_index(gold: &GoldField, k: usize, line_no: usize) -> Result<usize> {
    match gold {
        GoldField::Index(i) => Ok(*i),
        GoldField::Letter(s) => {
            let mut chars = s.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) if c.is_ascii_uppercase() && ((c as usize) - ('A' as usize)) < k => {
                    Ok(c as usize - 'A' as usize)
                }
                _ => Err(Error::Validation(format!(
                    "line {line_no}: gold label {s:?} is not an index or a choice letter"
                ))),
            }
        }
    }
}

/// Parse a JSON Lines task file: one object per line with `id`, `question`,
/// `choices`, and `gold` (index or uppercase choice letter). Blank lines are
/// skipped; anything else malformed is an error naming the line.
pub fn load_tasks(path: &Path) -> Result<Vec<TaskItem>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read task file {}: {e}", path.display())))?;
    let mut tasks = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: TaskLine = serde_json::from_str(line)
            .map_err(|e| Error::Validation(format!("line {line_no}: {e}")))?;
        let k = parsed.choices.len();
        let gold = gold_index(&parsed.gold, k, line_no)?;
        if !seen.insert(parsed.id.clone()) {
            return Err(Error::Validation(format!(
                "line {line_no}: duplicate task id {:?}",
                parsed.id
            )));
        }
        let task = TaskItem::new(parsed.id, parsed.question, k, gold, Some(parsed.choices))
            .map_err(|e| Error::Validation(format!("line {line_no}: {e}")))?;
        tasks.push(task);
    }
    if tasks.is_empty() {
        return Err(Error::Validation(format!(
            "task file {} contains no tasks",
            path.display()
        )));
    }
    Ok(tasks)
}

/// Deterministic stand-in questions with uniformly drawn gold answers and ids
/// `syn-0000`, `syn-0001`, …
pub fn generate_synthetic_tasks(count: usize, k: usize, seed: u64) -> Result<Vec<TaskItem>> {
    if count == 0 {
        return Err(Error::InvalidParameter("task count must be positive".into()));
    }
    if k < 2 {
        return Err(Error::InvalidParameter("alphabet size must be at least 2".into()));
    }
    let mut rng = stream(seed, &[0x7a5c]);
    (0..count)
        .map(|i| {
            let gold = ((u01(&mut rng) * k as f64) as usize).min(k - 1);
            TaskItem::new(
                format!("syn-{i:04}"),
                format!("Synthetic question {i}: which of the {k} options is marked correct?"),
                k,
                gold,
                None,
            )
        })
        .collect()
}

/// 1 iff the aggregated answer hits gold; out-of-alphabet answers are errors.
pub fn check_answer(final_answer: usize, task: &TaskItem) -> Result<u8> {
    if final_answer >= task.alphabet_size {
        return Err(Error::InvalidParameter(format!(
            "answer index {final_answer} outside alphabet of size {}",
            task.alphabet_size
        )));
    }
    Ok(u8::from(final_answer == task.gold))
}

/// The two sweep pools plus how far short of the targets they fell.
#[derive(Debug)]
pub struct Partition {
    pub correct: Vec<TaskItem>,
    pub incorrect: Vec<TaskItem>,
    pub shortfall_correct: usize,
    pub shortfall_incorrect: usize,
}

/// Run the un-intervened system once per task (fixed per-task seed) and fill
/// the correct/incorrect pools up to the targets, in task order. A pool with
/// a positive target that stays empty is a hard error; a partially filled one
/// is reported through the shortfall counts.
pub fn partition_by_correctness(
    t: &Topology,
    agents: &[AgentSpec],
    tasks: &[TaskItem],
    cfg: &RunConfig,
    target_correct: usize,
    target_incorrect: usize,
) -> Result<Partition> {
    let mut correct = Vec::with_capacity(target_correct);
    let mut incorrect = Vec::with_capacity(target_incorrect);
    for task in tasks {
        if correct.len() >= target_correct && incorrect.len() >= target_incorrect {
            break;
        }
        let outcome = run_dialogue(t, agents, task, &cfg.with_seed(task_seed(cfg.seed, task)), None)?;
        if outcome.correct == 1 {
            if correct.len() < target_correct {
                correct.push(task.clone());
            }
        } else if incorrect.len() < target_incorrect {
            incorrect.push(task.clone());
        }
    }
    if target_correct > 0 && correct.is_empty() {
        return Err(Error::Shortfall(format!(
            "no originally-correct tasks among {} candidates",
            tasks.len()
        )));
    }
    if target_incorrect > 0 && incorrect.is_empty() {
        return Err(Error::Shortfall(format!(
            "no originally-incorrect tasks among {} candidates",
            tasks.len()
        )));
    }
    Ok(Partition {
        shortfall_correct: target_correct - correct.len(),
        shortfall_incorrect: target_incorrect - incorrect.len(),
        correct,
        incorrect,
    })
}
