//! One function per CLI subcommand. Each driver builds its pools, runs the
//! measurement, writes data files plus a manifest under the output directory,
//! and returns the text for stdout. Data files are deterministic; the
//! manifest carries the only timestamp.

use std::path::{Path, PathBuf};

use crate::agents::TaskItem;
use crate::causal::{
    baseline_suite, sweep_error_propagation, sweep_insight_propagation, PropagationMode,
    SweepOptions, SweepReport, TcteRecord,
};
use crate::eib::{
    design_topology, synthetic_reward_env, train, Ablation, EibModel, EncoderCfg, Hyper,
    TrainConfig,
};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, RunManifest, SweepSettings};
use crate::harness::report::{
    prepare_path, sweep_summary, write_baselines_csv, write_sweep_csv, write_text, SeededSweep,
};
use crate::harness::tasks::{generate_synthetic_tasks, load_tasks, partition_by_correctness};
use crate::protocol::Aggregation;
use crate::rng::stream;
use crate::topology::{build_named, densify_path, sparsify_path, TopologyKind};

/// `gen`: build a named family instance and return its JSON.
pub fn generate_topology(kind: &TopologyKind, n: usize, seed: u64) -> Result<String> {
    let mut rng = stream(seed, &[0x10e0]);
    let t = build_named(kind, n, &mut rng)?;
    Ok(t.to_json())
}

fn aggregation_name(a: &Aggregation) -> String {
    match a {
        Aggregation::MajorityVote => "majority vote".into(),
        Aggregation::Judge(j) => format!("judge {j}"),
        Aggregation::LastAgent => "last agent".into(),
    }
}

/// `run`: one dialogue on a named topology, transcript printed round by round.
pub fn run_single(
    cfg: &ExperimentConfig,
    kind: &TopologyKind,
    tasks_path: Option<&Path>,
) -> Result<String> {
    let run_cfg = cfg.run.to_run_config()?;
    let n = cfg.agents.len();
    let mut rng = stream(run_cfg.seed, &[0x10e0]);
    let t = build_named(kind, n, &mut rng)?;
    let task = match tasks_path {
        Some(p) => load_tasks(p)?.remove(0),
        None => {
            let k = cfg.sweep.as_ref().map_or(4, |s| s.alphabet_size);
            generate_synthetic_tasks(1, k, run_cfg.seed)?.remove(0)
        }
    };
    let outcome = crate::protocol::run_dialogue(&t, &cfg.agents, &task, &run_cfg, None)?;

    let mut out = String::new();
    out.push_str(&format!("topology {kind} over {n} agents, {} round(s)\n", run_cfg.rounds));
    out.push_str(&format!("task {} (alphabet {}, gold {})\n", task.id, task.alphabet_size, task.gold));
    for (r, answers) in outcome.transcript.answers.iter().enumerate() {
        let row: Vec<String> = answers.iter().map(|a| a.to_string()).collect();
        out.push_str(&format!("round {}: {}\n", r + 1, row.join(" ")));
    }
    out.push_str(&format!(
        "final answer {} via {} — {}\n",
        outcome.final_answer,
        aggregation_name(&run_cfg.aggregation),
        if outcome.correct == 1 { "correct" } else { "incorrect" }
    ));
    out.push_str(&format!("prompt characters: {}\n", outcome.transcript.message_chars));
    Ok(out)
}

fn sweep_settings(cfg: &ExperimentConfig) -> SweepSettings {
    cfg.sweep.clone().unwrap_or_default()
}

/// `sweep --mode error|insight`: per seed, generate candidates, filter the
/// relevant pool on the path's starting topology, walk the path, and append
/// the rows. Artifacts: `sweep_<mode>.csv`, `sweep_<mode>_summary.txt`,
/// `sweep_<mode>_manifest.json`.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    mode: PropagationMode,
    out_dir: &Path,
) -> Result<String> {
    let settings = sweep_settings(cfg);
    let run_cfg = cfg.run.to_run_config()?;
    let n = cfg.agents.len();
    let mut sweeps = Vec::with_capacity(settings.seeds.len());
    let mut shortfalls = Vec::new();

    for &seed in &settings.seeds {
        let tasks = generate_synthetic_tasks(settings.candidates, settings.alphabet_size, seed)?;
        let seeded = run_cfg.with_seed(seed);
        let mut path_rng = stream(seed, &[0x5ee9]);
        let report = match mode {
            PropagationMode::ErrorPropagation => {
                // forced errors are measured on tasks the densest system got right
                let mut base_rng = stream(seed, &[0xba5e]);
                let base = build_named(&TopologyKind::Full, n, &mut base_rng)?;
                let pool = partition_by_correctness(
                    &base,
                    &cfg.agents,
                    &tasks,
                    &seeded,
                    settings.pool_target,
                    0,
                )?;
                if pool.shortfall_correct > 0 {
                    shortfalls.push((seed, pool.shortfall_correct));
                }
                let path = sparsify_path(n, &mut path_rng)?;
                sweep_error_propagation(
                    &cfg.agents,
                    &pool.correct,
                    &seeded,
                    &path,
                    SweepOptions::default(),
                )?
            }
            PropagationMode::InsightPropagation => {
                // forced corrections are measured on tasks the chain got wrong
                let mut base_rng = stream(seed, &[0xba5e]);
                let base = build_named(&TopologyKind::Chain, n, &mut base_rng)?;
                let pool = partition_by_correctness(
                    &base,
                    &cfg.agents,
                    &tasks,
                    &seeded,
                    0,
                    settings.pool_target,
                )?;
                if pool.shortfall_incorrect > 0 {
                    shortfalls.push((seed, pool.shortfall_incorrect));
                }
                let path = densify_path(n, &mut path_rng)?;
                sweep_insight_propagation(
                    &cfg.agents,
                    &pool.incorrect,
                    &seeded,
                    &path,
                    SweepOptions::default(),
                )?
            }
        };
        sweeps.push(SeededSweep { seed, report });
    }

    let tag = mode.csv_tag();
    let csv_path = prepare_path(out_dir, &format!("sweep_{tag}.csv"))?;
    write_sweep_csv(&sweeps, &csv_path)?;
    let mut summary = sweep_summary(&sweeps);
    for (seed, missing) in &shortfalls {
        summary.push_str(&format!("note: seed {seed} pool short by {missing} task(s)\n"));
    }
    let summary_path = prepare_path(out_dir, &format!("sweep_{tag}_summary.txt"))?;
    write_text(&summary, &summary_path)?;

    let mut manifest = RunManifest::new(cfg, cfg.run.seed)?;
    manifest.record_output(&csv_path)?;
    manifest.record_output(&summary_path)?;
    manifest.save(&prepare_path(out_dir, &format!("sweep_{tag}_manifest.json"))?)?;

    Ok(format!(
        "wrote {} and {}\n\n{summary}",
        csv_path.display(),
        summary_path.display()
    ))
}

/// The named topologies the `baselines` subcommand compares.
pub fn baseline_kinds() -> Vec<TopologyKind> {
    vec![
        TopologyKind::Full,
        TopologyKind::Chain,
        TopologyKind::Star,
        TopologyKind::Layered(2),
        TopologyKind::Random(0.5),
        TopologyKind::Tree(2),
    ]
}

/// `baselines`: both pools are filtered on the full topology, then every
/// named family is scored on both intervention modes. Artifacts:
/// `baselines.csv`, `baselines_manifest.json`.
pub fn run_baselines(cfg: &ExperimentConfig, out_dir: &Path) -> Result<String> {
    let settings = sweep_settings(cfg);
    let run_cfg = cfg.run.to_run_config()?;
    let seed = cfg.run.seed;
    let n = cfg.agents.len();

    let tasks = generate_synthetic_tasks(settings.candidates, settings.alphabet_size, seed)?;
    let mut base_rng = stream(seed, &[0xba5e]);
    let base = build_named(&TopologyKind::Full, n, &mut base_rng)?;
    let pool = partition_by_correctness(
        &base,
        &cfg.agents,
        &tasks,
        &run_cfg,
        settings.pool_target,
        settings.pool_target,
    )?;

    let rows = baseline_suite(&cfg.agents, &pool.correct, &pool.incorrect, &run_cfg, &baseline_kinds())?;

    let csv_path = prepare_path(out_dir, "baselines.csv")?;
    write_baselines_csv(&rows, seed, &csv_path)?;
    let mut manifest = RunManifest::new(cfg, seed)?;
    manifest.record_output(&csv_path)?;
    manifest.save(&prepare_path(out_dir, "baselines_manifest.json")?)?;

    let mut out = format!("wrote {}\n\n", csv_path.display());
    out.push_str(&format!(
        "{:>10}  {:>10}  {:>12}  {:>8}\n",
        "kind", "error_tcte", "insight_tcte", "accuracy"
    ));
    for r in &rows {
        out.push_str(&format!(
            "{:>10}  {:>10.6}  {:>12.6}  {:>8.4}\n",
            r.kind, r.error_tcte, r.insight_tcte, r.accuracy
        ));
    }
    if pool.shortfall_correct + pool.shortfall_incorrect > 0 {
        out.push_str(&format!(
            "note: pools short by {} correct / {} incorrect task(s)\n",
            pool.shortfall_correct, pool.shortfall_incorrect
        ));
    }
    Ok(out)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// `train`: REINFORCE on synthetic-dialogue reward, one batch per epoch.
/// Artifacts: `checkpoint.json`, `train_log.csv`, `train_manifest.json`.
pub fn run_training(cfg: &ExperimentConfig, out_dir: &Path) -> Result<String> {
    let tc = cfg.train.clone().unwrap_or_else(|| TrainConfig {
        seed: cfg.run.seed,
        ..TrainConfig::default()
    });
    tc.validate()?;
    let run_cfg = cfg.run.to_run_config()?;
    let k = cfg.sweep.as_ref().map_or(4, |s| s.alphabet_size);

    // one batch of queries per epoch; epochs controls the step count
    let tasks = generate_synthetic_tasks(tc.queries_per_batch, k, tc.seed)?;
    let mut model = EibModel::init(Hyper::default(), EncoderCfg::default(), tc.seed)?;
    let mut env = synthetic_reward_env(cfg.agents.clone(), run_cfg);
    let report = train(&mut model, &cfg.agents, &tasks, &mut env, &tc)?;

    let ckpt_path = prepare_path(out_dir, "checkpoint.json")?;
    model.save(&ckpt_path)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "mean_reward", "grad_norm", "alpha_dense", "alpha_sparse"])
        .map_err(|e| Error::Validation(format!("csv: {e}")))?;
    for (i, s) in report.steps.iter().enumerate() {
        w.write_record([
            i.to_string(),
            fmt(s.mean_reward),
            fmt(s.grad_norm),
            fmt(s.mean_alpha[0]),
            fmt(s.mean_alpha[1]),
        ])
        .map_err(|e| Error::Validation(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
    let log_path = prepare_path(out_dir, "train_log.csv")?;
    std::fs::write(&log_path, bytes).map_err(|e| Error::io(log_path.display().to_string(), e))?;

    let mut manifest = RunManifest::new(cfg, tc.seed)?;
    manifest.record_output(&ckpt_path)?;
    manifest.record_output(&log_path)?;
    manifest.save(&prepare_path(out_dir, "train_manifest.json")?)?;

    Ok(format!(
        "trained {} step(s): mean reward {:.4} → {:.4}\nwrote {} and {}\n",
        report.steps.len(),
        report.first_mean_reward(),
        report.last_mean_reward(),
        ckpt_path.display(),
        log_path.display()
    ))
}

/// `design`: load a checkpoint, embed the question, emit a sampled topology.
/// Artifacts: `design_topology.json`, `design_manifest.json`.
pub fn run_design(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    question: &str,
    out_dir: &Path,
) -> Result<String> {
    let model = EibModel::load(checkpoint)?;
    let k = cfg.sweep.as_ref().map_or(4, |s| s.alphabet_size);
    // gold never enters the features; 0 is a placeholder for the unknown answer
    let task = TaskItem::new("design-0", question, k, 0, None)?;
    let mut rng = stream(cfg.run.seed, &[0xde51]);
    let design = design_topology(&model, &cfg.agents, &task, Ablation::FullModel, &mut rng)?;

    let json = design.topology.to_json();
    let topo_path = prepare_path(out_dir, "design_topology.json")?;
    write_text(&json, &topo_path)?;
    let mut manifest = RunManifest::new(cfg, cfg.run.seed)?;
    manifest.record_input(checkpoint)?;
    manifest.record_output(&topo_path)?;
    manifest.save(&prepare_path(out_dir, "design_manifest.json")?)?;

    let probs: Vec<String> = (1..design.m_final.n)
        .map(|i| {
            let row: Vec<String> =
                (0..i).map(|j| format!("{:.3}", design.m_final.at(i, j))).collect();
            format!("  {i} ← {}", row.join(" "))
        })
        .collect();
    Ok(format!(
        "gate weights: dense {:.4}, sparse {:.4}\nedge probabilities (lower triangle):\n{}\ntopology: {json}\nwrote {}\n",
        design.alpha[0],
        design.alpha[1],
        probs.join("\n"),
        topo_path.display()
    ))
}

fn parse_sweep_csv(path: &Path) -> Result<Vec<SeededSweep>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
    let mut sweeps: Vec<SeededSweep> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        let field = |i: usize| -> Result<&str> {
            rec.get(i).ok_or_else(|| {
                Error::Validation(format!("{}: row has {} fields", path.display(), rec.len()))
            })
        };
        let bad = |what: &str, v: &str| {
            Error::Validation(format!("{}: bad {what} value {v:?}", path.display()))
        };
        let direction = match field(0)? {
            "error" => PropagationMode::ErrorPropagation,
            "insight" => PropagationMode::InsightPropagation,
            other => return Err(bad("direction", other)),
        };
        let row = TcteRecord {
            topology_sparsity: field(1)?.parse().map_err(|_| bad("sparsity", field(1).unwrap()))?,
            tcte: field(2)?.parse().map_err(|_| bad("tcte", field(2).unwrap()))?,
            accuracy: field(3)?.parse().map_err(|_| bad("accuracy", field(3).unwrap()))?,
            n_queries: field(4)?.parse().map_err(|_| bad("n_queries", field(4).unwrap()))?,
        };
        let seed: u64 = field(5)?.parse().map_err(|_| bad("seed", field(5).unwrap()))?;
        match sweeps.last_mut() {
            Some(last) if last.seed == seed && last.report.direction == direction => {
                last.report.rows.push(row)
            }
            _ => sweeps.push(SeededSweep {
                seed,
                report: SweepReport { direction, rows: vec![row] },
            }),
        }
    }
    Ok(sweeps)
}

/// `report`: re-render the summary text from previously written sweep CSVs.
pub fn run_report(out_dir: &Path) -> Result<String> {
    let mut rendered = Vec::new();
    for tag in ["error", "insight"] {
        let csv_path: PathBuf = out_dir.join(format!("sweep_{tag}.csv"));
        if !csv_path.exists() {
            continue;
        }
        let sweeps = parse_sweep_csv(&csv_path)?;
        let summary = sweep_summary(&sweeps);
        let summary_path = prepare_path(out_dir, &format!("sweep_{tag}_summary.txt"))?;
        write_text(&summary, &summary_path)?;
        rendered.push(summary);
    }
    if rendered.is_empty() {
        return Err(Error::Validation(format!(
            "no sweep CSVs found under {}",
            out_dir.display()
        )));
    }
    Ok(rendered.join("\n"))
}
