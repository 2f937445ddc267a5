//! Argument parsing and dispatch. Exit codes: 0 success, 1 for anything the
//! user can fix (bad flags, bad config, validation, pool shortfall), 2 for
//! runtime and backend failures.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::causal::PropagationMode;
use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::drivers;
use crate::topology::TopologyKind;

#[derive(Parser)]
#[command(
    name = "topolab",
    version,
    about = "Multi-agent communication-topology laboratory",
    disable_help_subcommand = true
)]
struct Cli {
    /// Experiment config JSON; the built-in reference setup when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Error,
    Insight,
}

impl From<ModeArg> for PropagationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Error => PropagationMode::ErrorPropagation,
            ModeArg::Insight => PropagationMode::InsightPropagation,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Emit a named topology as JSON.
    Gen {
        /// full | chain | star | layered:<L> | random:<p> | tree:<b>
        #[arg(long)]
        kind: TopologyKind,
        /// Number of agents.
        #[arg(long)]
        n: usize,
    },
    /// Run one dialogue and print the transcript.
    Run {
        #[arg(long, default_value = "full")]
        kind: TopologyKind,
        /// JSON Lines task file; its first task is used. A synthetic task
        /// stands in when omitted.
        #[arg(long)]
        tasks: Option<PathBuf>,
    },
    /// Propagation sweep along a density path (error: full→chain,
    /// insight: chain→full).
    Sweep {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Score the named-topology suite under both intervention modes.
    Baselines,
    /// Train the topology generator on synthetic-dialogue reward.
    Train,
    /// Generate a topology for one question with a trained model.
    Design {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        question: String,
    },
    /// Re-render summaries from previously written sweep CSVs.
    Report,
}

fn execute(cli: Cli) -> Result<String> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::reference(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
        if let Some(tc) = &mut cfg.train {
            tc.seed = seed;
        }
    }
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    let out_dir = cfg.output_dir.clone();

    match cli.cmd {
        Cmd::Gen { kind, n } => drivers::generate_topology(&kind, n, cfg.run.seed),
        Cmd::Run { kind, tasks } => drivers::run_single(&cfg, &kind, tasks.as_deref()),
        Cmd::Sweep { mode } => {
            let mode: PropagationMode = match mode {
                Some(m) => m.into(),
                // fall back to the config's direction; error propagation by default
                None => cfg
                    .sweep
                    .as_ref()
                    .and_then(|s| s.direction)
                    .unwrap_or(PropagationMode::ErrorPropagation),
            };
            drivers::run_sweep(&cfg, mode, &out_dir)
        }
        Cmd::Baselines => drivers::run_baselines(&cfg, &out_dir),
        Cmd::Train => drivers::run_training(&cfg, &out_dir),
        Cmd::Design { checkpoint, question } => {
            drivers::run_design(&cfg, &checkpoint, &question, &out_dir)
        }
        Cmd::Report => drivers::run_report(&out_dir),
    }
}

/// Parse and run; never panics on user input. Help and version print to
/// stdout and exit 0; usage mistakes (including unknown subcommands) print
/// the usage text and exit 1; driver errors map through `Error::exit_code`.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(text) => {
            let trimmed = text.trim_end();
            if !trimmed.is_empty() {
                use std::io::Write;
                if let Err(err) = writeln!(std::io::stdout(), "{trimmed}") {
                    // a closed pipe (e.g. `topolab run | head`) is not an error
                    if err.kind() != std::io::ErrorKind::BrokenPipe {
                        eprintln!("error: cannot write to stdout: {err}");
                        return 2;
                    }
                }
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
