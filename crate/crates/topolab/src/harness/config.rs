//! Experiment configuration (one JSON document) and the reproducibility
//! manifest written next to every output set.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::AgentSpec;
use crate::causal::PropagationMode;
use crate::eib::TrainConfig;
use crate::error::{Error, Result};
use crate::llm::{LlmConfig, LlmEndpoint};
use crate::protocol::{Aggregation, Backend, RunConfig};

/// Serializable view of the run parameters. Credentials and the endpoint URL
/// never appear here — the LLM backend reads them from the environment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSettings {
    pub rounds: usize,
    pub aggregation: Aggregation,
    #[serde(default)]
    pub seed: u64,
    /// Present ⇒ the LLM backend; absent ⇒ synthetic agents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm: Option<LlmConfig>,
    #[serde(default)]
    pub store_prompts: bool,
}

impl RunSettings {
    pub fn to_run_config(&self) -> Result<RunConfig> {
        let backend = match &self.llm {
            None => Backend::Synthetic,
            Some(cfg) => Backend::Llm(LlmEndpoint::from_env(cfg)?),
        };
        Ok(RunConfig {
            rounds: self.rounds,
            aggregation: self.aggregation.clone(),
            seed: self.seed,
            backend,
            store_prompts: self.store_prompts,
        })
    }
}

/// Sweep-driver knobs: how many candidate tasks to generate, the pool target
/// per side, and the sweep seeds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<PropagationMode>,
    pub seeds: Vec<u64>,
    /// Tasks per pool (originally-correct or originally-incorrect).
    pub pool_target: usize,
    /// Synthetic candidates generated before filtering.
    pub candidates: usize,
    /// Alphabet size of generated tasks.
    #[serde(default = "default_alphabet")]
    pub alphabet_size: usize,
}

fn default_alphabet() -> usize {
    4
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            direction: None,
            seeds: vec![0, 1, 2, 3, 4],
            pool_target: 200,
            candidates: 4000,
            alphabet_size: 4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub agents: Vec<AgentSpec>,
    pub run: RunSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSettings>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// The synthetic reference setup: six agents at competence 0.9 and social
    /// weight 0.7, three rounds, majority vote.
    pub fn reference() -> Self {
        ExperimentConfig {
            agents: AgentSpec::uniform(6, 0.9, 0.7).expect("reference parameters are valid"),
            run: RunSettings {
                rounds: 3,
                aggregation: Aggregation::MajorityVote,
                seed: 0,
                llm: None,
                store_prompts: false,
            },
            train: None,
            sweep: Some(SweepSettings::default()),
            output_dir: default_output_dir(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return Err(Error::Config("config lists no agents".into()));
        }
        for (pos, a) in self.agents.iter().enumerate() {
            if a.index != pos {
                return Err(Error::Config(format!(
                    "agent at position {pos} has index {}; agents must be listed in canonical order",
                    a.index
                )));
            }
        }
        if self.run.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if let Aggregation::Judge(j) = self.run.aggregation {
            if j >= self.agents.len() {
                return Err(Error::Config(format!(
                    "judge index {j} out of range for {} agents",
                    self.agents.len()
                )));
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.pool_target == 0 || sw.candidates == 0 || sw.seeds.is_empty() {
                return Err(Error::Config(
                    "sweep pool target, candidate count and seed list must be nonempty".into(),
                ));
            }
            if sw.alphabet_size < 2 {
                return Err(Error::Config("sweep alphabet size must be at least 2".into()));
            }
        }
        if let Some(tc) = &self.train {
            tc.validate()?;
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON serialization.
    pub fn digest(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex_digest(&bytes))
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let hash = Sha256::digest(bytes);
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(hex_digest(&bytes))
}

/// Reproducibility record: which config (by digest), which seed, which tool
/// version, and the digests of every input and output file. The only place
/// wall-clock time appears in any artifact.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub master_seed: u64,
    pub tool_version: String,
    pub created_unix: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig, master_seed: u64) -> Result<Self> {
        Ok(RunManifest {
            config_digest: config.digest()?,
            master_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    /// True iff the stored config digest matches a recomputation.
    pub fn matches(&self, config: &ExperimentConfig) -> Result<bool> {
        Ok(self.config_digest == config.digest()?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }
}
