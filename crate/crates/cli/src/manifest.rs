use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use upms::agents::{Algorithm, TrainConfig};
use upms::metrics::OracleObjective;
use upms::{EnvConfig, GeneratorConfig};

use crate::error::CliError;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where a command's instances come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InstanceSpec {
    File { path: PathBuf },
    /// One fresh draw per episode; the recorded seed is ignored.
    Generated { generator: GeneratorConfig },
    Golden,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PolicySpec {
    Baseline { name: String },
    Checkpoint { path: PathBuf },
}

/// Fully resolved configuration of one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum RunConfig {
    Generate {
        generator: GeneratorConfig,
    },
    Train {
        algorithm: Algorithm,
        instance: InstanceSpec,
        env: EnvConfig,
        train: TrainConfig,
        /// Seeds the logged evaluation episode.
        log_seed: u64,
    },
    Evaluate {
        policy: PolicySpec,
        instance: InstanceSpec,
        env: EnvConfig,
        episodes: usize,
        evaluation_seed: u64,
        multi_agent: bool,
    },
    SolveExact {
        instance: InstanceSpec,
        objective: OracleObjective,
    },
}

impl RunConfig {
    pub fn name(&self) -> &'static str {
        match self {
            RunConfig::Generate { .. } => "generate",
            RunConfig::Train { .. } => "train",
            RunConfig::Evaluate { .. } => "evaluate",
            RunConfig::SolveExact { .. } => "solve-exact",
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    /// The `--seed` value; `sub_seeds` lists what was derived from it.
    pub seed: u64,
    pub sub_seeds: BTreeMap<String, u64>,
    pub config: RunConfig,
    /// Artifact role to path. The manifest itself is not listed.
    pub artifacts: BTreeMap<String, PathBuf>,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| CliError::Manifest(e.to_string()))?;
        if m.toolkit_version != TOOLKIT_VERSION {
            return Err(CliError::Manifest(format!(
                "recorded with toolkit {}, this is {}",
                m.toolkit_version, TOOLKIT_VERSION
            )));
        }
        Ok(m)
    }

    pub fn artifact(&self, role: &str) -> Result<&Path, CliError> {
        self.artifacts
            .get(role)
            .map(PathBuf::as_path)
            .ok_or_else(|| CliError::Manifest(format!("no `{role}` artifact recorded")))
    }
}

/// `path` with `.manifest.json` appended to its file name.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}
