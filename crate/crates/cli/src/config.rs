//! Run configuration: a TOML file overridden by command-line flags.

use std::path::{Path, PathBuf};

use narralyze_core::corpus::{SeverityBoundaries, SynthConfig};
use narralyze_core::explain::DEFAULT_TOP_N;
use narralyze_core::featureset::FeatureCombo;
use narralyze_core::models::{ExperimentConfig, Hyperparameters, Task};
use narralyze_core::providers::ProviderConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SNAPSHOT_FILE: &str = "config.resolved.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Corpus to ingest; `synth` and `ingest` both write `corpus.jsonl` under the output directory.
    pub corpus: Option<PathBuf>,
    /// Lexicon dictionary; the bundled demo lexicon when absent.
    pub dictionary: Option<PathBuf>,
    /// Response cache root; `<out>/cache` when absent.
    pub cache: Option<PathBuf>,
    /// Directory with prompt templates; the bundled templates when absent.
    pub prompts: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSection {
    pub n_samples: usize,
    pub signal_strength: f64,
    pub severity_mix: Vec<f64>,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        SynthSection {
            n_samples: d.n_samples,
            signal_strength: d.signal_strength,
            severity_mix: d.severity_mix,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayerToggles {
    pub l1: bool,
    pub l2: bool,
    pub l3: bool,
    /// Keep the L2/L3 missingness flags as model inputs.
    pub missing_flags: bool,
}

impl Default for LayerToggles {
    fn default() -> Self {
        LayerToggles {
            l1: true,
            l2: true,
            l3: true,
            missing_flags: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingSection {
    pub backend: Backend,
    pub dimension: usize,
    pub provider: ProviderConfig,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            backend: Backend::Mock,
            dimension: 1536,
            provider: ProviderConfig {
                model_id: "text-embedding-3-small".into(),
                ..ProviderConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatSection {
    pub backend: Backend,
    /// Severity the mock evaluator assumes for samples without ground truth.
    pub mock_default_severity: f64,
    pub provider: ProviderConfig,
}

impl Default for ChatSection {
    fn default() -> Self {
        ChatSection {
            backend: Backend::Mock,
            mock_default_severity: 0.5,
            provider: ProviderConfig {
                model_id: "gpt-4o".into(),
                ..ProviderConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSection {
    pub k: usize,
    pub tasks: Vec<Task>,
    pub combos: Vec<FeatureCombo>,
    pub hyperparameters: Hyperparameters,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let d = ExperimentConfig::default();
        ExperimentSection {
            k: d.k,
            tasks: d.tasks,
            combos: d.combos,
            hyperparameters: d.hyperparameters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainSection {
    pub combo: FeatureCombo,
    pub top_n: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection {
            combo: FeatureCombo::BL1L2L3,
            top_n: DEFAULT_TOP_N,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub offline: bool,
    pub paths: Paths,
    pub synth: SynthSection,
    pub severity: SeverityBoundaries,
    pub layers: LayerToggles,
    pub embedding: EmbeddingSection,
    pub chat: ChatSection,
    pub experiment: ExperimentSection,
    pub explain: ExplainSection,
}

/// Values from the command line that win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub offline: bool,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let raw = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str(&raw)
                    .map_err(|e| CliError::Validation(format!("invalid config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if overrides.seed.is_some() {
            cfg.seed = overrides.seed;
        }
        if overrides.out.is_some() {
            cfg.out = overrides.out.clone();
        }
        cfg.offline |= overrides.offline;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seed.is_none() {
            return Err(CliError::Validation(
                "a seed is required: pass --seed or set `seed` in the config".into(),
            ));
        }
        self.severity.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        if self.experiment.k < 2 {
            return Err(CliError::Validation("experiment.k must be at least 2".into()));
        }
        if self.embedding.dimension == 0 {
            return Err(CliError::Validation("embedding.dimension must be positive".into()));
        }
        for p in [&self.embedding.provider, &self.chat.provider] {
            p.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("narralyze-out"))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.paths.cache.clone().unwrap_or_else(|| self.out_dir().join("cache"))
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_samples: self.synth.n_samples,
            signal_strength: self.synth.signal_strength,
            seed: self.seed(),
            severity_mix: self.synth.severity_mix.clone(),
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            k: self.experiment.k,
            seed: self.seed(),
            tasks: self.experiment.tasks.clone(),
            combos: self.experiment.combos.clone(),
            hyperparameters: self.experiment.hyperparameters.clone(),
        }
    }

    /// Writes the resolved configuration next to the outputs.
    pub fn write_snapshot(&self) -> Result<PathBuf, CliError> {
        let dir = self.out_dir();
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let path = dir.join(SNAPSHOT_FILE);
        let text = toml::to_string_pretty(self).map_err(|e| CliError::Internal(format!("config snapshot: {e}")))?;
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
