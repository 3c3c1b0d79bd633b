//! Effective configuration: command-line flags, then `TAGTRIAGE_*`
//! environment variables, then the TOML config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tagtriage_core::attribution::KeywordFilterConfig;
use tagtriage_core::corpus::synthetic::GeneratorConfig;
use tagtriage_core::corpus::SplitSpec;
use tagtriage_core::scorer::EnsembleConfig;
use tagtriage_service::ServiceConfig;

use crate::error::{CliError, CliResult};

/// Contents of `--config`. Every section is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub corpus: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub policy: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    /// Overrides `split.seed` and `train.train.seed` when set.
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub generate: GeneratorConfig,
    pub split: SplitSpec,
    pub train: EnsembleConfig,
    pub keywords: KeywordFilterConfig,
    pub serve: ServiceConfig,
}

/// The shared path and seed flags. Clap has already folded in the
/// environment, so a `Some` here beats the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub corpus: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub policy: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Settings {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Parse(format!("config: {e}")))
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::from_toml(&text).map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))
            }
            None => Ok(Settings::default()),
        }
    }

    pub fn merge(mut self, o: Overrides) -> Self {
        fn pick<T>(slot: &mut Option<T>, v: Option<T>) {
            if v.is_some() {
                *slot = v;
            }
        }
        pick(&mut self.corpus, o.corpus);
        pick(&mut self.model, o.model);
        pick(&mut self.scores, o.scores);
        pick(&mut self.policy, o.policy);
        pick(&mut self.lexicon, o.lexicon);
        pick(&mut self.seed, o.seed);
        pick(&mut self.out, o.out);
        if let Some(seed) = self.seed {
            self.split.seed = seed;
            self.train.train.seed = seed;
        }
        self
    }

    /// Seed for commands that take one; 0 when nothing set it.
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!("{flag} is required")))
    }
}
