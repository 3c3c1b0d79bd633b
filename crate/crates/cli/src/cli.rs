//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tagtriage_core::attribution::INTERNAL_EMBEDDING_RANK;
use tagtriage_core::metrics::DEFAULT_DRIFT_TOLERANCE;
use tagtriage_core::IssueTag;

use crate::settings::Overrides;

#[derive(Debug, Parser)]
#[command(
    name = "tagtriage",
    version,
    about = "Issue-tag triage: generate, train, evaluate, review and calibrate"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command. Each falls back to its `TAGTRIAGE_*`
/// variable, then to the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML config file
    #[arg(long, global = true, env = "TAGTRIAGE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Corpus JSON lines
    #[arg(long, global = true, env = "TAGTRIAGE_CORPUS")]
    pub corpus: Option<PathBuf>,
    /// Trained ensemble JSON
    #[arg(long, global = true, env = "TAGTRIAGE_MODEL")]
    pub model: Option<PathBuf>,
    /// Precomputed scores, `{"id", "scores"}` JSON lines
    #[arg(long, global = true, env = "TAGTRIAGE_SCORES")]
    pub scores: Option<PathBuf>,
    /// Threshold policy JSON
    #[arg(long, global = true, env = "TAGTRIAGE_POLICY")]
    pub policy: Option<PathBuf>,
    /// Triage lexicon JSON
    #[arg(long, global = true, env = "TAGTRIAGE_LEXICON")]
    pub lexicon: Option<PathBuf>,
    #[arg(long, global = true, env = "TAGTRIAGE_SEED")]
    pub seed: Option<u64>,
    /// Output file or directory, depending on the command
    #[arg(long, global = true, env = "TAGTRIAGE_OUT")]
    pub out: Option<PathBuf>,
}

impl GlobalArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            corpus: self.corpus.clone(),
            model: self.model.clone(),
            scores: self.scores.clone(),
            policy: self.policy.clone(),
            lexicon: self.lexicon.clone(),
            seed: self.seed,
            out: self.out.clone(),
        }
    }
}

/// Which part of the corpus a command reads. Partitions come from the
/// configured split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSel {
    All,
    Train,
    Validation,
    Test,
}

fn parse_tag(s: &str) -> Result<IssueTag, String> {
    s.parse::<IssueTag>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Write a synthetic corpus to --out
    Generate {
        /// Overrides `generate.size`
        #[arg(long)]
        size: Option<usize>,
    },
    /// Corpus statistics as JSON (to --out, or stdout)
    Stats {
        #[arg(long, default_value_t = tagtriage_core::corpus::DEFAULT_TOKEN_CAP)]
        cap: usize,
    },
    /// Train the ensemble on the train split and write it to --out
    Train,
    /// Score conversations and write `{"id", "scores"}` lines to --out
    Score {
        #[arg(long, value_enum, default_value_t = SplitSel::All)]
        split: SplitSel,
    },
    /// Evaluate at 0.5, 0.25, the updated policy and --policy if given
    Evaluate {
        #[arg(long, value_enum, default_value_t = SplitSel::All)]
        split: SplitSel,
    },
    /// Subgroup performance over surveyed conversations
    Fairness {
        #[arg(long, value_enum, default_value_t = SplitSel::All)]
        split: SplitSel,
    },
    /// Agreement matrix and consensus scores from reviewer annotations
    Consensus {
        /// Reviewer annotations, JSON lines
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Attribution keywords for one tag
    Keywords {
        #[arg(long, value_parser = parse_tag)]
        tag: IssueTag,
        /// Integrated-gradients steps
        #[arg(long, default_value_t = tagtriage_core::attribution::DEFAULT_IG_STEPS)]
        steps: usize,
        /// Attribution cutoff; the per-conversation 90th percentile when unset
        #[arg(long)]
        threshold: Option<f64>,
        /// Keep only the most frequent keywords
        #[arg(long)]
        top: Option<usize>,
        #[arg(long, value_enum, default_value_t = SplitSel::All)]
        split: SplitSel,
    },
    /// Keyword bigram graph from a `keywords` run
    Bigrams {
        /// keywords.json from the keywords command
        #[arg(long)]
        keywords: PathBuf,
        /// Minimum edge weight; the tag preset, or 1
        #[arg(long)]
        min_count: Option<usize>,
    },
    /// Three-component projection of keyword embeddings
    Project {
        /// keywords.json from the keywords command
        #[arg(long)]
        keywords: PathBuf,
        /// `word v1 .. vd` vectors; trained from --corpus when unset
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[arg(long, default_value_t = INTERNAL_EMBEDDING_RANK)]
        rank: usize,
    },
    /// Development against silent-test batch
    Drift {
        #[arg(long, default_value_t = DEFAULT_DRIFT_TOLERANCE)]
        tolerance: f64,
    },
    /// Global threshold sweep, or per-class refinement from blind annotations
    Calibrate {
        /// Blind annotations; switches to per-class refinement
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitSel::Validation)]
        split: SplitSel,
        #[arg(long, default_value_t = 0.05)]
        lo: f64,
        #[arg(long, default_value_t = 0.95)]
        hi: f64,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
    },
    /// Run the review service
    Serve {
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        /// Append-only event log; in memory when unset
        #[arg(long)]
        event_log: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::Stats { .. } => "stats",
            Command::Train => "train",
            Command::Score { .. } => "score",
            Command::Evaluate { .. } => "evaluate",
            Command::Fairness { .. } => "fairness",
            Command::Consensus { .. } => "consensus",
            Command::Keywords { .. } => "keywords",
            Command::Bigrams { .. } => "bigrams",
            Command::Project { .. } => "project",
            Command::Drift { .. } => "drift",
            Command::Calibrate { .. } => "calibrate",
            Command::Serve { .. } => "serve",
        }
    }
}
