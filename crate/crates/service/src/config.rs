//! Service configuration: one TOML file, then environment overrides.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tagtriage_core::corpus::parse_corpus;
use tagtriage_core::decision::ThresholdPolicy;
use tagtriage_core::scorer::{EnsembleScorer, Scorer};
use tagtriage_core::triage::TriageLexicon;

use crate::error::ServiceError;
use crate::events::EventLog;
use crate::service::{ReviewService, ServiceContext};

pub const ENV_PORT: &str = "TAGTRIAGE_PORT";
pub const ENV_CORPUS: &str = "TAGTRIAGE_CORPUS";
pub const ENV_MODEL: &str = "TAGTRIAGE_MODEL";
pub const ENV_LEXICON: &str = "TAGTRIAGE_LEXICON";

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_GLOBAL_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub corpus: Option<PathBuf>,
    pub model: Option<PathBuf>,
    /// Built-in lexicon when unset.
    pub lexicon: Option<PathBuf>,
    /// Policy JSON; a global 0.25 threshold when unset.
    pub policy: Option<PathBuf>,
    /// In-memory log when unset.
    pub event_log: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: DEFAULT_PORT,
            corpus: None,
            model: None,
            lexicon: None,
            policy: None,
            event_log: None,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::BadRequest(format!("config: {e}")))
    }

    /// Read `path` (defaults when `None`), then apply overrides from `env`.
    pub fn load(path: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, ServiceError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ServiceError::BadRequest(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => ServiceConfig::default(),
        };
        cfg.apply_env(env)?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, env: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        if let Some(p) = env(ENV_PORT) {
            self.port = p
                .parse()
                .map_err(|_| ServiceError::BadRequest(format!("{ENV_PORT}={p:?} is not a port number")))?;
        }
        if let Some(p) = env(ENV_CORPUS) {
            self.corpus = Some(p.into());
        }
        if let Some(p) = env(ENV_MODEL) {
            self.model = Some(p.into());
        }
        if let Some(p) = env(ENV_LEXICON) {
            self.lexicon = Some(p.into());
        }
        Ok(())
    }

    pub fn addr(&self) -> Result<SocketAddr, ServiceError> {
        format!("{}:{}", self.host, self.port)
            .parse()
            .map_err(|e| ServiceError::BadRequest(format!("bad listen address: {e}")))
    }

    /// Load every configured file and replay the event log.
    pub fn build(&self) -> Result<ReviewService, ServiceError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|e| ServiceError::BadRequest(format!("{}: {e}", p.display())))
        };
        let corpus = match &self.corpus {
            Some(p) => {
                let f =
                    std::fs::File::open(p).map_err(|e| ServiceError::BadRequest(format!("{}: {e}", p.display())))?;
                parse_corpus(std::io::BufReader::new(f))
                    .map_err(|e| ServiceError::BadRequest(format!("{}: {e}", p.display())))?
            }
            None => Vec::new(),
        };
        let scorer = match &self.model {
            Some(p) => Some(Arc::new(
                EnsembleScorer::load(p).map_err(|e| ServiceError::BadRequest(format!("{}: {e}", p.display())))?,
            ) as Arc<dyn Scorer>),
            None => None,
        };
        let lexicon = match &self.lexicon {
            Some(p) => TriageLexicon::from_json(&read(p)?)
                .map_err(|e| ServiceError::BadRequest(format!("{}: {e}", p.display())))?,
            None => TriageLexicon::builtin(),
        };
        let initial_policy = match &self.policy {
            Some(p) => ThresholdPolicy::from_json(&read(p)?)
                .map_err(|e| ServiceError::BadRequest(format!("{}: {e}", p.display())))?,
            None => ThresholdPolicy::global(DEFAULT_GLOBAL_THRESHOLD).expect("constant in range"),
        };
        let log = match &self.event_log {
            Some(p) => EventLog::open(p)?,
            None => EventLog::in_memory(),
        };
        ReviewService::new(
            ServiceContext {
                corpus,
                scorer,
                lexicon,
                initial_policy,
            },
            log,
        )
    }
}

/// Serve until interrupted.
pub async fn serve(svc: Arc<ReviewService>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, crate::http::router(svc))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
