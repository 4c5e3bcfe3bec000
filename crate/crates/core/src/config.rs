//! Server configuration file.
//!
//! Relative paths resolve against the directory holding the config file.
//! `OCEAN_BACKEND_URL` and `OCEAN_LISTEN` override the file.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agents::{
    AgentConfig, ChatBackend, HttpChatBackend, MockScript, PromptSet, RetryPolicy, StageParams,
    DEFAULT_HISTORY_CAP,
};
use crate::corpus::{Embedder, HttpEmbedder, MockEmbedder, RetrievalConfig, VectorIndex};
use crate::pipeline::{Backends, Engine, TranscriptStore};
use crate::session::{GateConfig, HttpStt, HttpTts, MockStt, MockTts, SpeechToText, TextToSpeech};
use crate::triggers::{load_rules, standard_rules, VisualCatalog};

pub const ENV_BACKEND_URL: &str = "OCEAN_BACKEND_URL";
pub const ENV_LISTEN: &str = "OCEAN_LISTEN";
const STANDARD_MOCK_SCRIPT: &str = include_str!("../assets/mock_script.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub provider: Provider,
    pub url: Option<String>,
    pub model: Option<String>,
    pub timeout_ms: u64,
    pub mock_latency_ms: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            provider: Provider::Mock,
            url: None,
            model: None,
            timeout_ms: 5_000,
            mock_latency_ms: 0,
        }
    }
}

impl EmbedderConfig {
    pub fn build(&self, dimension: usize) -> Result<Arc<dyn Embedder>, ConfigError> {
        match self.provider {
            Provider::Mock => Ok(Arc::new(
                MockEmbedder::new(dimension).with_latency(Duration::from_millis(self.mock_latency_ms)),
            )),
            Provider::Http => {
                let url = self
                    .url
                    .as_deref()
                    .ok_or_else(|| ConfigError::Invalid("embedder.url is required for provider = \"http\"".into()))?;
                let e = HttpEmbedder::new(
                    url,
                    self.model.clone(),
                    dimension,
                    Duration::from_millis(self.timeout_ms),
                )
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Ok(Arc::new(e))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub mode: Provider,
    pub url: Option<String>,
    pub model: String,
    /// Scripted responses for `mode = "mock"`; the bundled demo script
    /// when absent.
    pub mock_script: Option<PathBuf>,
    pub retry: RetryPolicy,
    pub history_cap: usize,
    pub params: StageParams,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            mode: Provider::Mock,
            url: None,
            model: "local".into(),
            mock_script: None,
            retry: RetryPolicy::default(),
            history_cap: DEFAULT_HISTORY_CAP,
            params: StageParams::default(),
        }
    }
}

impl BackendConfig {
    pub fn build(&self) -> Result<Backends, ConfigError> {
        match self.mode {
            Provider::Mock => {
                let script = match &self.mock_script {
                    Some(p) => MockScript::load(p).map_err(|e| ConfigError::File {
                        path: p.clone(),
                        message: e.to_string(),
                    })?,
                    None => MockScript::parse(STANDARD_MOCK_SCRIPT).expect("bundled script is valid"),
                };
                Ok(Backends::from_script(&script))
            }
            Provider::Http => {
                let url = self
                    .url
                    .as_deref()
                    .ok_or_else(|| ConfigError::Invalid("backend.url is required for mode = \"http\"".into()))?;
                let b: Arc<dyn ChatBackend> = Arc::new(
                    HttpChatBackend::new(url, self.model.clone())
                        .map_err(|e| ConfigError::Invalid(e.to_string()))?,
                );
                Ok(Backends::shared(b))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeechConfig {
    pub stt: Provider,
    pub stt_url: Option<String>,
    pub tts: Provider,
    pub tts_url: Option<String>,
    pub timeout_ms: u64,
    pub mock_stt_latency_ms: u64,
    pub mock_tts_latency_ms: u64,
}

impl Default for SpeechConfig {
    fn default() -> Self {
        SpeechConfig {
            stt: Provider::Mock,
            stt_url: None,
            tts: Provider::Mock,
            tts_url: None,
            timeout_ms: 5_000,
            mock_stt_latency_ms: 0,
            mock_tts_latency_ms: 0,
        }
    }
}

impl SpeechConfig {
    pub fn build_stt(&self) -> Result<Arc<dyn SpeechToText>, ConfigError> {
        Ok(match self.stt {
            Provider::Mock => {
                Arc::new(MockStt::new().with_latency(Duration::from_millis(self.mock_stt_latency_ms)))
            }
            Provider::Http => Arc::new(HttpStt::new(
                self.stt_url
                    .clone()
                    .ok_or_else(|| ConfigError::Invalid("speech.stt_url is required for stt = \"http\"".into()))?,
                Duration::from_millis(self.timeout_ms),
            )),
        })
    }

    pub fn build_tts(&self) -> Result<Arc<dyn TextToSpeech>, ConfigError> {
        Ok(match self.tts {
            Provider::Mock => {
                Arc::new(MockTts::new().with_latency(Duration::from_millis(self.mock_tts_latency_ms)))
            }
            Provider::Http => Arc::new(HttpTts::new(
                self.tts_url
                    .clone()
                    .ok_or_else(|| ConfigError::Invalid("speech.tts_url is required for tts = \"http\"".into()))?,
                Duration::from_millis(self.timeout_ms),
            )),
        })
    }
}

/// A physical station: a sensor feed and a microphone bound to a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationConfig {
    pub id: String,
    /// TCP address accepting `D <cm>` lines.
    pub sensor_listen: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: String,
    pub index: PathBuf,
    /// Bundled catalog when absent.
    pub catalog: Option<PathBuf>,
    /// Bundled rules when absent; reload then has nothing to re-read.
    pub rules: Option<PathBuf>,
    /// Bundled prompts when absent.
    pub prompts: Option<PathBuf>,
    pub persist_dir: PathBuf,
    pub event_buffer: usize,
    pub retrieval: RetrievalConfig,
    pub embedder: EmbedderConfig,
    pub backend: BackendConfig,
    pub gate: GateConfig,
    pub speech: SpeechConfig,
    #[serde(rename = "station")]
    pub stations: Vec<StationConfig>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            listen: "127.0.0.1:8088".into(),
            index: PathBuf::from("data/ocean.idx"),
            catalog: None,
            rules: None,
            prompts: None,
            persist_dir: PathBuf::from("var"),
            event_buffer: 256,
            retrieval: RetrievalConfig::default(),
            embedder: EmbedderConfig::default(),
            backend: BackendConfig::default(),
            gate: GateConfig::default(),
            speech: SpeechConfig::default(),
            stations: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn file_error(path: &Path, e: impl std::fmt::Display) -> ConfigError {
    ConfigError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Reads, resolves paths, applies environment overrides and validates.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| file_error(path, e))?;
        let mut cfg: ServerConfig = toml::from_str(&text).map_err(|e| file_error(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.apply_env(|k| std::env::var(k).ok());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.index);
        resolve(base, &mut self.persist_dir);
        for p in [
            &mut self.catalog,
            &mut self.rules,
            &mut self.prompts,
            &mut self.backend.mock_script,
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(url) = get(ENV_BACKEND_URL).filter(|s| !s.is_empty()) {
            self.backend.url = Some(url);
            self.backend.mode = Provider::Http;
        }
        if let Some(listen) = get(ENV_LISTEN).filter(|s| !s.is_empty()) {
            self.listen = listen;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.listen
            .parse::<std::net::SocketAddr>()
            .map_err(|e| ConfigError::Invalid(format!("listen `{}`: {e}", self.listen)))?;
        self.retrieval.validate().map_err(ConfigError::Invalid)?;
        self.gate.validate().map_err(ConfigError::Invalid)?;
        for (name, p) in [("decider", &self.backend.params.decider), ("rewriter", &self.backend.params.rewriter), ("responder", &self.backend.params.responder)] {
            p.validate()
                .map_err(|e| ConfigError::Invalid(format!("backend.params.{name}: {e}")))?;
        }
        if self.event_buffer == 0 {
            return Err(ConfigError::Invalid("event_buffer must be at least 1".into()));
        }
        let readable = |p: &Path| std::fs::File::open(p).map(drop).map_err(|e| file_error(p, e));
        readable(&self.index)?;
        for p in [&self.catalog, &self.rules, &self.prompts, &self.backend.mock_script]
            .into_iter()
            .flatten()
        {
            readable(p)?;
        }
        if self.backend.mode == Provider::Http && self.backend.url.is_none() {
            return Err(ConfigError::Invalid("backend.url is required for mode = \"http\"".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for s in &self.stations {
            if !crate::pipeline::valid_session_id(&s.id) {
                return Err(ConfigError::Invalid(format!("station id `{}` is not a valid session id", s.id)));
            }
            if !ids.insert(&s.id) {
                return Err(ConfigError::Invalid(format!("duplicate station `{}`", s.id)));
            }
        }
        Ok(())
    }

    pub fn agent_config(&self) -> Result<AgentConfig, ConfigError> {
        let prompts = match &self.prompts {
            Some(p) => PromptSet::load(p).map_err(|e| file_error(p, e))?,
            None => PromptSet::standard(),
        };
        Ok(AgentConfig {
            prompts,
            params: self.backend.params.clone(),
            retry: self.backend.retry,
        })
    }

    pub fn catalog(&self) -> Result<VisualCatalog, ConfigError> {
        match &self.catalog {
            Some(p) => VisualCatalog::load(p).map_err(|e| file_error(p, e)),
            None => Ok(VisualCatalog::standard()),
        }
    }

    /// Builds the engine. `persist` enables the transcript store.
    pub fn build_engine(&self, persist: bool) -> Result<Engine, ConfigError> {
        let index = VectorIndex::load(&self.index).map_err(|e| file_error(&self.index, e))?;
        if index.dimension() != self.retrieval.dimension {
            return Err(ConfigError::Invalid(format!(
                "retrieval.dimension is {} but the index has dimension {}",
                self.retrieval.dimension,
                index.dimension()
            )));
        }
        let rules = match &self.rules {
            Some(p) => load_rules(p).map_err(|e| file_error(p, e))?,
            None => standard_rules(),
        };
        let embedder = self.embedder.build(index.dimension())?;
        let mut engine = Engine::new(index, self.catalog()?, rules, embedder, self.backend.build()?)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?
            .with_tts(self.speech.build_tts()?)
            .with_agents(self.agent_config()?)
            .with_history_cap(self.backend.history_cap)
            .with_retrieval(self.retrieval)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(p) = &self.rules {
            engine = engine.with_rules_path(p);
        }
        if persist {
            let dir = self.persist_dir.join("transcripts");
            let store = TranscriptStore::open(&dir).map_err(|e| file_error(&dir, e))?;
            engine = engine.with_store(store);
        }
        Ok(engine)
    }
}
