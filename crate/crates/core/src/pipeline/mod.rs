//! End-to-end query orchestration.
//!
//! [`Engine`] owns the shared, swappable resources (index, catalog, trigger
//! rules) and the stage backends. A run takes a snapshot of those resources
//! up front, so a rules reload never changes a run already in flight.

mod events;
mod subtitles;
mod transcript;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use events::{
    state_change_payload, EventSink, EventType, LayerView, NullSink, SessionView, StreamEvent,
    VecSink,
};
pub use subtitles::{subtitle_cues, SubtitleCue, MAX_CUE_WORDS};
pub use transcript::{
    read_transcript, replay_records, ReplayMismatch, ReplayReport, TranscriptError, TranscriptRecord,
    TranscriptStore, TRANSCRIPT_FORMAT, valid_session_id,
};

use crate::agents::{
    decide_visual, respond, rewrite_query, AgentConfig, AgentTrace, ChatBackend, ConversationHistory,
    MockScript, Stage, VisualSelection, DEFAULT_HISTORY_CAP,
};
use crate::corpus::{retrieve, Embedder, RetrievalConfig, RetrievalHit, VectorIndex};
use crate::session::{synthesize_or_silent, AudioHandle, MockTts, TextToSpeech};
use crate::triggers::{
    load_rules, parse_rules, resolve_visual, CooldownState, KeywordMatcher, RulesError, TriggerEvent,
    TriggerRule, VisualCatalog, VisualCatalogEntry,
};

/// Timing keys, in execution order.
pub const STAGES: [&str; 6] = ["decide", "rewrite", "retrieve", "respond", "scan", "synthesize"];
pub const TOTAL_TIMING: &str = "total";

/// One backend per agent stage. They may all be the same client.
#[derive(Clone)]
pub struct Backends {
    pub decider: Arc<dyn ChatBackend>,
    pub rewriter: Arc<dyn ChatBackend>,
    pub responder: Arc<dyn ChatBackend>,
}

impl Backends {
    pub fn shared(backend: Arc<dyn ChatBackend>) -> Self {
        Backends {
            decider: backend.clone(),
            rewriter: backend.clone(),
            responder: backend,
        }
    }

    pub fn from_script(script: &MockScript) -> Self {
        Backends {
            decider: Arc::new(script.backend_for(Stage::Decider)),
            rewriter: Arc::new(script.backend_for(Stage::Rewriter)),
            responder: Arc::new(script.backend_for(Stage::Responder)),
        }
    }
}

/// Compiled trigger rules with a monotonically increasing version.
#[derive(Debug)]
pub struct RuleSet {
    pub version: u64,
    pub matcher: KeywordMatcher,
}

/// Resources one run sees from start to finish.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub index: Arc<VectorIndex>,
    pub catalog: Arc<VisualCatalog>,
    pub rules: Arc<RuleSet>,
}

/// Per-session state the pipeline reads and updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionContext {
    pub session_id: String,
    pub history: ConversationHistory,
    pub cooldowns: CooldownState,
    pub runs: u64,
}

impl SessionContext {
    pub fn new(session_id: impl Into<String>, history_cap: usize) -> Self {
        SessionContext {
            session_id: session_id.into(),
            history: ConversationHistory::with_cap(history_cap),
            cooldowns: CooldownState::default(),
            runs: 0,
        }
    }
}

/// The full trace of one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub session_id: String,
    pub run: u64,
    pub at_ms: u64,
    pub query: String,
    pub rewritten: String,
    pub hits: Vec<RetrievalHit>,
    pub visual: VisualSelection,
    pub visual_entry: Option<VisualCatalogEntry>,
    pub response_text: String,
    pub events: Vec<TriggerEvent>,
    pub subtitles: Vec<SubtitleCue>,
    pub audio: AudioHandle,
    pub rules_version: u64,
    /// Stage name to wall time in milliseconds, plus `total`.
    pub timings: BTreeMap<String, f64>,
    pub traces: Vec<AgentTrace>,
    /// Non-agent stages that fell back to a default, with the reason.
    #[serde(default)]
    pub degraded: BTreeMap<String, String>,
}

impl PipelineResult {
    /// JSON with every wall-clock measurement removed. Two runs over the
    /// same inputs and mocks produce identical strings.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("result serializes");
        if let Value::Object(map) = &mut v {
            map.remove("timings");
            if let Some(Value::Array(traces)) = map.get_mut("traces") {
                for t in traces {
                    if let Value::Object(t) = t {
                        t.remove("duration_ms");
                    }
                }
            }
        }
        serde_json::to_string(&v).expect("value serializes")
    }

    pub fn total_ms(&self) -> f64 {
        self.timings.get(TOTAL_TIMING).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("persisting transcript: {0}")]
    Storage(#[from] TranscriptError),
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("embedder dimension {embedder} does not match index dimension {index}")]
    Dimension { embedder: usize, index: usize },
    #[error(transparent)]
    Rules(#[from] RulesError),
    #[error("invalid retrieval config: {0}")]
    Retrieval(String),
}

pub struct Engine {
    embedder: Arc<dyn Embedder>,
    backends: Backends,
    tts: Arc<dyn TextToSpeech>,
    agents: AgentConfig,
    retrieval: RetrievalConfig,
    history_cap: usize,
    resources: RwLock<Snapshot>,
    rules_path: Option<PathBuf>,
    store: Option<TranscriptStore>,
}

impl Engine {
    pub fn new(
        index: VectorIndex,
        catalog: VisualCatalog,
        rules: Vec<TriggerRule>,
        embedder: Arc<dyn Embedder>,
        backends: Backends,
    ) -> Result<Self, EngineError> {
        if embedder.dimension() != index.dimension() {
            return Err(EngineError::Dimension {
                embedder: embedder.dimension(),
                index: index.dimension(),
            });
        }
        let matcher = KeywordMatcher::new(rules)?;
        let retrieval = RetrievalConfig {
            dimension: index.dimension(),
            ..RetrievalConfig::default()
        };
        Ok(Engine {
            embedder,
            backends,
            tts: Arc::new(MockTts::new()),
            agents: AgentConfig::default(),
            retrieval,
            history_cap: DEFAULT_HISTORY_CAP,
            resources: RwLock::new(Snapshot {
                index: Arc::new(index),
                catalog: Arc::new(catalog),
                rules: Arc::new(RuleSet { version: 1, matcher }),
            }),
            rules_path: None,
            store: None,
        })
    }

    pub fn with_tts(mut self, tts: Arc<dyn TextToSpeech>) -> Self {
        self.tts = tts;
        self
    }

    pub fn with_agents(mut self, agents: AgentConfig) -> Self {
        self.agents = agents;
        self
    }

    /// `dimension` is taken from the index.
    pub fn with_retrieval(mut self, retrieval: RetrievalConfig) -> Result<Self, EngineError> {
        retrieval.validate().map_err(EngineError::Retrieval)?;
        let dim = self.snapshot().index.dimension();
        if retrieval.dimension != dim {
            return Err(EngineError::Dimension {
                embedder: retrieval.dimension,
                index: dim,
            });
        }
        self.retrieval = retrieval;
        Ok(self)
    }

    pub fn with_history_cap(mut self, cap: usize) -> Self {
        self.history_cap = cap;
        self
    }

    pub fn with_rules_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.rules_path = Some(path.into());
        self
    }

    pub fn with_store(mut self, store: TranscriptStore) -> Self {
        self.store = Some(store);
        self
    }

    pub fn retrieval(&self) -> &RetrievalConfig {
        &self.retrieval
    }

    pub fn agents(&self) -> &AgentConfig {
        &self.agents
    }

    pub fn history_cap(&self) -> usize {
        self.history_cap
    }

    pub fn rules_path(&self) -> Option<&Path> {
        self.rules_path.as_deref()
    }

    pub fn store(&self) -> Option<&TranscriptStore> {
        self.store.as_ref()
    }

    pub fn new_session(&self, session_id: impl Into<String>) -> SessionContext {
        SessionContext::new(session_id, self.history_cap)
    }

    pub fn snapshot(&self) -> Snapshot {
        self.resources.read().unwrap().clone()
    }

    pub fn catalog(&self) -> Arc<VisualCatalog> {
        self.snapshot().catalog
    }

    pub fn rules_version(&self) -> u64 {
        self.snapshot().rules.version
    }

    /// Compiles `rules` and swaps them in. Runs already under way keep the
    /// rules they started with.
    pub fn replace_rules(&self, rules: Vec<TriggerRule>) -> Result<u64, RulesError> {
        let matcher = KeywordMatcher::new(rules)?;
        let mut res = self.resources.write().unwrap();
        let version = res.rules.version + 1;
        res.rules = Arc::new(RuleSet { version, matcher });
        Ok(version)
    }

    pub fn reload_rules_from_str(&self, text: &str) -> Result<u64, RulesError> {
        self.replace_rules(parse_rules(text)?)
    }

    /// Re-reads the configured rules file. On error the old rules stay.
    pub fn reload_rules(&self) -> Result<u64, RulesError> {
        let path = self.rules_path.as_deref().ok_or_else(|| RulesError::Invalid {
            line: 0,
            message: "no rules file configured".into(),
        })?;
        self.reload_rules_from_path(path)
    }

    pub fn reload_rules_from_path(&self, path: &Path) -> Result<u64, RulesError> {
        self.replace_rules(load_rules(path)?)
    }

    pub fn replace_index(&self, index: VectorIndex) -> Result<(), EngineError> {
        if index.dimension() != self.embedder.dimension() {
            return Err(EngineError::Dimension {
                embedder: self.embedder.dimension(),
                index: index.dimension(),
            });
        }
        self.resources.write().unwrap().index = Arc::new(index);
        Ok(())
    }

    /// Runs one query for `ctx`. `at_ms` is the caller's clock; it drives
    /// trigger cooldowns and is recorded for replay.
    pub fn run(
        &self,
        ctx: &mut SessionContext,
        query: &str,
        at_ms: u64,
        sink: &dyn EventSink,
    ) -> Result<PipelineResult, PipelineError> {
        let query = query.trim();
        if query.is_empty() {
            return Err(PipelineError::EmptyQuery);
        }
        let snap = self.snapshot();
        let sid = ctx.session_id.clone();
        let history_before = ctx.history.clone();
        let cooldowns_before = ctx.cooldowns.clone();
        let mut timings = BTreeMap::new();
        let mut traces = Vec::with_capacity(3);
        let mut degraded = BTreeMap::new();
        let started = Instant::now();

        let timed = |timings: &mut BTreeMap<String, f64>, stage: &str, t: Instant| {
            let ms = t.elapsed().as_secs_f64() * 1e3;
            timings.insert(stage.to_string(), ms);
            sink.emit(
                &sid,
                EventType::StageTiming,
                json!({ "stage": stage, "duration_ms": ms, "at_ms": at_ms }),
            );
        };

        // The decider sees the raw query, before any rewriting.
        let t = Instant::now();
        let (visual, trace) = decide_visual(self.backends.decider.as_ref(), query, &snap.catalog, &self.agents);
        traces.push(trace);
        let visual_entry = resolve_visual(&visual.token, &snap.catalog).cloned();
        timed(&mut timings, "decide", t);
        sink.emit(
            &sid,
            EventType::VisualSelected,
            json!({
                "token": visual.token,
                "rationale": visual.rationale_text,
                "title": visual_entry.as_ref().map(|e| e.title.clone()),
                "kind": visual_entry.as_ref().map(|e| e.kind),
                "source": "decider",
                "at_ms": at_ms,
            }),
        );

        let t = Instant::now();
        let (rewritten, trace) = rewrite_query(self.backends.rewriter.as_ref(), query, &self.agents);
        traces.push(trace);
        timed(&mut timings, "rewrite", t);

        let t = Instant::now();
        let hits = match retrieve(&snap.index, self.embedder.as_ref(), &rewritten, &self.retrieval) {
            Ok(h) => h,
            Err(e) => {
                tracing::warn!(error = %e, "retrieval failed, answering without passages");
                degraded.insert("retrieve".to_string(), e.to_string());
                Vec::new()
            }
        };
        timed(&mut timings, "retrieve", t);

        let t = Instant::now();
        let paragraphs: Vec<&str> = hits.iter().map(|h| h.paragraph_text.as_str()).collect();
        let description = visual_entry
            .as_ref()
            .map(|e| format!("{}: {}", e.title.trim(), e.description.trim()));
        let (response_text, trace) = respond(
            self.backends.responder.as_ref(),
            query,
            &paragraphs,
            description.as_deref(),
            &mut ctx.history,
            &self.agents,
        );
        traces.push(trace);
        timed(&mut timings, "respond", t);

        let t = Instant::now();
        let events = snap.rules.matcher.scan_at(&response_text, at_ms, &mut ctx.cooldowns);
        timed(&mut timings, "scan", t);
        for ev in &events {
            let mut payload = serde_json::to_value(ev).expect("event serializes");
            payload["at_ms"] = json!(at_ms);
            sink.emit(&sid, EventType::TriggerEvent, payload);
        }

        let t = Instant::now();
        let (audio, err) = synthesize_or_silent(self.tts.as_ref(), &response_text);
        if let Some(e) = err {
            degraded.insert("synthesize".to_string(), e.to_string());
        }
        let subtitles = subtitle_cues(&response_text, audio.duration_ms);
        timed(&mut timings, "synthesize", t);
        for cue in &subtitles {
            let mut payload = serde_json::to_value(cue).expect("cue serializes");
            payload["at_ms"] = json!(at_ms);
            payload["audio_duration_ms"] = json!(audio.duration_ms);
            sink.emit(&sid, EventType::Subtitle, payload);
        }

        timings.insert(TOTAL_TIMING.to_string(), started.elapsed().as_secs_f64() * 1e3);
        let result = PipelineResult {
            session_id: sid.clone(),
            run: ctx.runs,
            at_ms,
            query: query.to_string(),
            rewritten,
            hits,
            visual,
            visual_entry,
            response_text,
            events,
            subtitles,
            audio,
            rules_version: snap.rules.version,
            timings,
            traces,
            degraded,
        };
        if let Some(store) = &self.store {
            store.append(&TranscriptRecord {
                format: TRANSCRIPT_FORMAT,
                session_id: sid,
                run: ctx.runs,
                at_ms,
                query: query.to_string(),
                history_before,
                cooldowns_before,
                result: result.clone(),
            })?;
        }
        ctx.runs += 1;
        Ok(result)
    }
}

/// Free-function form of [`Engine::run`].
pub fn run_pipeline(
    engine: &Engine,
    ctx: &mut SessionContext,
    query: &str,
    at_ms: u64,
    sink: &dyn EventSink,
) -> Result<PipelineResult, PipelineError> {
    engine.run(ctx, query, at_ms, sink)
}
