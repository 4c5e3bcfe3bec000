//! Python bindings: corpus indexing, grammar checks, trigger scanning, the
//! proximity gate and the full query engine. Structured results come back
//! as plain dicts and lists.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use oceanvoice_core::agents::{MockScript, Stage};
use oceanvoice_core::config::ServerConfig;
use oceanvoice_core::corpus::{
    self, ingest_corpus, retrieve, HnswParams, MockEmbedder, RetrievalConfig, VectorIndex,
    DEFAULT_DIMENSION, DEFAULT_TOP_K,
};
use oceanvoice_core::grammar::{self, grammar_from_tokens, parse_gbnf};
use oceanvoice_core::pipeline::{read_transcript, replay_records, Backends, NullSink, SessionContext};
use oceanvoice_core::session::{GateConfig, GateInput, GateMachine, ProximityReading};
use oceanvoice_core::triggers::{
    load_rules, parse_rules, standard_rules, CooldownState, VisualCatalog,
};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

#[pyfunction]
fn split_paragraphs(text: &str) -> Vec<String> {
    corpus::split_paragraphs(text)
}

#[pyfunction]
fn split_sentences(paragraph: &str) -> Vec<String> {
    corpus::split_sentences(paragraph)
}

/// Sentence index over a corpus, embedded with the built-in mock embedder.
#[pyclass(name = "Index", module = "oceanvoice")]
struct PyIndex {
    index: VectorIndex,
    embedder: MockEmbedder,
}

#[pymethods]
impl PyIndex {
    #[staticmethod]
    #[pyo3(signature = (corpus_dir, dim = DEFAULT_DIMENSION))]
    fn build(py: Python<'_>, corpus_dir: PathBuf, dim: usize) -> PyResult<Self> {
        let embedder = MockEmbedder::new(dim);
        let index = py
            .detach(|| ingest_corpus(&corpus_dir, &embedder, HnswParams::default()))
            .map_err(io_err)?;
        Ok(PyIndex { index, embedder })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let index = VectorIndex::load(&path).map_err(io_err)?;
        let embedder = MockEmbedder::new(index.dimension());
        Ok(PyIndex { index, embedder })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.index.save(&path).map_err(io_err)
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.index.dimension()
    }

    fn __len__(&self) -> usize {
        self.index.len()
    }

    /// Best sentence from each of the top `k` paragraphs.
    #[pyo3(signature = (query, k = DEFAULT_TOP_K, exact = false))]
    fn search(&self, py: Python<'_>, query: &str, k: usize, exact: bool) -> PyResult<Py<PyAny>> {
        let cfg = RetrievalConfig {
            k,
            ann_enabled: !exact,
            dimension: self.index.dimension(),
        };
        cfg.validate().map_err(value_err)?;
        let hits = retrieve(&self.index, &self.embedder, query, &cfg).map_err(value_err)?;
        to_py(py, &hits)
    }
}

#[pyclass(name = "Grammar", module = "oceanvoice")]
struct PyGrammar {
    inner: grammar::Grammar,
}

#[pymethods]
impl PyGrammar {
    #[new]
    fn new(gbnf: &str) -> PyResult<Self> {
        Ok(PyGrammar {
            inner: parse_gbnf(gbnf).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn from_tokens(tokens: Vec<String>) -> PyResult<Self> {
        Ok(PyGrammar {
            inner: grammar_from_tokens(&tokens).map_err(value_err)?,
        })
    }

    fn matches(&self, candidate: &str) -> bool {
        self.inner.matches(candidate)
    }

    fn prefix_valid(&self, prefix: &str) -> bool {
        self.inner.prefix_valid(prefix)
    }

    /// Last whitespace-separated word of `raw_output` the grammar accepts.
    fn extract_token(&self, raw_output: &str) -> Option<String> {
        self.inner.extract_token(raw_output).map(str::to_string)
    }

    fn to_gbnf(&self) -> String {
        self.inner.to_gbnf()
    }
}

/// Keyword triggers with per-rule cooldowns kept between calls.
#[pyclass(name = "KeywordMatcher", module = "oceanvoice")]
struct PyKeywordMatcher {
    inner: oceanvoice_core::triggers::KeywordMatcher,
    cooldowns: CooldownState,
}

#[pymethods]
impl PyKeywordMatcher {
    /// `rules_toml` is the rules file text; the bundled rules when omitted.
    #[new]
    #[pyo3(signature = (rules_toml = None))]
    fn new(rules_toml: Option<&str>) -> PyResult<Self> {
        let rules = match rules_toml {
            Some(text) => parse_rules(text).map_err(value_err)?,
            None => standard_rules(),
        };
        Ok(PyKeywordMatcher {
            inner: oceanvoice_core::triggers::KeywordMatcher::new(rules).map_err(value_err)?,
            cooldowns: CooldownState::default(),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let rules = load_rules(&path).map_err(value_err)?;
        Ok(PyKeywordMatcher {
            inner: oceanvoice_core::triggers::KeywordMatcher::new(rules).map_err(value_err)?,
            cooldowns: CooldownState::default(),
        })
    }

    /// Events in `text`, ignoring cooldowns.
    fn scan(&self, py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.scan(text))
    }

    /// Events in `text` at `at_ms`, honouring and updating cooldowns.
    fn scan_at(&mut self, py: Python<'_>, text: &str, at_ms: u64) -> PyResult<Py<PyAny>> {
        let events = self.inner.scan_at(text, at_ms, &mut self.cooldowns);
        to_py(py, &events)
    }
}

/// The proximity gate. Each method returns the actions it produced.
#[pyclass(name = "Gate", module = "oceanvoice")]
struct PyGate {
    inner: GateMachine,
}

impl PyGate {
    fn feed(&mut self, py: Python<'_>, input: GateInput) -> PyResult<Py<PyAny>> {
        let actions = self.inner.feed(&input);
        to_py(py, &actions)
    }
}

#[pymethods]
impl PyGate {
    #[new]
    #[pyo3(signature = (engage_cm = 50.0, release_cm = 60.0, release_hold_ms = 500, silence_timeout_ms = 5000))]
    fn new(engage_cm: f64, release_cm: f64, release_hold_ms: u64, silence_timeout_ms: u64) -> PyResult<Self> {
        let cfg = GateConfig {
            engage_cm,
            release_cm,
            release_hold: Duration::from_millis(release_hold_ms),
            silence_timeout: Duration::from_millis(silence_timeout_ms),
        };
        cfg.validate().map_err(value_err)?;
        Ok(PyGate {
            inner: GateMachine::new(cfg),
        })
    }

    #[getter]
    fn state(&self) -> &'static str {
        self.inner.state().as_str()
    }

    fn reading(&mut self, py: Python<'_>, distance_cm: f64, at_ms: u64) -> PyResult<Py<PyAny>> {
        if !distance_cm.is_finite() || distance_cm < 0.0 {
            return Err(value_err(format!("invalid distance {distance_cm}")));
        }
        self.feed(
            py,
            GateInput::Reading(ProximityReading {
                distance_cm,
                timestamp_ms: at_ms,
            }),
        )
    }

    fn transcript_ready(&mut self, py: Python<'_>, text: String, at_ms: u64) -> PyResult<Py<PyAny>> {
        self.feed(py, GateInput::TranscriptReady { text, at_ms })
    }

    fn pipeline_done(&mut self, py: Python<'_>, at_ms: u64) -> PyResult<Py<PyAny>> {
        self.feed(py, GateInput::PipelineDone { at_ms })
    }

    fn response_done(&mut self, py: Python<'_>, at_ms: u64) -> PyResult<Py<PyAny>> {
        self.feed(py, GateInput::ResponseDone { at_ms })
    }

    fn tick(&mut self, py: Python<'_>, at_ms: u64) -> PyResult<Py<PyAny>> {
        self.feed(py, GateInput::Tick { at_ms })
    }
}

/// The full query pipeline with per-session history and cooldowns.
#[pyclass(name = "Engine", module = "oceanvoice")]
struct PyEngine {
    inner: oceanvoice_core::pipeline::Engine,
    sessions: HashMap<String, SessionContext>,
}

#[pymethods]
impl PyEngine {
    /// Builds from a server config file, without transcript persistence
    /// unless `persist` is set.
    #[staticmethod]
    #[pyo3(signature = (path, persist = false))]
    fn from_config(py: Python<'_>, path: PathBuf, persist: bool) -> PyResult<Self> {
        let engine = py
            .detach(|| ServerConfig::load(&path).and_then(|c| c.build_engine(persist)))
            .map_err(value_err)?;
        Ok(PyEngine {
            inner: engine,
            sessions: HashMap::new(),
        })
    }

    /// An offline engine over `corpus_dir` with scripted mock backends.
    /// `mock_script` is the script text; `rules` the rules file text.
    #[staticmethod]
    #[pyo3(signature = (corpus_dir, mock_script, rules = None, latency_ms = 0))]
    fn offline(
        py: Python<'_>,
        corpus_dir: PathBuf,
        mock_script: &str,
        rules: Option<&str>,
        latency_ms: u64,
    ) -> PyResult<Self> {
        let mut script = MockScript::parse(mock_script).map_err(value_err)?;
        for stage in Stage::ALL {
            script.set_latency(stage, Duration::from_millis(latency_ms));
        }
        let rules = match rules {
            Some(text) => parse_rules(text).map_err(value_err)?,
            None => standard_rules(),
        };
        let embedder = Arc::new(MockEmbedder::new(DEFAULT_DIMENSION));
        let index = py
            .detach(|| ingest_corpus(&corpus_dir, embedder.as_ref(), HnswParams::default()))
            .map_err(io_err)?;
        let engine = oceanvoice_core::pipeline::Engine::new(
            index,
            VisualCatalog::standard(),
            rules,
            embedder,
            Backends::from_script(&script),
        )
        .map_err(value_err)?;
        Ok(PyEngine {
            inner: engine,
            sessions: HashMap::new(),
        })
    }

    /// Runs one query and returns the full result as a dict.
    #[pyo3(signature = (session_id, text, at_ms = 0))]
    fn query(&mut self, py: Python<'_>, session_id: &str, text: &str, at_ms: u64) -> PyResult<Py<PyAny>> {
        let engine = &self.inner;
        let ctx = self
            .sessions
            .entry(session_id.to_string())
            .or_insert_with(|| engine.new_session(session_id));
        let result = py
            .detach(|| engine.run(ctx, text, at_ms, &NullSink))
            .map_err(value_err)?;
        to_py(py, &result)
    }

    /// Same as `query`, but returns the timing-free canonical JSON string.
    #[pyo3(signature = (session_id, text, at_ms = 0))]
    fn query_canonical(&mut self, py: Python<'_>, session_id: &str, text: &str, at_ms: u64) -> PyResult<String> {
        let engine = &self.inner;
        let ctx = self
            .sessions
            .entry(session_id.to_string())
            .or_insert_with(|| engine.new_session(session_id));
        let result = py
            .detach(|| engine.run(ctx, text, at_ms, &NullSink))
            .map_err(value_err)?;
        Ok(result.canonical_json())
    }

    fn reset_session(&mut self, session_id: &str) {
        self.sessions.remove(session_id);
    }

    fn catalog(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.catalog().entries())
    }

    #[getter]
    fn rules_version(&self) -> u64 {
        self.inner.rules_version()
    }

    /// Swaps in new trigger rules; returns the new version.
    fn reload_rules(&self, rules_toml: &str) -> PyResult<u64> {
        self.inner.reload_rules_from_str(rules_toml).map_err(value_err)
    }

    /// Re-runs a JSONL transcript and reports how many records matched.
    fn replay(&self, py: Python<'_>, transcript: PathBuf) -> PyResult<Py<PyAny>> {
        let records = read_transcript(&transcript).map_err(io_err)?;
        let report = py.detach(|| replay_records(&self.inner, &records));
        #[derive(Serialize)]
        struct Summary {
            total: usize,
            matched: usize,
            mismatched_runs: Vec<(String, u64)>,
        }
        to_py(
            py,
            &Summary {
                total: report.total,
                matched: report.matched,
                mismatched_runs: report
                    .mismatches
                    .iter()
                    .map(|m| (m.session_id.clone(), m.run))
                    .collect(),
            },
        )
    }
}

#[pymodule]
fn oceanvoice(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NONE_TOKEN", oceanvoice_core::triggers::NONE_TOKEN)?;
    m.add("DEFAULT_DIMENSION", DEFAULT_DIMENSION)?;
    m.add("DEFAULT_TOP_K", DEFAULT_TOP_K)?;
    m.add_function(wrap_pyfunction!(split_paragraphs, m)?)?;
    m.add_function(wrap_pyfunction!(split_sentences, m)?)?;
    m.add_class::<PyIndex>()?;
    m.add_class::<PyGrammar>()?;
    m.add_class::<PyKeywordMatcher>()?;
    m.add_class::<PyGate>()?;
    m.add_class::<PyEngine>()?;
    Ok(())
}
