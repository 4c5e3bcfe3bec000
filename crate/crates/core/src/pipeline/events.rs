use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::session::SessionState;
use crate::triggers::{VisualCatalog, VisualKind, NONE_TOKEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    StateChange,
    VisualSelected,
    TriggerEvent,
    Subtitle,
    StageTiming,
}

/// One message on the live event stream. `seq` increases by one per
/// message across the whole stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEvent {
    #[serde(rename = "type")]
    pub kind: EventType,
    pub session_id: String,
    pub payload: Value,
    pub seq: u64,
}

/// Receives pipeline events as each stage completes.
pub trait EventSink: Send + Sync {
    fn emit(&self, session_id: &str, kind: EventType, payload: Value);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl EventSink for NullSink {
    fn emit(&self, _: &str, _: EventType, _: Value) {}
}

/// Collects events in memory, numbering them from 1.
#[derive(Debug, Default)]
pub struct VecSink {
    events: Mutex<Vec<StreamEvent>>,
}

impl VecSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> Vec<StreamEvent> {
        self.events.lock().unwrap().clone()
    }

    pub fn take(&self) -> Vec<StreamEvent> {
        std::mem::take(&mut *self.events.lock().unwrap())
    }
}

impl EventSink for VecSink {
    fn emit(&self, session_id: &str, kind: EventType, payload: Value) {
        let mut events = self.events.lock().unwrap();
        let seq = events.len() as u64 + 1;
        events.push(StreamEvent {
            kind,
            session_id: session_id.to_string(),
            payload,
            seq,
        });
    }
}

pub fn state_change_payload(from: SessionState, to: SessionState, at_ms: u64) -> Value {
    json!({ "from": from, "to": to, "at_ms": at_ms })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerView {
    pub token: String,
    pub title: String,
    pub kind: VisualKind,
    pub active: bool,
    pub activated_at_ms: Option<u64>,
    /// The single visual the decider or an operator put center stage.
    pub central: bool,
}

/// Session view derived only from the event stream. The console folds the
/// same events and must arrive at an equal value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub state: SessionState,
    pub central: Option<String>,
    pub layers: BTreeMap<String, LayerView>,
    pub playing_video: Option<String>,
    pub camera: Option<(f64, f64)>,
    pub subtitle: Option<String>,
    pub last_seq: u64,
}

impl SessionView {
    pub fn new(session_id: impl Into<String>, catalog: &VisualCatalog) -> Self {
        let layers = catalog
            .entries()
            .iter()
            .map(|e| {
                (
                    e.token.clone(),
                    LayerView {
                        token: e.token.clone(),
                        title: e.title.clone(),
                        kind: e.kind,
                        active: false,
                        activated_at_ms: None,
                        central: false,
                    },
                )
            })
            .collect();
        SessionView {
            session_id: session_id.into(),
            state: SessionState::Idle,
            central: None,
            layers,
            playing_video: None,
            camera: None,
            subtitle: None,
            last_seq: 0,
        }
    }

    fn set_central(&mut self, token: Option<&str>, at_ms: Option<u64>) {
        for layer in self.layers.values_mut() {
            layer.central = false;
        }
        self.central = None;
        if let Some(layer) = token.and_then(|t| self.layers.get_mut(t)) {
            layer.central = true;
            layer.active = true;
            layer.activated_at_ms = at_ms;
            self.central = Some(layer.token.clone());
        }
    }

    /// Applies one event. Events for other sessions and events not newer
    /// than the last applied one are ignored.
    pub fn apply(&mut self, ev: &StreamEvent) {
        if ev.session_id != self.session_id || ev.seq <= self.last_seq {
            return;
        }
        self.last_seq = ev.seq;
        let p = &ev.payload;
        let at = p.get("at_ms").and_then(Value::as_u64);
        match ev.kind {
            EventType::StateChange => {
                if let Some(to) = p.get("to").cloned().and_then(|v| serde_json::from_value(v).ok()) {
                    self.state = to;
                }
            }
            EventType::VisualSelected => {
                let token = p.get("token").and_then(Value::as_str);
                self.set_central(token.filter(|t| *t != NONE_TOKEN), at);
            }
            EventType::TriggerEvent => {
                let token = p.pointer("/payload/token").and_then(Value::as_str);
                match p.get("kind").and_then(Value::as_str) {
                    Some("layer_on") => {
                        if let Some(l) = token.and_then(|t| self.layers.get_mut(t)) {
                            l.active = true;
                            l.activated_at_ms = at;
                        }
                    }
                    Some("layer_off") => {
                        if let Some(l) = token.and_then(|t| self.layers.get_mut(t)) {
                            l.active = false;
                            l.central = false;
                            if self.central.as_deref() == token {
                                self.central = None;
                            }
                        }
                    }
                    Some("video_play") => self.playing_video = token.map(str::to_string),
                    Some("camera_move") => {
                        let lat = p.pointer("/payload/lat").and_then(Value::as_f64);
                        let lon = p.pointer("/payload/lon").and_then(Value::as_f64);
                        if let (Some(lat), Some(lon)) = (lat, lon) {
                            self.camera = Some((lat, lon));
                        }
                    }
                    _ => {}
                }
            }
            EventType::Subtitle => {
                self.subtitle = p.get("text").and_then(Value::as_str).map(str::to_string);
            }
            EventType::StageTiming => {}
        }
    }

    pub fn fold<'a>(mut self, events: impl IntoIterator<Item = &'a StreamEvent>) -> Self {
        for ev in events {
            self.apply(ev);
        }
        self
    }
}
