use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use oceanvoice_core::pipeline::{state_change_payload, EventSink, EventType, SessionContext};
use oceanvoice_core::session::SessionState;

/// Server-side state for one session.
pub struct SessionSlot {
    id: String,
    /// Held for the whole pipeline run, which serializes queries per session.
    ctx: Arc<tokio::sync::Mutex<SessionContext>>,
    state: Mutex<SessionState>,
    generation: AtomicU64,
}

impl SessionSlot {
    fn new(id: &str, history_cap: usize) -> Self {
        SessionSlot {
            id: id.to_string(),
            ctx: Arc::new(tokio::sync::Mutex::new(SessionContext::new(id, history_cap))),
            state: Mutex::new(SessionState::Idle),
            generation: AtomicU64::new(0),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn context(&self) -> Arc<tokio::sync::Mutex<SessionContext>> {
        self.ctx.clone()
    }

    pub fn state(&self) -> SessionState {
        *self.state.lock().unwrap()
    }

    /// Moves to `to`, emitting `state_change` only when the state differs.
    pub fn transition(&self, sink: &dyn EventSink, to: SessionState, at_ms: u64) {
        let mut state = self.state.lock().unwrap();
        if *state != to {
            sink.emit(&self.id, EventType::StateChange, state_change_payload(*state, to, at_ms));
            *state = to;
        }
    }

    /// Starts a new generation and moves to `to`. Deferred transitions
    /// tagged with an older generation become no-ops.
    pub fn begin(&self, sink: &dyn EventSink, to: SessionState, at_ms: u64) -> u64 {
        let mut state = self.state.lock().unwrap();
        let generation = self.generation.fetch_add(1, Ordering::SeqCst) + 1;
        if *state != to {
            sink.emit(&self.id, EventType::StateChange, state_change_payload(*state, to, at_ms));
            *state = to;
        }
        generation
    }

    /// Like [`transition`](Self::transition), unless another
    /// [`begin`](Self::begin) has happened since `generation`.
    pub fn transition_if_current(
        &self,
        sink: &dyn EventSink,
        generation: u64,
        to: SessionState,
        at_ms: u64,
    ) -> bool {
        let mut state = self.state.lock().unwrap();
        if self.generation.load(Ordering::SeqCst) != generation {
            return false;
        }
        if *state != to {
            sink.emit(&self.id, EventType::StateChange, state_change_payload(*state, to, at_ms));
            *state = to;
        }
        true
    }
}

#[derive(Default)]
pub struct Sessions {
    map: RwLock<HashMap<String, Arc<SessionSlot>>>,
    history_cap: usize,
}

impl Sessions {
    pub fn new(history_cap: usize) -> Self {
        Sessions {
            map: RwLock::new(HashMap::new()),
            history_cap,
        }
    }

    pub fn get(&self, id: &str) -> Option<Arc<SessionSlot>> {
        self.map.read().unwrap().get(id).cloned()
    }

    pub fn get_or_create(&self, id: &str) -> Arc<SessionSlot> {
        if let Some(slot) = self.get(id) {
            return slot;
        }
        self.map
            .write()
            .unwrap()
            .entry(id.to_string())
            .or_insert_with(|| Arc::new(SessionSlot::new(id, self.history_cap)))
            .clone()
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.map.read().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }
}
