use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use oceanvoice_core::pipeline::{EventSink, EventType, SessionView, StreamEvent};
use oceanvoice_core::triggers::VisualCatalog;
use serde_json::Value;
use tokio::sync::broadcast;

/// Numbers, folds and broadcasts every stream event.
///
/// Sequence assignment, the server-side fold and the broadcast send happen
/// under one lock, so subscribers see events in `seq` order and the
/// snapshot returned by [`EventHub::view`] is exactly the fold of the
/// events sent so far.
pub struct EventHub {
    inner: Mutex<Inner>,
    tx: broadcast::Sender<StreamEvent>,
    catalog: Arc<VisualCatalog>,
}

struct Inner {
    seq: u64,
    views: HashMap<String, SessionView>,
}

impl EventHub {
    /// `buffer` is how far a subscriber may fall behind before it is cut off.
    pub fn new(catalog: Arc<VisualCatalog>, buffer: usize) -> Self {
        let (tx, _) = broadcast::channel(buffer.max(1));
        EventHub {
            inner: Mutex::new(Inner {
                seq: 0,
                views: HashMap::new(),
            }),
            tx,
            catalog,
        }
    }

    pub fn subscribe(&self) -> broadcast::Receiver<StreamEvent> {
        self.tx.subscribe()
    }

    pub fn last_seq(&self) -> u64 {
        self.inner.lock().unwrap().seq
    }

    pub fn view(&self, session_id: &str) -> Option<SessionView> {
        self.inner.lock().unwrap().views.get(session_id).cloned()
    }

    /// The session's view and the stream position it reflects, read
    /// together.
    pub fn view_with_seq(&self, session_id: &str) -> (Option<SessionView>, u64) {
        let inner = self.inner.lock().unwrap();
        (inner.views.get(session_id).cloned(), inner.seq)
    }

    /// The view a session with no events yet would have.
    pub fn empty_view(&self, session_id: &str) -> SessionView {
        SessionView::new(session_id, &self.catalog)
    }

    pub fn catalog(&self) -> &VisualCatalog {
        &self.catalog
    }
}

impl EventSink for EventHub {
    fn emit(&self, session_id: &str, kind: EventType, payload: Value) {
        let mut inner = self.inner.lock().unwrap();
        inner.seq += 1;
        let ev = StreamEvent {
            kind,
            session_id: session_id.to_string(),
            payload,
            seq: inner.seq,
        };
        let catalog = &self.catalog;
        inner
            .views
            .entry(session_id.to_string())
            .or_insert_with(|| SessionView::new(session_id, catalog))
            .apply(&ev);
        // No subscribers is fine.
        let _ = self.tx.send(ev);
    }
}
