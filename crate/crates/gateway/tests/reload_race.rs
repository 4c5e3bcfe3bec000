//! A rules swap while a query is mid-flight must not change what that
//! query's scan sees.

mod common;

use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use oceanvoice_core::agents::{BackendError, ChatBackend, ChatMessage, CompletionParams, MockBackend, Stage};
use oceanvoice_core::pipeline::{Backends, PipelineResult};
use oceanvoice_gateway::AppState;
use serde_json::json;

use common::*;

/// Tells the test it has been reached, then waits to be released.
struct Gate {
    inner: MockBackend,
    reached: Mutex<mpsc::Sender<()>>,
    release: Mutex<mpsc::Receiver<()>>,
}

impl ChatBackend for Gate {
    fn complete(&self, messages: &[ChatMessage], params: &CompletionParams) -> Result<String, BackendError> {
        let _ = self.reached.lock().unwrap().send(());
        self.release.lock().unwrap().recv().unwrap();
        self.inner.complete(messages, params)
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn in_flight_query_keeps_pre_swap_rules() {
    let script = demo_script(Duration::ZERO);
    let (reached_tx, reached_rx) = mpsc::channel();
    let (release_tx, release_rx) = mpsc::channel();
    let responder = Gate {
        inner: script.backend_for(Stage::Responder),
        reached: Mutex::new(reached_tx),
        release: Mutex::new(release_rx),
    };
    let backends = Backends {
        decider: Arc::new(script.backend_for(Stage::Decider)),
        rewriter: Arc::new(script.backend_for(Stage::Rewriter)),
        responder: Arc::new(responder),
    };
    let dir = tempfile::tempdir().unwrap();
    let rules = dir.path().join("rules.toml");
    std::fs::copy(rules_path(), &rules).unwrap();
    let run = start(AppState::new(engine(backends).with_rules_path(&rules), 64)).await;

    let url = run.url("/api/query");
    let pending = tokio::spawn(async move {
        reqwest::Client::new()
            .post(url)
            .json(&json!({ "session_id": "race", "text": "why is the water green" }))
            .send()
            .await
            .unwrap()
            .json::<PipelineResult>()
            .await
            .unwrap()
    });
    tokio::task::spawn_blocking(move || reached_rx.recv_timeout(Duration::from_secs(10)).unwrap())
        .await
        .unwrap();

    std::fs::write(
        &rules,
        "[[rule]]\nid = \"swapped\"\nphrases = [\"green\"]\nkind = \"layer_on\"\npayload = { token = \"CHLOROPHYLL\" }\n",
    )
    .unwrap();
    let reload = reqwest::Client::new().post(run.url("/api/reload/rules")).send().await.unwrap();
    assert_eq!(reload.status(), 200);
    assert_eq!(run.state.engine.rules_version(), 2);

    release_tx.send(()).unwrap();
    let before = pending.await.unwrap();
    assert_eq!(before.rules_version, 1);
    assert!(!before.events.is_empty());
    assert!(before.events.iter().all(|e| e.rule_id != "swapped"));

    // The next query sees the new rules.
    release_tx.send(()).unwrap();
    let after: PipelineResult = reqwest::Client::new()
        .post(run.url("/api/query"))
        .json(&json!({ "session_id": "race2", "text": "why is the water green" }))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(after.rules_version, 2);
    assert_eq!(after.events.len(), 1);
    assert_eq!(after.events[0].rule_id, "swapped");
    run.stop().await;
}
