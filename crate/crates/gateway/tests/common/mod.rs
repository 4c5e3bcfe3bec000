#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use oceanvoice_core::agents::{MockScript, Stage};
use oceanvoice_core::corpus::{ingest_corpus, HnswParams, MockEmbedder, VectorIndex};
use oceanvoice_core::pipeline::{Backends, Engine};
use oceanvoice_core::triggers::{load_rules, VisualCatalog};
use oceanvoice_gateway::{AppState, Server};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn corpus_index() -> VectorIndex {
    ingest_corpus(&repo_root().join("corpus"), &MockEmbedder::new(384), HnswParams::default()).unwrap()
}

pub fn demo_script(latency: Duration) -> MockScript {
    let mut script = MockScript::load(repo_root().join("config/mock_script.toml")).unwrap();
    for stage in Stage::ALL {
        script.set_latency(stage, latency);
    }
    script
}

pub fn rules_path() -> PathBuf {
    repo_root().join("config/rules.toml")
}

pub fn engine(backends: Backends) -> Engine {
    Engine::new(
        corpus_index(),
        VisualCatalog::standard(),
        load_rules(rules_path()).unwrap(),
        Arc::new(MockEmbedder::new(384)),
        backends,
    )
    .unwrap()
}

pub fn demo_engine(latency: Duration) -> Engine {
    engine(Backends::from_script(&demo_script(latency)))
}

pub struct Running {
    pub addr: SocketAddr,
    pub state: AppState,
    stop: Option<oneshot::Sender<()>>,
    join: Option<JoinHandle<Result<(), oceanvoice_gateway::ServeError>>>,
}

impl Running {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    pub fn ws_url(&self, query: &str) -> String {
        format!("ws://{}/ws/events{}", self.addr, query)
    }

    /// Triggers graceful shutdown without waiting for it.
    pub fn signal_stop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
    }

    pub async fn stop(mut self) {
        self.signal_stop();
        let join = self.join.take().unwrap();
        tokio::time::timeout(Duration::from_secs(10), join)
            .await
            .expect("server stops")
            .unwrap()
            .unwrap();
    }
}

pub async fn start(state: AppState) -> Running {
    let server = Server::bind_state(state.clone(), "127.0.0.1:0").await.unwrap();
    start_server(server).await
}

pub async fn start_server(server: Server) -> Running {
    let addr = server.local_addr();
    let state = server.state().clone();
    let (tx, rx) = oneshot::channel();
    let join = tokio::spawn(server.run(async {
        let _ = rx.await;
    }));
    Running {
        addr,
        state,
        stop: Some(tx),
        join: Some(join),
    }
}
