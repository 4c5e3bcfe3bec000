use std::collections::BTreeMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use oceanvoice_core::config::{ConfigError, ServerConfig};
use oceanvoice_core::pipeline::{Engine, PipelineError, PipelineResult, SessionContext};
use oceanvoice_core::session::{SessionState, SpeechToText};
use tokio::net::TcpListener;
use tokio::sync::{watch, OwnedMutexGuard};

use crate::hub::EventHub;
use crate::routes::router;
use crate::sessions::{SessionSlot, Sessions};
use crate::stations::StationHandle;
use crate::Clock;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("binding {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything a request handler needs. Cheap to clone.
#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub hub: Arc<EventHub>,
    pub sessions: Arc<Sessions>,
    pub clock: Clock,
    pub stations: Arc<BTreeMap<String, Arc<StationHandle>>>,
    pub(crate) shutdown: watch::Receiver<bool>,
    shutdown_tx: Arc<watch::Sender<bool>>,
}

impl AppState {
    pub fn new(engine: Engine, event_buffer: usize) -> Self {
        let hub = Arc::new(EventHub::new(engine.catalog(), event_buffer));
        let sessions = Arc::new(Sessions::new(engine.history_cap()));
        let (tx, rx) = watch::channel(false);
        AppState {
            engine: Arc::new(engine),
            hub,
            sessions,
            clock: Clock::system(),
            stations: Arc::new(BTreeMap::new()),
            shutdown: rx,
            shutdown_tx: Arc::new(tx),
        }
    }

    pub fn with_station(mut self, station: StationHandle) -> Self {
        Arc::make_mut(&mut self.stations).insert(station.id().to_string(), Arc::new(station));
        self
    }

    pub fn station(&self, id: &str) -> Option<Arc<StationHandle>> {
        self.stations.get(id).cloned()
    }

    /// Asks long-lived connections to close.
    pub fn begin_shutdown(&self) {
        let _ = self.shutdown_tx.send(true);
    }

    /// A typed query: the session goes processing → responding, then back
    /// to idle once the reply has had time to play.
    pub async fn run_query(
        &self,
        session_id: &str,
        text: &str,
    ) -> Result<PipelineResult, PipelineError> {
        if text.trim().is_empty() {
            return Err(PipelineError::EmptyQuery);
        }
        let slot = self.sessions.get_or_create(session_id);
        let guard = slot.context().lock_owned().await;
        let generation = slot.begin(self.hub.as_ref(), SessionState::Processing, self.clock.now_ms());
        let at_ms = self.clock.now_ms();
        let (guard, result) = self.run_locked(guard, text.to_string(), at_ms).await;
        match &result {
            Ok(r) => {
                slot.transition(self.hub.as_ref(), SessionState::Responding, self.clock.now_ms());
                self.settle_after(slot.clone(), generation, r.audio.duration_ms);
            }
            Err(_) => slot.transition(self.hub.as_ref(), SessionState::Idle, self.clock.now_ms()),
        }
        drop(guard);
        result
    }

    /// Runs the pipeline without touching session state; stations drive
    /// their own state through the gate.
    pub(crate) async fn run_for_station(
        &self,
        slot: &SessionSlot,
        text: String,
    ) -> Result<PipelineResult, PipelineError> {
        let guard = slot.context().lock_owned().await;
        let at_ms = self.clock.now_ms();
        self.run_locked(guard, text, at_ms).await.1
    }

    async fn run_locked(
        &self,
        mut guard: OwnedMutexGuard<SessionContext>,
        text: String,
        at_ms: u64,
    ) -> (OwnedMutexGuard<SessionContext>, Result<PipelineResult, PipelineError>) {
        let engine = self.engine.clone();
        let hub = self.hub.clone();
        tokio::task::spawn_blocking(move || {
            let result = engine.run(&mut guard, &text, at_ms, hub.as_ref());
            (guard, result)
        })
        .await
        .expect("pipeline task panicked")
    }

    fn settle_after(&self, slot: Arc<SessionSlot>, generation: u64, duration_ms: u64) {
        let hub = self.hub.clone();
        let clock = self.clock;
        tokio::spawn(async move {
            tokio::time::sleep(Duration::from_millis(duration_ms)).await;
            slot.transition_if_current(hub.as_ref(), generation, SessionState::Idle, clock.now_ms());
        });
    }
}

/// A bound, not yet running server.
pub struct Server {
    state: AppState,
    listener: TcpListener,
    sensors: Vec<(Arc<StationHandle>, TcpListener)>,
}

impl Server {
    /// Builds the engine and stations from `cfg` and binds every socket.
    pub async fn bind(cfg: &ServerConfig) -> Result<Self, ServeError> {
        let engine = cfg.build_engine(true)?;
        let stt: Arc<dyn SpeechToText> = cfg.speech.build_stt()?;
        let mut state = AppState::new(engine, cfg.event_buffer);
        let mut sensors = Vec::new();
        for sc in &cfg.stations {
            state = state.with_station(StationHandle::new(&sc.id, cfg.gate, stt.clone()));
            if let Some(addr) = &sc.sensor_listen {
                sensors.push((state.station(&sc.id).expect("just added"), bind(addr).await?));
            }
        }
        let listener = bind(&cfg.listen).await?;
        Ok(Server {
            state,
            listener,
            sensors,
        })
    }

    /// Serves a prepared state on `listen`, without sensor sockets.
    pub async fn bind_state(state: AppState, listen: &str) -> Result<Self, ServeError> {
        Ok(Server {
            state,
            listener: bind(listen).await?,
            sensors: Vec::new(),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    pub fn sensor_addr(&self, station_id: &str) -> Option<SocketAddr> {
        self.sensors
            .iter()
            .find(|(h, _)| h.id() == station_id)
            .and_then(|(_, l)| l.local_addr().ok())
    }

    pub fn state(&self) -> &AppState {
        &self.state
    }

    /// Serves until `shutdown` resolves, then stops accepting, closes event
    /// streams and waits for in-flight requests to finish.
    pub async fn run(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServeError> {
        let Server {
            state,
            listener,
            sensors,
        } = self;
        let mut background = Vec::new();
        for (handle, sensor) in sensors {
            background.push(tokio::spawn(crate::stations::accept_sensors(
                state.clone(),
                handle,
                sensor,
            )));
        }
        for handle in state.stations.values() {
            background.push(tokio::spawn(crate::stations::tick(state.clone(), handle.clone())));
        }
        tracing::info!(addr = %listener.local_addr()?, "serving");
        let app = router(state.clone());
        let stopper = state.clone();
        let result = axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                shutdown.await;
                tracing::info!("shutting down");
                stopper.begin_shutdown();
            })
            .await;
        for task in background {
            task.abort();
        }
        result.map_err(ServeError::Io)
    }
}

async fn bind(addr: &str) -> Result<TcpListener, ServeError> {
    TcpListener::bind(addr).await.map_err(|source| ServeError::Bind {
        addr: addr.to_string(),
        source,
    })
}
