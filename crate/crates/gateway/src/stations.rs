use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use oceanvoice_core::session::{
    parse_sensor_line, AudioRef, GateAction, GateConfig, GateInput, Microphone, ProximityReading,
    QueuedMicrophone, SessionState, SpeechToText, Station,
};
use tokio::io::{AsyncBufReadExt, BufReader};
use tokio::net::TcpListener;

use crate::AppState;

const TICK: Duration = Duration::from_millis(250);

/// A queued microphone that the HTTP side can feed while the station owns it.
#[derive(Clone, Default)]
pub struct SharedMicrophone(Arc<Mutex<QueuedMicrophone>>);

impl SharedMicrophone {
    pub fn push(&self, utterance: impl Into<String>) {
        self.0.lock().unwrap().push(utterance);
    }
}

impl Microphone for SharedMicrophone {
    fn start(&mut self, at_ms: u64, noise_cancel: bool) {
        self.0.lock().unwrap().start(at_ms, noise_cancel);
    }

    fn stop(&mut self, at_ms: u64) -> AudioRef {
        self.0.lock().unwrap().stop(at_ms)
    }

    fn discard(&mut self) {
        self.0.lock().unwrap().discard();
    }
}

/// A physical station: proximity gate, microphone and speech-to-text,
/// bound to the session with the same id.
pub struct StationHandle {
    id: String,
    station: Mutex<Station>,
    mic: SharedMicrophone,
    last_audio_ms: AtomicU64,
}

impl StationHandle {
    pub fn new(id: &str, gate: GateConfig, stt: Arc<dyn SpeechToText>) -> Self {
        let mic = SharedMicrophone::default();
        StationHandle {
            id: id.to_string(),
            station: Mutex::new(Station::new(id, gate, Box::new(mic.clone()), stt)),
            mic,
            last_audio_ms: AtomicU64::new(0),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn microphone(&self) -> &SharedMicrophone {
        &self.mic
    }

    pub fn state(&self) -> SessionState {
        self.station.lock().unwrap().state()
    }

    pub async fn feed_reading(self: &Arc<Self>, app: &AppState, distance_cm: f64) {
        let reading = ProximityReading {
            distance_cm,
            timestamp_ms: app.clock.now_ms(),
        };
        self.feed_async(app, GateInput::Reading(reading)).await;
    }

    /// [`feed`](Self::feed) on the blocking pool, since transcription may
    /// block on the network.
    pub async fn feed_async(self: &Arc<Self>, app: &AppState, input: GateInput) {
        let (me, app) = (self.clone(), app.clone());
        tokio::task::spawn_blocking(move || me.feed(&app, input))
            .await
            .expect("station feed panicked");
    }

    /// Feeds the gate and carries out whatever it asks for. Pipeline runs
    /// and playback are scheduled on the runtime and report back here.
    pub fn feed(self: &Arc<Self>, app: &AppState, input: GateInput) {
        let out = self.station.lock().unwrap().feed(&input);
        if let Some(seg) = &out.transcript {
            tracing::info!(station = %self.id, text = %seg.text, "utterance transcribed");
        }
        let slot = app.sessions.get_or_create(&self.id);
        for action in out.actions {
            match action {
                GateAction::StateChanged { to, .. } => {
                    slot.transition(app.hub.as_ref(), to, input.at_ms());
                }
                GateAction::RunPipeline { transcript } => {
                    let (me, app, slot) = (self.clone(), app.clone(), slot.clone());
                    tokio::spawn(async move {
                        let duration = match app.run_for_station(&slot, transcript).await {
                            Ok(r) => r.audio.duration_ms,
                            Err(e) => {
                                tracing::error!(station = %me.id, error = %e, "pipeline failed");
                                0
                            }
                        };
                        me.last_audio_ms.store(duration, Ordering::SeqCst);
                        let at_ms = app.clock.now_ms();
                        me.feed_async(&app, GateInput::PipelineDone { at_ms }).await;
                    });
                }
                GateAction::PlayResponse => {
                    let (me, app) = (self.clone(), app.clone());
                    let wait = Duration::from_millis(self.last_audio_ms.load(Ordering::SeqCst));
                    tokio::spawn(async move {
                        tokio::time::sleep(wait).await;
                        let at_ms = app.clock.now_ms();
                        me.feed_async(&app, GateInput::ResponseDone { at_ms }).await;
                    });
                }
                GateAction::StartRecording { .. } | GateAction::StopRecording { .. } => {}
            }
        }
    }
}

/// Accepts sensor connections and feeds their `D <cm>` lines to the station.
pub(crate) async fn accept_sensors(app: AppState, handle: Arc<StationHandle>, listener: TcpListener) {
    loop {
        let (stream, peer) = match listener.accept().await {
            Ok(c) => c,
            Err(e) => {
                tracing::warn!(error = %e, "sensor accept failed");
                continue;
            }
        };
        tracing::info!(station = %handle.id, %peer, "sensor connected");
        let (app, handle) = (app.clone(), handle.clone());
        tokio::spawn(async move {
            let mut lines = BufReader::new(stream).lines();
            while let Ok(Some(line)) = lines.next_line().await {
                if line.trim().is_empty() {
                    continue;
                }
                match parse_sensor_line(&line) {
                    Ok(r) => handle.feed_reading(&app, r.distance_cm).await,
                    Err(e) => tracing::warn!(station = %handle.id, error = %e, "bad sensor line"),
                }
            }
            tracing::info!(station = %handle.id, %peer, "sensor disconnected");
        });
    }
}

/// Keeps the silence watchdog running when no readings arrive.
pub(crate) async fn tick(app: AppState, handle: Arc<StationHandle>) {
    let mut interval = tokio::time::interval(TICK);
    loop {
        interval.tick().await;
        let at_ms = app.clock.now_ms();
        handle.feed_async(&app, GateInput::Tick { at_ms }).await;
    }
}
