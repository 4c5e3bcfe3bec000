use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ProximityReading;
use crate::agents::millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    #[default]
    Idle,
    Engaged,
    Recording,
    Processing,
    Responding,
}

impl SessionState {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionState::Idle => "idle",
            SessionState::Engaged => "engaged",
            SessionState::Recording => "recording",
            SessionState::Processing => "processing",
            SessionState::Responding => "responding",
        }
    }
}

/// Hysteresis gate. A visitor engages below `engage_cm` and releases only
/// after staying beyond `release_cm` for `release_hold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub engage_cm: f64,
    pub release_cm: f64,
    #[serde(rename = "release_hold_ms", with = "millis")]
    pub release_hold: Duration,
    #[serde(rename = "silence_timeout_ms", with = "millis")]
    pub silence_timeout: Duration,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            engage_cm: 50.0,
            release_cm: 60.0,
            release_hold: Duration::from_millis(500),
            silence_timeout: Duration::from_secs(5),
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.engage_cm > 0.0 && self.engage_cm.is_finite()) {
            return Err("engage_cm must be positive".into());
        }
        if !(self.release_cm > self.engage_cm && self.release_cm.is_finite()) {
            return Err("release_cm must exceed engage_cm".into());
        }
        if self.silence_timeout.is_zero() {
            return Err("silence_timeout must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GateInput {
    Reading(ProximityReading),
    TranscriptReady { text: String, at_ms: u64 },
    PipelineDone { at_ms: u64 },
    ResponseDone { at_ms: u64 },
    /// Clock tick with no sensor data; drives the silence watchdog.
    Tick { at_ms: u64 },
}

impl GateInput {
    pub fn at_ms(&self) -> u64 {
        match self {
            GateInput::Reading(r) => r.timestamp_ms,
            GateInput::TranscriptReady { at_ms, .. }
            | GateInput::PipelineDone { at_ms }
            | GateInput::ResponseDone { at_ms }
            | GateInput::Tick { at_ms } => *at_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GateAction {
    StateChanged { from: SessionState, to: SessionState },
    StartRecording { noise_cancel: bool },
    /// `discard` is set when the watchdog cut the recording short.
    StopRecording { discard: bool },
    RunPipeline { transcript: String },
    PlayResponse,
}

/// Everything the gate remembers between inputs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GateState {
    pub state: SessionState,
    pub last_at_ms: Option<u64>,
    pub last_reading_ms: Option<u64>,
    /// Start of the current run of readings beyond `release_cm`.
    pub beyond_since_ms: Option<u64>,
    /// A visitor came close while the station was busy.
    pub reengage_queued: bool,
}

impl GateState {
    pub fn idle() -> Self {
        Self::default()
    }
}

fn change(actions: &mut Vec<GateAction>, s: &mut GateState, to: SessionState) {
    if s.state != to {
        actions.push(GateAction::StateChanged { from: s.state, to });
        s.state = to;
    }
}

fn engage(actions: &mut Vec<GateAction>, s: &mut GateState) {
    change(actions, s, SessionState::Engaged);
    change(actions, s, SessionState::Recording);
    actions.push(GateAction::StartRecording { noise_cancel: true });
    s.beyond_since_ms = None;
    s.reengage_queued = false;
}

/// Advances the gate by one input. Pure: identical inputs give identical
/// outputs. Inputs that make no sense in the current state are ignored.
pub fn step(state: &GateState, input: &GateInput, cfg: &GateConfig) -> (GateState, Vec<GateAction>) {
    let mut s = *state;
    let mut actions = Vec::new();
    let now = input.at_ms();
    if s.last_at_ms.is_some_and(|t| now < t) {
        tracing::debug!(now, last = ?s.last_at_ms, "ignoring input from the past");
        return (s, actions);
    }
    s.last_at_ms = Some(now);

    let silence = cfg.silence_timeout.as_millis() as u64;
    if s.state != SessionState::Idle
        && s.last_reading_ms.is_some_and(|t| now.saturating_sub(t) > silence)
    {
        tracing::warn!(state = s.state.as_str(), "sensor silent, returning to idle");
        if s.state == SessionState::Recording {
            actions.push(GateAction::StopRecording { discard: true });
        }
        change(&mut actions, &mut s, SessionState::Idle);
        s.beyond_since_ms = None;
        s.reengage_queued = false;
    }

    match input {
        GateInput::Reading(r) => {
            s.last_reading_ms = Some(now);
            let d = r.distance_cm;
            match s.state {
                SessionState::Idle | SessionState::Engaged => {
                    if d < cfg.engage_cm {
                        engage(&mut actions, &mut s);
                    }
                }
                SessionState::Recording => {
                    if d > cfg.release_cm {
                        let since = *s.beyond_since_ms.get_or_insert(now);
                        if now - since >= cfg.release_hold.as_millis() as u64 {
                            actions.push(GateAction::StopRecording { discard: false });
                            change(&mut actions, &mut s, SessionState::Processing);
                            s.beyond_since_ms = None;
                        }
                    } else {
                        s.beyond_since_ms = None;
                    }
                }
                SessionState::Processing | SessionState::Responding => {
                    if d < cfg.engage_cm {
                        s.reengage_queued = true;
                    } else if d > cfg.release_cm {
                        s.reengage_queued = false;
                    }
                }
            }
        }
        GateInput::TranscriptReady { text, .. } => {
            if s.state == SessionState::Processing {
                if text.trim().is_empty() {
                    tracing::warn!("empty transcript, returning to idle");
                    change(&mut actions, &mut s, SessionState::Idle);
                } else {
                    actions.push(GateAction::RunPipeline {
                        transcript: text.clone(),
                    });
                }
            } else {
                tracing::debug!(state = s.state.as_str(), "transcript ignored");
            }
        }
        GateInput::PipelineDone { .. } => {
            if s.state == SessionState::Processing {
                change(&mut actions, &mut s, SessionState::Responding);
                actions.push(GateAction::PlayResponse);
            }
        }
        GateInput::ResponseDone { .. } => {
            if s.state == SessionState::Responding {
                change(&mut actions, &mut s, SessionState::Idle);
                if s.reengage_queued {
                    engage(&mut actions, &mut s);
                }
            }
        }
        GateInput::Tick { .. } => {}
    }
    (s, actions)
}

/// Owning wrapper around [`step`].
#[derive(Debug, Clone, Default)]
pub struct GateMachine {
    cfg: GateConfig,
    state: GateState,
}

impl GateMachine {
    pub fn new(cfg: GateConfig) -> Self {
        GateMachine {
            cfg,
            state: GateState::idle(),
        }
    }

    pub fn config(&self) -> &GateConfig {
        &self.cfg
    }

    pub fn state(&self) -> SessionState {
        self.state.state
    }

    pub fn snapshot(&self) -> GateState {
        self.state
    }

    pub fn feed(&mut self, input: &GateInput) -> Vec<GateAction> {
        let (next, actions) = step(&self.state, input, &self.cfg);
        self.state = next;
        actions
    }

    pub fn feed_reading(&mut self, distance_cm: f64, at_ms: u64) -> Vec<GateAction> {
        self.feed(&GateInput::Reading(ProximityReading {
            distance_cm,
            timestamp_ms: at_ms,
        }))
    }
}
