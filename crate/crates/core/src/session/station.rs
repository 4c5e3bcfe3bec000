use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    transcribe_or_empty, AudioRef, GateAction, GateConfig, GateInput, GateMachine, SessionState,
    SpeechToText,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptSegment {
    pub session_id: String,
    pub text: String,
    pub started_at_ms: u64,
    pub ended_at_ms: u64,
}

pub trait Microphone: Send {
    fn start(&mut self, at_ms: u64, noise_cancel: bool);
    fn stop(&mut self, at_ms: u64) -> AudioRef;
    fn discard(&mut self);
}

/// Stand-in microphone: each recording episode yields the next queued
/// utterance as UTF-8 frames, or silence when the queue is empty.
#[derive(Debug, Default)]
pub struct QueuedMicrophone {
    utterances: VecDeque<String>,
    recording: bool,
    pub noise_cancel: bool,
}

impl QueuedMicrophone {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(utterances: I) -> Self {
        QueuedMicrophone {
            utterances: utterances.into_iter().map(Into::into).collect(),
            recording: false,
            noise_cancel: false,
        }
    }

    pub fn push(&mut self, utterance: impl Into<String>) {
        self.utterances.push_back(utterance.into());
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }
}

impl Microphone for QueuedMicrophone {
    fn start(&mut self, _at_ms: u64, noise_cancel: bool) {
        self.recording = true;
        self.noise_cancel = noise_cancel;
    }

    fn stop(&mut self, _at_ms: u64) -> AudioRef {
        self.recording = false;
        AudioRef::from_text(&self.utterances.pop_front().unwrap_or_default())
    }

    fn discard(&mut self) {
        if self.recording {
            self.utterances.pop_front();
        }
        self.recording = false;
    }
}

/// What one station input produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StationOutput {
    pub actions: Vec<GateAction>,
    pub transcript: Option<TranscriptSegment>,
}

impl StationOutput {
    pub fn pipeline_query(&self) -> Option<&str> {
        self.actions.iter().find_map(|a| match a {
            GateAction::RunPipeline { transcript } => Some(transcript.as_str()),
            _ => None,
        })
    }

    pub fn plays_response(&self) -> bool {
        self.actions.contains(&GateAction::PlayResponse)
    }
}

/// One physical station: the gate, its microphone and speech-to-text.
/// Pipeline runs and playback belong to the caller, which reports back
/// with `PipelineDone` and `ResponseDone`.
pub struct Station {
    session_id: String,
    gate: GateMachine,
    mic: Box<dyn Microphone>,
    stt: Arc<dyn SpeechToText>,
    recording_since: Option<u64>,
}

impl Station {
    pub fn new(
        session_id: impl Into<String>,
        cfg: GateConfig,
        mic: Box<dyn Microphone>,
        stt: Arc<dyn SpeechToText>,
    ) -> Self {
        Station {
            session_id: session_id.into(),
            gate: GateMachine::new(cfg),
            mic,
            stt,
            recording_since: None,
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn state(&self) -> SessionState {
        self.gate.state()
    }

    pub fn feed(&mut self, input: &GateInput) -> StationOutput {
        let now = input.at_ms();
        let mut out = StationOutput::default();
        let mut pending = self.gate.feed(input);
        while !pending.is_empty() {
            let mut follow_up = Vec::new();
            for action in &pending {
                match action {
                    GateAction::StartRecording { noise_cancel } => {
                        self.mic.start(now, *noise_cancel);
                        self.recording_since = Some(now);
                    }
                    GateAction::StopRecording { discard: true } => {
                        self.mic.discard();
                        self.recording_since = None;
                    }
                    GateAction::StopRecording { discard: false } => {
                        let audio = self.mic.stop(now);
                        let (text, _) = transcribe_or_empty(self.stt.as_ref(), &audio);
                        out.transcript = Some(TranscriptSegment {
                            session_id: self.session_id.clone(),
                            text: text.clone(),
                            started_at_ms: self.recording_since.take().unwrap_or(now),
                            ended_at_ms: now,
                        });
                        follow_up.extend(self.gate.feed(&GateInput::TranscriptReady { text, at_ms: now }));
                    }
                    _ => {}
                }
            }
            out.actions.append(&mut pending);
            pending = follow_up;
        }
        out
    }
}
