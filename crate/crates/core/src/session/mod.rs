//! Proximity gating and speech adapters for one exhibit station.
//!
//! The distance sensor speaks a line protocol (`D <cm>`); replay files
//! prefix each line with `@<millis> `. [`step`] is a pure state machine
//! from sensor readings and pipeline callbacks to recording actions.

mod adapters;
mod gate;
mod sensor;
mod station;

pub use adapters::{
    mock_speech_duration_ms, synthesize_or_silent, transcribe_or_empty, AdapterError, AudioHandle,
    AudioRef, HttpStt, HttpTts, MockStt, MockTts, SpeechToText, TextToSpeech, MOCK_MS_PER_WORD,
};
pub use gate::{step, GateAction, GateConfig, GateInput, GateMachine, GateState, SessionState};
pub use sensor::{
    format_replay_line, parse_replay, parse_replay_line, parse_sensor_line, ProximityReading,
    SensorError,
};
pub use station::{Microphone, QueuedMicrophone, Station, StationOutput, TranscriptSegment};
