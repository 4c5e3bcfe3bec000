use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

/// Milliseconds of speech per word for the mock synthesizer.
pub const MOCK_MS_PER_WORD: u64 = 400;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdapterError {
    #[error("adapter timed out")]
    Timeout,
    #[error("adapter transport failure: {0}")]
    Transport(String),
    #[error("adapter returned an unusable response: {0}")]
    Malformed(String),
    #[error("adapter failure: {0}")]
    Failed(String),
}

/// Captured audio. The mock microphone fills `frames` with UTF-8 text.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AudioRef {
    pub frames: Vec<u8>,
    pub sample_rate: u32,
}

impl AudioRef {
    pub fn from_text(text: &str) -> Self {
        AudioRef {
            frames: text.as_bytes().to_vec(),
            sample_rate: 0,
        }
    }
}

/// A synthesized clip ready for playback.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioHandle {
    pub id: String,
    pub duration_ms: u64,
}

impl AudioHandle {
    pub fn silent() -> Self {
        AudioHandle {
            id: String::new(),
            duration_ms: 0,
        }
    }
}

pub trait SpeechToText: Send + Sync {
    fn transcribe(&self, audio: &AudioRef) -> Result<String, AdapterError>;
}

pub trait TextToSpeech: Send + Sync {
    fn synthesize(&self, text: &str) -> Result<AudioHandle, AdapterError>;
}

/// Transcribes, turning failures into an empty transcript.
pub fn transcribe_or_empty(stt: &dyn SpeechToText, audio: &AudioRef) -> (String, Option<AdapterError>) {
    match stt.transcribe(audio) {
        Ok(t) => (t, None),
        Err(e) => {
            tracing::warn!(error = %e, "speech-to-text failed");
            (String::new(), Some(e))
        }
    }
}

/// Synthesizes, turning failures into a zero-length clip.
pub fn synthesize_or_silent(tts: &dyn TextToSpeech, text: &str) -> (AudioHandle, Option<AdapterError>) {
    match tts.synthesize(text) {
        Ok(h) => (h, None),
        Err(e) => {
            tracing::warn!(error = %e, "text-to-speech failed");
            (AudioHandle::silent(), Some(e))
        }
    }
}

/// Passes text frames through verbatim.
#[derive(Debug, Default)]
pub struct MockStt {
    latency: Duration,
    fail: AtomicBool,
}

impl MockStt {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn latency(&self) -> Duration {
        self.latency
    }

    /// Makes every following call time out.
    pub fn set_failing(&self, fail: bool) {
        self.fail.store(fail, Ordering::SeqCst);
    }
}

impl SpeechToText for MockStt {
    fn transcribe(&self, audio: &AudioRef) -> Result<String, AdapterError> {
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        if self.fail.load(Ordering::SeqCst) {
            return Err(AdapterError::Timeout);
        }
        String::from_utf8(audio.frames.clone()).map_err(|e| AdapterError::Malformed(e.to_string()))
    }
}

/// Silent clips lasting 400 ms per word.
#[derive(Debug, Default)]
pub struct MockTts {
    latency: Duration,
    fail: AtomicBool,
}

impl MockTts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn latency(&self) -> Duration {
        self.latency
    }

    pub fn set_failing(&self, fail: bool) {
        self.fail.store(fail, Ordering::SeqCst);
    }
}

pub fn mock_speech_duration_ms(text: &str) -> u64 {
    text.split_whitespace().count() as u64 * MOCK_MS_PER_WORD
}

impl TextToSpeech for MockTts {
    fn synthesize(&self, text: &str) -> Result<AudioHandle, AdapterError> {
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        if self.fail.load(Ordering::SeqCst) {
            return Err(AdapterError::Failed("injected failure".into()));
        }
        // Content-derived id keeps replays byte-identical.
        let hash = text
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3));
        Ok(AudioHandle {
            id: format!("mock-tts-{hash:016x}"),
            duration_ms: mock_speech_duration_ms(text),
        })
    }
}

fn map_reqwest(e: reqwest::Error) -> AdapterError {
    if e.is_timeout() {
        AdapterError::Timeout
    } else {
        AdapterError::Transport(e.to_string())
    }
}

/// Posts raw audio bytes and expects `{"text": "..."}`.
pub struct HttpStt {
    url: String,
    timeout: Duration,
    client: reqwest::blocking::Client,
}

impl HttpStt {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        HttpStt {
            url: url.into(),
            timeout,
            client: reqwest::blocking::Client::new(),
        }
    }
}

#[derive(Deserialize)]
struct SttResponse {
    text: String,
}

impl SpeechToText for HttpStt {
    fn transcribe(&self, audio: &AudioRef) -> Result<String, AdapterError> {
        let resp = self
            .client
            .post(&self.url)
            .timeout(self.timeout)
            .header("content-type", "application/octet-stream")
            .header("x-sample-rate", audio.sample_rate.to_string())
            .body(audio.frames.clone())
            .send()
            .map_err(map_reqwest)?;
        if !resp.status().is_success() {
            return Err(AdapterError::Failed(resp.status().to_string()));
        }
        let body: SttResponse = resp.json().map_err(|e| AdapterError::Malformed(e.to_string()))?;
        Ok(body.text)
    }
}

/// Posts `{"text": "..."}` and expects `{"handle": "...", "duration_ms": n}`.
pub struct HttpTts {
    url: String,
    timeout: Duration,
    client: reqwest::blocking::Client,
}

impl HttpTts {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        HttpTts {
            url: url.into(),
            timeout,
            client: reqwest::blocking::Client::new(),
        }
    }
}

#[derive(Deserialize)]
struct TtsResponse {
    handle: String,
    duration_ms: u64,
}

impl TextToSpeech for HttpTts {
    fn synthesize(&self, text: &str) -> Result<AudioHandle, AdapterError> {
        let resp = self
            .client
            .post(&self.url)
            .timeout(self.timeout)
            .json(&json!({ "text": text }))
            .send()
            .map_err(map_reqwest)?;
        if !resp.status().is_success() {
            return Err(AdapterError::Failed(resp.status().to_string()));
        }
        let body: TtsResponse = resp.json().map_err(|e| AdapterError::Malformed(e.to_string()))?;
        Ok(AudioHandle {
            id: body.handle,
            duration_ms: body.duration_ms,
        })
    }
}
