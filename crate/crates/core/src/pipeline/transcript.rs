use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Engine, NullSink, PipelineResult, SessionContext};
use crate::agents::ConversationHistory;
use crate::triggers::CooldownState;

pub const TRANSCRIPT_FORMAT: u32 = 1;

/// One line of a transcript log. The session state captured before the run
/// makes each record replayable on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub format: u32,
    pub session_id: String,
    pub run: u64,
    pub at_ms: u64,
    pub query: String,
    pub history_before: ConversationHistory,
    pub cooldowns_before: CooldownState,
    pub result: PipelineResult,
}

#[derive(Debug, thiserror::Error)]
pub enum TranscriptError {
    #[error("transcript io: {0}")]
    Io(#[from] std::io::Error),
    #[error("transcript line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid session id `{0}`")]
    SessionId(String),
}

/// Session ids double as file names, so they are restricted.
pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.')
}

/// Append-only JSONL logs, one file per session.
#[derive(Debug)]
pub struct TranscriptStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl TranscriptStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, TranscriptError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(TranscriptStore {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, session_id: &str) -> Result<PathBuf, TranscriptError> {
        if !valid_session_id(session_id) {
            return Err(TranscriptError::SessionId(session_id.to_string()));
        }
        Ok(self.dir.join(format!("{session_id}.jsonl")))
    }

    pub fn append(&self, record: &TranscriptRecord) -> Result<(), TranscriptError> {
        let path = self.path_for(&record.session_id)?;
        let mut line = serde_json::to_string(record).map_err(|e| TranscriptError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        line.push('\n');
        let _guard = self.write_lock.lock().unwrap();
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        // One write call per record keeps lines whole.
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }

    /// Records for one session; a missing log is empty.
    pub fn read(&self, session_id: &str) -> Result<Vec<TranscriptRecord>, TranscriptError> {
        let path = self.path_for(session_id)?;
        if !path.exists() {
            return Ok(Vec::new());
        }
        read_transcript(&path)
    }
}

/// Reads a JSONL transcript. A torn final line (from a crash mid-write) is
/// skipped; corruption anywhere else is an error.
pub fn read_transcript(path: impl AsRef<Path>) -> Result<Vec<TranscriptRecord>, TranscriptError> {
    let reader = BufReader::new(File::open(path)?);
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(lines.len());
    let last = lines.len();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TranscriptRecord>(line) {
            Ok(r) => out.push(r),
            Err(e) if i + 1 == last => {
                tracing::warn!(line = i + 1, error = %e, "skipping torn final transcript line");
            }
            Err(e) => {
                return Err(TranscriptError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayMismatch {
    pub session_id: String,
    pub run: u64,
    pub expected: String,
    pub actual: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReplayReport {
    pub total: usize,
    pub matched: usize,
    pub mismatches: Vec<ReplayMismatch>,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-runs each record against `engine` from its captured session state
/// and compares canonical results byte for byte.
pub fn replay_records(engine: &Engine, records: &[TranscriptRecord]) -> ReplayReport {
    let mut report = ReplayReport::default();
    for rec in records {
        report.total += 1;
        let mut ctx = SessionContext {
            session_id: rec.session_id.clone(),
            history: rec.history_before.clone(),
            cooldowns: rec.cooldowns_before.clone(),
            runs: rec.run,
        };
        let expected = rec.result.canonical_json();
        let actual = match engine.run(&mut ctx, &rec.query, rec.at_ms, &NullSink) {
            Ok(r) => r.canonical_json(),
            Err(e) => format!("error: {e}"),
        };
        if actual == expected {
            report.matched += 1;
        } else {
            report.mismatches.push(ReplayMismatch {
                session_id: rec.session_id.clone(),
                run: rec.run,
                expected,
                actual,
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn session_ids() {
        assert!(valid_session_id("station-1"));
        assert!(valid_session_id("a.b_c"));
        for bad in ["", "../x", ".hidden", "a/b", "sp ace", &"x".repeat(65)] {
            assert!(!valid_session_id(bad), "{bad}");
        }
    }
}
