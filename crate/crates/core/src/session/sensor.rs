use serde::{Deserialize, Serialize};

/// One distance sample. `timestamp_ms` is monotonic per source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityReading {
    pub distance_cm: f64,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SensorError {
    #[error("malformed sensor line `{line}`: {reason}")]
    Malformed { line: String, reason: &'static str },
    #[error("replay line {line_no}: {source}")]
    Replay {
        line_no: usize,
        #[source]
        source: Box<SensorError>,
    },
    #[error("replay line {line_no}: timestamp {at} is earlier than {previous}")]
    OutOfOrder {
        line_no: usize,
        at: u64,
        previous: u64,
    },
}

fn malformed(line: &str, reason: &'static str) -> SensorError {
    SensorError::Malformed {
        line: line.to_string(),
        reason,
    }
}

/// Parses a live protocol line, `D <cm>`. The timestamp is left at zero for
/// the reader to stamp.
pub fn parse_sensor_line(line: &str) -> Result<ProximityReading, SensorError> {
    let trimmed = line.trim_end_matches(['\r', '\n']);
    let mut parts = trimmed.split_ascii_whitespace();
    match parts.next() {
        Some("D") => {}
        Some(_) => return Err(malformed(line, "unknown verb")),
        None => return Err(malformed(line, "empty line")),
    }
    let value = parts.next().ok_or_else(|| malformed(line, "missing distance"))?;
    if parts.next().is_some() {
        return Err(malformed(line, "trailing fields"));
    }
    let distance_cm: f64 = value.parse().map_err(|_| malformed(line, "distance is not a number"))?;
    if !distance_cm.is_finite() {
        return Err(malformed(line, "distance is not finite"));
    }
    if distance_cm < 0.0 {
        return Err(malformed(line, "distance is negative"));
    }
    Ok(ProximityReading {
        distance_cm,
        timestamp_ms: 0,
    })
}

/// Parses a replay line, `@<millis> D <cm>`.
pub fn parse_replay_line(line: &str) -> Result<ProximityReading, SensorError> {
    let rest = line
        .strip_prefix('@')
        .ok_or_else(|| malformed(line, "missing @<millis> prefix"))?;
    let (ts, body) = rest
        .split_once(' ')
        .ok_or_else(|| malformed(line, "missing reading after timestamp"))?;
    let timestamp_ms: u64 = ts.parse().map_err(|_| malformed(line, "bad timestamp"))?;
    let mut reading = parse_sensor_line(body)?;
    reading.timestamp_ms = timestamp_ms;
    Ok(reading)
}

/// Parses a whole replay file. Blank lines and `#` comments are skipped;
/// timestamps must not go backwards.
pub fn parse_replay(text: &str) -> Result<Vec<ProximityReading>, SensorError> {
    let mut out: Vec<ProximityReading> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let r = parse_replay_line(line).map_err(|e| SensorError::Replay {
            line_no,
            source: Box::new(e),
        })?;
        if let Some(prev) = out.last() {
            if r.timestamp_ms < prev.timestamp_ms {
                return Err(SensorError::OutOfOrder {
                    line_no,
                    at: r.timestamp_ms,
                    previous: prev.timestamp_ms,
                });
            }
        }
        out.push(r);
    }
    Ok(out)
}

pub fn format_replay_line(r: &ProximityReading) -> String {
    format!("@{} D {}", r.timestamp_ms, r.distance_cm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn live_lines() {
        assert_eq!(parse_sensor_line("D 42.5").unwrap().distance_cm, 42.5);
        assert_eq!(parse_sensor_line("D 0\r\n").unwrap().distance_cm, 0.0);
        for bad in ["D -1", "DIST 42", "D", "", "D 4 5", "D nan", "D inf", "d 42", "D 4x"] {
            assert!(parse_sensor_line(bad).is_err(), "{bad:?}");
        }
        match parse_sensor_line("DIST 42").unwrap_err() {
            SensorError::Malformed { line, .. } => assert_eq!(line, "DIST 42"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn replay_file() {
        let text = "# approach\n@0 D 120\n@100 D 45.5\n\n@100 D 44\n";
        let r = parse_replay(text).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r[1].timestamp_ms, 100);
        assert_eq!(format_replay_line(&r[1]), "@100 D 45.5");
        assert!(matches!(
            parse_replay("@5 D 1\n@4 D 1"),
            Err(SensorError::OutOfOrder { line_no: 2, .. })
        ));
        assert!(matches!(parse_replay("@x D 1"), Err(SensorError::Replay { line_no: 1, .. })));
    }
}
