mod common;

use std::time::Duration;

use oceanvoice_core::session::{
    format_replay_line, parse_replay, parse_replay_line, parse_sensor_line, step, GateAction, GateConfig,
    GateInput, GateMachine, GateState, ProximityReading, SensorError, SessionState,
};
use proptest::prelude::*;
use rand::Rng;

use common::*;

fn reading(d: f64, t: u64) -> GateInput {
    GateInput::Reading(ProximityReading { distance_cm: d, timestamp_ms: t })
}

#[test]
fn brief_step_back_keeps_recording() {
    let mut g = GateMachine::new(GateConfig::default());
    g.feed_reading(40.0, 0);
    assert_eq!(g.state(), SessionState::Recording);
    for t in (100..=500).step_by(100) {
        assert!(g.feed_reading(55.0, t).is_empty());
    }
    g.feed_reading(45.0, 600);
    assert_eq!(g.state(), SessionState::Recording);

    let mut g = GateMachine::new(GateConfig::default());
    g.feed_reading(40.0, 0);
    let mut stops = 0;
    for t in (100..=700).step_by(100) {
        for a in g.feed_reading(65.0, t) {
            if let GateAction::StopRecording { discard } = a {
                assert!(!discard);
                assert_eq!(t, 600);
                stops += 1;
            }
        }
    }
    assert_eq!(stops, 1);
    assert_eq!(g.state(), SessionState::Processing);
}

#[test]
fn jittery_visits_record_once_each() {
    let mut r = rng(5);
    for _ in 0..50 {
        let n = 1 + (r.random_range(0..5) as usize);
        let trace = visitor_trace(&mut r, n);
        let want = expected_episodes(&trace, 50.0, 60.0, 500);
        assert_eq!(want.len(), n);
        let (starts, stops) = run_lifecycle(&trace);
        let got: Vec<(u64, u64)> = starts.into_iter().zip(stops.iter().copied()).collect();
        assert_eq!(got, want);
        assert_eq!(stops.len(), n);
    }
}

#[test]
fn sensor_lines() {
    assert_eq!(parse_sensor_line("D 42.5\r\n").unwrap().distance_cm, 42.5);
    for bad in ["", "X 1", "D", "D -1", "D nan", "D inf", "D 1 2", "D abc"] {
        assert!(matches!(parse_sensor_line(bad), Err(SensorError::Malformed { .. })), "{bad:?}");
    }
    let r = parse_replay_line("@1500 D 33").unwrap();
    assert_eq!((r.timestamp_ms, r.distance_cm), (1500, 33.0));
    assert_eq!(parse_replay_line(&format_replay_line(&r)).unwrap(), r);
    let file = "# visit\n@0 D 120\n\n@50 D 45.5\n@100 D 61\n";
    assert_eq!(parse_replay(file).unwrap().len(), 3);
    assert!(matches!(parse_replay("@100 D 1\n@50 D 2"), Err(SensorError::OutOfOrder { line_no: 2, .. })));
    assert!(matches!(parse_replay("@0 D 1\nD 2"), Err(SensorError::Replay { line_no: 2, .. })));
}

#[test]
fn replay_file_round_trip() {
    let trace = visitor_trace(&mut rng(2), 3);
    let text: String = trace
        .iter()
        .map(|&(t, d)| format_replay_line(&ProximityReading { distance_cm: d, timestamp_ms: t }) + "\n")
        .collect();
    let back: Vec<(u64, f64)> = parse_replay(&text).unwrap().into_iter().map(|r| (r.timestamp_ms, r.distance_cm)).collect();
    assert_eq!(back, trace);
}

fn input_strategy() -> impl Strategy<Value = Vec<(u8, u64, f64)>> {
    prop::collection::vec((0u8..8, 0u64..3_000, 0.0f64..150.0), 0..80)
}

/// Turns generated triples into inputs with non-decreasing timestamps.
fn inputs(raw: &[(u8, u64, f64)]) -> Vec<GateInput> {
    let mut t = 0;
    raw.iter()
        .map(|&(kind, gap, d)| {
            t += gap;
            match kind {
                0 => GateInput::TranscriptReady { text: if d < 20.0 { String::new() } else { "q".into() }, at_ms: t },
                1 => GateInput::PipelineDone { at_ms: t },
                2 => GateInput::ResponseDone { at_ms: t },
                3 => GateInput::Tick { at_ms: t },
                _ => reading(d, t),
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn step_is_pure(raw in input_strategy()) {
        let cfg = GateConfig::default();
        let mut s = GateState::idle();
        for i in inputs(&raw) {
            let a = step(&s, &i, &cfg);
            let b = step(&s, &i, &cfg);
            prop_assert_eq!(&a, &b);
            s = a.0;
        }
    }

    #[test]
    fn nobody_near_means_no_recording(raw in input_strategy()) {
        let cfg = GateConfig::default();
        let mut s = GateState::idle();
        for i in inputs(&raw) {
            let i = match i {
                GateInput::Reading(r) => reading(r.distance_cm.max(cfg.engage_cm), r.timestamp_ms),
                other => other,
            };
            let (next, actions) = step(&s, &i, &cfg);
            let started = actions.iter().any(|a| matches!(a, GateAction::StartRecording { .. }));
            prop_assert!(!started);
            prop_assert_eq!(next.state, SessionState::Idle);
            s = next;
        }
    }

    #[test]
    fn starts_and_stops_alternate(raw in input_strategy()) {
        let cfg = GateConfig::default();
        let mut s = GateState::idle();
        let mut open = false;
        for i in inputs(&raw) {
            let (next, actions) = step(&s, &i, &cfg);
            for a in &actions {
                match a {
                    GateAction::StartRecording { .. } => {
                        prop_assert!(!open);
                        open = true;
                    }
                    GateAction::StopRecording { .. } => {
                        prop_assert!(open);
                        open = false;
                    }
                    _ => {}
                }
            }
            prop_assert_eq!(open, next.state == SessionState::Recording);
            s = next;
        }
    }

    #[test]
    fn silence_returns_to_idle(raw in input_strategy(), extra in 1u64..10_000) {
        let cfg = GateConfig::default();
        let mut s = GateState::idle();
        for i in inputs(&raw) {
            s = step(&s, &i, &cfg).0;
        }
        if let (Some(last), Some(seen)) = (s.last_at_ms, s.last_reading_ms) {
            let at = last.max(seen + cfg.silence_timeout.as_millis() as u64 + extra);
            let (next, actions) = step(&s, &GateInput::Tick { at_ms: at }, &cfg);
            if at - seen > 5_000 {
                prop_assert_eq!(next.state, SessionState::Idle);
                let was_recording = s.state == SessionState::Recording;
                prop_assert_eq!(actions.contains(&GateAction::StopRecording { discard: true }), was_recording);
            }
        }
    }
}

#[test]
fn config_limits() {
    let mut c = GateConfig::default();
    assert!(c.validate().is_ok());
    c.release_cm = c.engage_cm;
    assert!(c.validate().is_err());
    c = GateConfig { silence_timeout: Duration::ZERO, ..GateConfig::default() };
    assert!(c.validate().is_err());
}
