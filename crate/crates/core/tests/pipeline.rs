mod common;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use oceanvoice_core::agents::{ChatBackend, MockBackend, RecordingBackend, Stage};
use oceanvoice_core::pipeline::{
    read_transcript, replay_records, Backends, EventType, NullSink, SessionView, TranscriptStore, VecSink, STAGES,
    TOTAL_TIMING,
};
use oceanvoice_core::triggers::{EventKind, TriggerRule};

use common::*;

fn demo_backends() -> Backends {
    Backends::from_script(&demo_script(Duration::ZERO))
}

#[test]
fn green_water_golden_run() {
    let engine = engine_over(index_of(&GREEN_WATER), demo_backends());
    let sink = VecSink::new();
    let mut ctx = engine.new_session("station-1");
    let r = engine.run(&mut ctx, "why is the water green", 0, &sink).unwrap();
    assert_eq!(r.visual.token, "CHLOROPHYLL");
    assert_eq!(r.visual_entry.as_ref().unwrap().token, "CHLOROPHYLL");
    assert_eq!(r.hits.len(), 2);
    let paras: BTreeSet<u32> = r.hits.iter().map(|h| h.para_id.0).collect();
    assert_eq!(paras.len(), 2);
    assert!(r.response_text.contains("plankton"));
    assert!(r.events.iter().any(|e| e.rule_id == "plankton"));
    assert!(r.degraded.is_empty());
    for stage in STAGES.iter().chain([&TOTAL_TIMING]) {
        assert!(r.timings.contains_key(*stage), "{stage}");
    }

    let events = sink.events();
    let seqs: Vec<u64> = events.iter().map(|e| e.seq).collect();
    assert_eq!(seqs, (1..=events.len() as u64).collect::<Vec<_>>());
    assert_eq!(events[0].kind, EventType::StageTiming);
    assert_eq!(events[0].payload["stage"], "decide");
    assert_eq!(events[1].kind, EventType::VisualSelected);
    assert_eq!(events[1].payload["token"], "CHLOROPHYLL");
    let timed: Vec<&str> = events
        .iter()
        .filter(|e| e.kind == EventType::StageTiming)
        .map(|e| e.payload["stage"].as_str().unwrap())
        .collect();
    assert_eq!(timed, STAGES);
    assert!(events.iter().any(|e| e.kind == EventType::Subtitle));

    let mut view = SessionView::new("station-1", &engine.catalog());
    for e in &events {
        view.apply(e);
    }
    assert_eq!(view.central.as_deref(), Some("CHLOROPHYLL"));
}

#[test]
fn empty_corpus_still_answers() {
    let engine = engine_over(index_of(&[]), demo_backends());
    let r = engine.run(&mut engine.new_session("s"), "why is the water green", 0, &NullSink).unwrap();
    assert!(r.hits.is_empty());
    assert!(!r.response_text.trim().is_empty());
    assert!(engine.run(&mut engine.new_session("s"), "   ", 0, &NullSink).is_err());
}

#[test]
fn responder_prompt_follows_selection() {
    let script = demo_script(Duration::ZERO);
    let responder = RecordingBackend::new(Arc::new(script.backend_for(Stage::Responder)));
    let backends = Backends {
        decider: Arc::new(script.backend_for(Stage::Decider)),
        rewriter: Arc::new(script.backend_for(Stage::Rewriter)),
        responder: Arc::new(responder.clone()),
    };
    let engine = engine_over(index_of(&GREEN_WATER), backends);
    let mut ctx = engine.new_session("s");

    let r = engine.run(&mut ctx, "who are you", 0, &NullSink).unwrap();
    assert!(r.visual.is_none());
    let user = responder.last_prompt().unwrap().last().unwrap().content.clone();
    assert!(!user.contains("[VISUAL]"));

    let r = engine.run(&mut ctx, "why is the water green", 1, &NullSink).unwrap();
    let user = responder.last_prompt().unwrap().last().unwrap().content.clone();
    let entry = r.visual_entry.unwrap();
    assert!(user.starts_with(&format!("[VISUAL]\n{}: {}", entry.title, entry.description)));
    for h in &r.hits {
        assert_eq!(user.matches(h.paragraph_text.as_str()).count(), 1);
    }
}

#[test]
fn failing_backends_degrade_to_defaults() {
    struct Down;
    impl ChatBackend for Down {
        fn complete(
            &self,
            _: &[oceanvoice_core::agents::ChatMessage],
            _: &oceanvoice_core::agents::CompletionParams,
        ) -> Result<String, oceanvoice_core::agents::BackendError> {
            Err(oceanvoice_core::agents::BackendError::Transport("down".into()))
        }
    }
    let mut agents = oceanvoice_core::agents::AgentConfig::default();
    agents.retry.backoff = Duration::ZERO;
    let engine = engine_over(index_of(&GREEN_WATER), Backends::shared(Arc::new(Down))).with_agents(agents.clone());
    let r = engine.run(&mut engine.new_session("s"), "why is the water green", 0, &NullSink).unwrap();
    assert!(r.visual.is_none());
    assert_eq!(r.rewritten, "why is the water green");
    assert_eq!(r.response_text, agents.prompts.canned_reply.trim());
}

/// Queries racing a stream of rule reloads each see exactly one rule set:
/// even versions tag "green" with one token, odd versions with another.
#[test]
fn reloads_never_mix_rule_sets() {
    let rules = |tag: &str| vec![TriggerRule::new("green", &["green"], EventKind::LayerOn).with_payload("token", tag)];
    let responder = MockBackend::new("green green water");
    let engine = Arc::new(engine_over(index_of(&GREEN_WATER), Backends::shared(Arc::new(responder))));
    engine.replace_rules(rules("EVEN")).unwrap();
    let stop = Arc::new(AtomicBool::new(false));
    let reloader = {
        let (engine, stop) = (engine.clone(), stop.clone());
        std::thread::spawn(move || {
            let mut n = 0u64;
            while !stop.load(Ordering::Relaxed) {
                let v = engine.replace_rules(rules(if n.is_multiple_of(2) { "ODD" } else { "EVEN" })).unwrap();
                assert_eq!(v % 2, if n.is_multiple_of(2) { 1 } else { 0 });
                n += 1;
            }
            n
        })
    };
    let workers: Vec<_> = (0..4)
        .map(|w| {
            let engine = engine.clone();
            std::thread::spawn(move || {
                let mut ctx = engine.new_session(format!("w{w}"));
                for i in 0..200 {
                    let r = engine.run(&mut ctx, "green?", i * 60_000, &NullSink).unwrap();
                    assert_eq!(r.events.len(), 1);
                    let want = if r.rules_version.is_multiple_of(2) { "EVEN" } else { "ODD" };
                    assert_eq!(r.events[0].payload["token"], want, "version {}", r.rules_version);
                }
            })
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
    stop.store(true, Ordering::Relaxed);
    assert!(reloader.join().unwrap() > 0);
}

#[test]
fn transcript_grows_by_appending_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let store = TranscriptStore::open(dir.path()).unwrap();
    let engine = engine_over(index_of(&GREEN_WATER), demo_backends()).with_store(store);
    let queries = ["why is the water green", "is the sea warming", "hello there", "tell me about plastic"];
    let mut ctx = engine.new_session("station-1");
    let path = engine.store().unwrap().path_for("station-1").unwrap();
    let mut before = Vec::new();
    for (i, q) in queries.iter().cycle().take(12).enumerate() {
        engine.run(&mut ctx, q, i as u64 * 10_000, &NullSink).unwrap();
        let now = std::fs::read(&path).unwrap();
        assert!(now.starts_with(&before) && now.len() > before.len());
        before = now;
    }
    let records = read_transcript(&path).unwrap();
    assert_eq!(records.len(), 12);
    assert_eq!(records.iter().map(|r| r.run).collect::<Vec<_>>(), (0..12).collect::<Vec<_>>());
    assert_eq!(records[6].history_before.len(), 6);

    let fresh = engine_over(index_of(&GREEN_WATER), demo_backends());
    let report = replay_records(&fresh, &records);
    assert_eq!((report.total, report.matched), (12, 12), "{:?}", report.mismatches.first());
}
