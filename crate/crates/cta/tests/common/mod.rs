//! Shared helpers for the integration suites: fixture paths and random
//! event-stream generation.

#![allow(dead_code)]

use std::path::PathBuf;

use rand::rngs::StdRng;
use rand::Rng;

use cta::phase::PhaseType;
use cta::trace::{Condition, EventStream, EventType, TraceEvent};

pub fn fixture_corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join("corpus")
}

pub fn fixture_bundle(name: &str) -> PathBuf {
    fixture_corpus().join(name)
}

pub fn stream(events: Vec<TraceEvent>) -> EventStream {
    EventStream {
        condition: Condition::WithSkill,
        events,
        total_tokens: 0,
        skipped_records: 0,
        unknown_tools: 0,
    }
}

pub fn think(i: usize, text: &str) -> TraceEvent {
    TraceEvent {
        index: i,
        timestamp: None,
        event_type: EventType::Think,
        reasoning: Some(text.to_string()),
        tool_input: None,
        tool_output: None,
        target: None,
        tool_name: String::new(),
        tokens: 0,
        exit_code: None,
    }
}

pub fn read(i: usize, target: &str) -> TraceEvent {
    TraceEvent {
        index: i,
        timestamp: None,
        event_type: EventType::Read,
        reasoning: None,
        tool_input: None,
        tool_output: None,
        target: Some(target.to_string()),
        tool_name: "Read".into(),
        tokens: 0,
        exit_code: None,
    }
}

pub fn write(i: usize, target: &str, content: &str) -> TraceEvent {
    TraceEvent {
        index: i,
        timestamp: None,
        event_type: EventType::Write,
        reasoning: None,
        tool_input: Some(content.to_string()),
        tool_output: Some("ok".into()),
        target: Some(target.to_string()),
        tool_name: "Write".into(),
        tokens: 0,
        exit_code: None,
    }
}

pub fn search(i: usize, pattern: &str) -> TraceEvent {
    TraceEvent {
        index: i,
        timestamp: None,
        event_type: EventType::Search,
        reasoning: None,
        tool_input: Some(pattern.to_string()),
        tool_output: None,
        target: None,
        tool_name: "Grep".into(),
        tokens: 0,
        exit_code: None,
    }
}

pub fn exec(i: usize, command: &str, output: &str, exit: i64) -> TraceEvent {
    TraceEvent {
        index: i,
        timestamp: None,
        event_type: EventType::Execute,
        reasoning: None,
        tool_input: Some(command.to_string()),
        tool_output: Some(output.to_string()),
        target: None,
        tool_name: "Bash".into(),
        tokens: 0,
        exit_code: Some(exit),
    }
}

pub const TARGET_POOL: [&str; 8] = [
    "src/a.py",
    "src/b.py",
    "src/core/engine.py",
    "tests/test_a.py",
    "docs/notes.md",
    "config.yaml",
    "scripts/run.sh",
    "README.md",
];

/// Random event stream mixing all five event types, validation commands,
/// and pass/fail outcomes.
pub fn random_stream(rng: &mut StdRng, len: usize) -> EventStream {
    let mut events = Vec::with_capacity(len);
    for i in 0..len {
        let event = match rng.gen_range(0..10) {
            0 | 1 => read(i, TARGET_POOL[rng.gen_range(0..TARGET_POOL.len())]),
            2..=4 => write(
                i,
                TARGET_POOL[rng.gen_range(0..TARGET_POOL.len())],
                "line one\nline two\n",
            ),
            5 => search(i, "needle"),
            6 => think(i, "considering the next step"),
            _ => {
                let (command, output, exit) = match rng.gen_range(0..4) {
                    0 => ("pytest -q", "3 passed", 0),
                    1 => ("pytest -q", "1 failed", 1),
                    2 => ("cargo test", "test result: ok", 0),
                    _ => ("ls -la", "total 4", 0),
                };
                exec(i, command, output, exit)
            }
        };
        events.push(event);
    }
    stream(events)
}

/// Stream of nothing but non-validation executions (the fallback shape).
pub fn execution_only_stream(rng: &mut StdRng, len: usize) -> EventStream {
    let mut events = Vec::with_capacity(len);
    for i in 0..len {
        let command = ["ls", "mkdir build", "chmod +x run.sh"][rng.gen_range(0..3)];
        events.push(exec(i, command, "", 0));
    }
    stream(events)
}

/// Random phase-type sequence of the given length.
pub fn random_phases(rng: &mut StdRng, len: usize) -> Vec<PhaseType> {
    (0..len)
        .map(|_| PhaseType::ALL[rng.gen_range(0..PhaseType::ALL.len())])
        .collect()
}
