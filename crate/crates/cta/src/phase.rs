//! Phase segmentation: a deterministic finite state machine that splits an
//! event stream into Orientation / Implementation / Validation / Debugging /
//! Finalization spans, with a whole-trace Implementation fallback for
//! streams the machine leaves unphased.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::AuditConfig;
use crate::error::{CtaError, Result};
use crate::text::whitespace_tokens;
use crate::trace::{EventStream, EventType, TraceEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseType {
    Orientation,
    Implementation,
    Validation,
    Debugging,
    Finalization,
}

impl PhaseType {
    pub const ALL: [PhaseType; 5] = [
        PhaseType::Orientation,
        PhaseType::Implementation,
        PhaseType::Validation,
        PhaseType::Debugging,
        PhaseType::Finalization,
    ];
}

impl fmt::Display for PhaseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PhaseType::Orientation => "orientation",
            PhaseType::Implementation => "implementation",
            PhaseType::Validation => "validation",
            PhaseType::Debugging => "debugging",
            PhaseType::Finalization => "finalization",
        };
        f.write_str(s)
    }
}

/// A contiguous, inclusive event range carrying one phase label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSpan {
    pub phase_type: PhaseType,
    pub start_index: usize,
    pub end_index: usize,
    pub via_fallback: bool,
}

impl PhaseSpan {
    pub fn contains(&self, index: usize) -> bool {
        self.start_index <= index && index <= self.end_index
    }

    pub fn len(&self) -> usize {
        self.end_index - self.start_index + 1
    }

    pub fn is_empty(&self) -> bool {
        false // spans are inclusive ranges, never empty
    }
}

/// Ordered phase spans partitioning a stream's index range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSequence {
    pub spans: Vec<PhaseSpan>,
    pub fallback_applied: bool,
}

impl PhaseSequence {
    pub fn types(&self) -> Vec<PhaseType> {
        self.spans.iter().map(|s| s.phase_type).collect()
    }

    /// Index of the span containing an event index.
    pub fn span_of(&self, event_index: usize) -> Option<usize> {
        self.spans.iter().position(|s| s.contains(event_index))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationOutcome {
    Pass,
    Fail,
    Unknown,
}

/// True when an EXECUTE event's command contains one of the configured
/// validation commands as a contiguous token run ("pytest" matches
/// "python -m pytest tests/ -v" but not "scripts/pytest_helper.py").
pub fn is_validation_command(event: &TraceEvent, config: &AuditConfig) -> bool {
    if event.event_type != EventType::Execute {
        return false;
    }
    let Some(command) = event.tool_input.as_deref() else {
        return false;
    };
    let tokens = whitespace_tokens(command);
    config.validation_commands.iter().any(|entry| {
        let needle = whitespace_tokens(entry);
        !needle.is_empty()
            && tokens.len() >= needle.len()
            && tokens.windows(needle.len()).any(|w| w == needle.as_slice())
    })
}

/// Classify a validation execution: FAIL on a nonzero exit code or a failure
/// marker in the output, PASS on explicit success evidence, else UNKNOWN.
pub fn validation_outcome(event: &TraceEvent, config: &AuditConfig) -> ValidationOutcome {
    outcome_class(event, config)
}

/// Outcome classification shared with the divergence comparison: exit status
/// class plus marker presence.
pub fn outcome_class(event: &TraceEvent, config: &AuditConfig) -> ValidationOutcome {
    if let Some(code) = event.exit_code {
        if code != 0 {
            return ValidationOutcome::Fail;
        }
    }
    let output = event.tool_output.as_deref().unwrap_or("");
    let lowered = output.to_lowercase();
    if config
        .failure_markers
        .iter()
        .any(|m| lowered.contains(&m.to_lowercase()))
    {
        return ValidationOutcome::Fail;
    }
    if nonzero_exit_in_output(&lowered) {
        return ValidationOutcome::Fail;
    }
    if event.exit_code == Some(0) {
        return ValidationOutcome::Pass;
    }
    if config
        .success_markers
        .iter()
        .any(|m| lowered.contains(&m.to_lowercase()))
    {
        return ValidationOutcome::Pass;
    }
    ValidationOutcome::Unknown
}

/// "exit code 2" / "exit status 1" style evidence inside tool output.
fn nonzero_exit_in_output(lowered: &str) -> bool {
    for pat in ["exit code ", "exit status "] {
        let mut rest = lowered;
        while let Some(pos) = rest.find(pat) {
            let tail = &rest[pos + pat.len()..];
            let digits: String = tail.chars().take_while(|c| c.is_ascii_digit()).collect();
            if let Ok(n) = digits.parse::<i64>() {
                if n != 0 {
                    return true;
                }
            }
            rest = &rest[pos + pat.len()..];
        }
    }
    false
}

/// Segment a stream into phase spans.
///
/// Transitions fire only on the first write, validation executions, writes
/// that follow a failing validation, and the tail after a passing
/// validation; every other event extends the current span, keeping phases
/// few and large. Streams the machine leaves wholly unphased (nothing but
/// non-validation executions) collapse to a single Implementation span.
pub fn segment(stream: &EventStream, config: &AuditConfig) -> Result<PhaseSequence> {
    if stream.is_empty() {
        return Err(CtaError::EmptyStream);
    }

    struct Builder {
        spans: Vec<PhaseSpan>,
        current: Option<(PhaseType, usize)>, // (phase, start)
    }
    impl Builder {
        fn open(&mut self, phase: PhaseType, at: usize, pending_start: Option<usize>) {
            if let Some((p, start)) = self.current.take() {
                self.spans.push(PhaseSpan {
                    phase_type: p,
                    start_index: start,
                    end_index: at - 1,
                    via_fallback: false,
                });
            }
            // an unopened leading run of executions joins the first span
            let start = pending_start.unwrap_or(at);
            self.current = Some((phase, start));
        }
        fn close(&mut self, last: usize) {
            if let Some((p, start)) = self.current.take() {
                self.spans.push(PhaseSpan {
                    phase_type: p,
                    start_index: start,
                    end_index: last,
                    via_fallback: false,
                });
            }
        }
    }

    let mut b = Builder {
        spans: Vec::new(),
        current: None,
    };
    let mut pending_start: Option<usize> = None;
    let mut last_validation: Option<ValidationOutcome> = None;

    for (i, event) in stream.events.iter().enumerate() {
        let is_validation = is_validation_command(event, config);
        let forced: Option<PhaseType> = if event.event_type == EventType::Write {
            if last_validation == Some(ValidationOutcome::Fail) {
                Some(PhaseType::Debugging)
            } else {
                Some(PhaseType::Implementation)
            }
        } else if is_validation {
            Some(PhaseType::Validation)
        } else {
            None
        };

        match (b.current.is_some(), forced) {
            (false, Some(phase)) => {
                b.open(phase, i, pending_start.take());
            }
            (false, None) => match event.event_type {
                EventType::Read | EventType::Search | EventType::Think => {
                    b.open(PhaseType::Orientation, i, pending_start.take());
                }
                _ => {
                    // non-validation execution before any span: defer
                    if pending_start.is_none() {
                        pending_start = Some(i);
                    }
                }
            },
            (true, Some(phase)) => {
                if b.current.map(|(p, _)| p) != Some(phase) {
                    b.open(phase, i, None);
                }
            }
            (true, None) => {} // extend
        }

        if is_validation {
            last_validation = Some(validation_outcome(event, config));
        }
    }

    let last = stream.events.len() - 1;
    b.close(last);

    if b.spans.is_empty() {
        // nothing but non-validation executions: whole-trace fallback
        return Ok(PhaseSequence {
            spans: vec![PhaseSpan {
                phase_type: PhaseType::Implementation,
                start_index: 0,
                end_index: last,
                via_fallback: true,
            }],
            fallback_applied: true,
        });
    }

    let mut spans = b.spans;
    split_finalization(&mut spans, stream, config);

    Ok(PhaseSequence {
        spans,
        fallback_applied: false,
    })
}

/// If the final span is a validation span whose last validation passed and
/// trailing events follow it, those trailing events become Finalization.
fn split_finalization(spans: &mut Vec<PhaseSpan>, stream: &EventStream, config: &AuditConfig) {
    let Some(last_span) = spans.last().copied() else {
        return;
    };
    if last_span.phase_type != PhaseType::Validation {
        return;
    }
    let mut last_validation_idx = None;
    for i in last_span.start_index..=last_span.end_index {
        if is_validation_command(&stream.events[i], config) {
            last_validation_idx = Some(i);
        }
    }
    let Some(vi) = last_validation_idx else { return };
    if vi >= last_span.end_index {
        return; // no tail
    }
    if validation_outcome(&stream.events[vi], config) != ValidationOutcome::Pass {
        return;
    }
    let tail_start = vi + 1;
    spans.last_mut().unwrap().end_index = vi;
    spans.push(PhaseSpan {
        phase_type: PhaseType::Finalization,
        start_index: tail_start,
        end_index: last_span.end_index,
        via_fallback: false,
    });
}
