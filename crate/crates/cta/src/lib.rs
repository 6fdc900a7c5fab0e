//! Counterfactual trace auditing for paired agent runs.
//!
//! Given a bundle of two traces for the same task — one produced with a
//! skill document attached, one without — this crate localizes where the
//! two runs diverge and classifies each divergence into Skill Influence
//! Patterns, surfacing effects that a pass-rate delta alone cannot show.
//!
//! The pipeline:
//!
//! 1. [`trace`] parses each raw record stream into typed events
//!    (read / write / execute / search / think) with canonical targets
//!    and a per-trace token total.
//! 2. [`phase`] segments each stream into Orientation, Implementation,
//!    Validation, Debugging, and Finalization spans with a deterministic
//!    state machine (plus a whole-trace Implementation fallback).
//! 3. [`align`] warps the two phase sequences together, pairs intent
//!    windows by TF-IDF cosine, compares action windows, and emits
//!    divergence records — including a one-sided recovery pass for writes
//!    the baseline never touches.
//! 4. [`detect`] scores each divergence with five independent rule
//!    detectors (PS, EP, RE, SA, CB); a pattern fires at score >= theta.
//! 5. [`report`] aggregates task audits into corpus tables stratified by
//!    baseline pass rate, and [`diff`] renders row-aligned trace diffs.
//!
//! The `examples/` directory shows one runnable program per capability;
//! the thin `cta` binary exposes the same flows as subcommands
//! (`audit`, `batch`, `report`, `diff`).

pub mod align;
pub mod bundle;
pub mod cli;
pub mod config;
pub mod detect;
pub mod diff;
pub mod error;
pub mod phase;
pub mod report;
pub mod text;
pub mod trace;

pub use align::{
    align_bundle, align_intents, align_phases, compare_action_windows, extract_intent_windows,
    intent_similarity, recover_unilateral, DivType, DivergenceRecord, IntentWindow, PhaseAlignment,
};
pub use bundle::{delta_p, load_bundle, token_ratio, EvalReport, TaskBundle, TaskSpec};
pub use config::{AuditConfig, DetectorWeights};
pub use detect::{
    detect_cb, detect_ep, detect_ps, detect_re, detect_sa, label_divergence, DetectorContext,
    SipClass, SipFire,
};
pub use diff::{compute_diff, render_diff, TraceDiff};
pub use error::{CtaError, Result};
pub use phase::{
    is_validation_command, segment, validation_outcome, PhaseSequence, PhaseSpan, PhaseType,
    ValidationOutcome,
};
pub use report::{
    audit_task, phase_distribution, render_table, stratify, Bucket, CorpusStats, TaskAudit,
};
pub use trace::{
    canonical_signature, classify_event, normalize_path, parse_trace, Condition, EventStream,
    EventType, RawTrace, TraceEvent,
};
