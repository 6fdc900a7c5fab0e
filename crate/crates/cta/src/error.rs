//! Error types shared across the audit pipeline.

use std::path::PathBuf;
use thiserror::Error;

/// Everything that can go wrong while loading, parsing, or auditing a bundle.
#[derive(Debug, Error)]
pub enum CtaError {
    /// A required bundle input (trace, skill document, eval report) is absent.
    #[error("missing bundle input: {0}")]
    MissingInput(String),

    /// A trace file contains a record that is not a JSON object.
    #[error("malformed trace {file}: record {record} is not a valid object")]
    MalformedTrace { file: String, record: usize },

    /// A record inside an already-loaded stream cannot be converted to an event.
    #[error("malformed record at index {0}")]
    MalformedRecord(usize),

    /// The two traces (or the metadata file) disagree on the task identifier.
    #[error("task id mismatch: {0} vs {1}")]
    TaskIdMismatch(String, String),

    /// A pass rate or similar fraction fell outside [0, 1].
    #[error("value out of range: {0}")]
    OutOfRange(f64),

    /// Token ratio denominator was zero; the ratio is undefined.
    #[error("token ratio undefined: without-skill token total is zero")]
    DivisionByZero,

    /// A trace yielded zero tool or reasoning events.
    #[error("empty trace: no tool or reasoning events")]
    EmptyTrace,

    /// Path normalization was handed an empty string.
    #[error("empty path")]
    EmptyPath,

    /// Canonical signatures exist only for tool events.
    #[error("not a tool event: reasoning events have no signature")]
    NotAToolEvent,

    /// Phase segmentation requires a non-empty event stream.
    #[error("empty event stream")]
    EmptyStream,

    /// Phase alignment requires two non-empty phase sequences.
    #[error("empty phase sequence")]
    EmptySequence,

    /// Corpus statistics require at least one audit.
    #[error("empty corpus: no audits to aggregate")]
    EmptyCorpus,

    /// Requested report format is not one of text/csv/md.
    #[error("unknown output format: {0}")]
    UnknownFormat(String),

    /// A config knob holds a value outside its documented range.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Filesystem problem while reading or writing audit artifacts.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A JSON input (eval report, task metadata, config) failed to parse.
    #[error("invalid json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    /// Eval report carried both a pass_rate and counts that disagree.
    #[error("inconsistent eval report: pass_rate {rate} != {passed}/{total}")]
    InconsistentEvalReport { rate: f64, passed: u64, total: u64 },

    /// Wraps a module error with the task it occurred in.
    #[error("task {task_id}: {source}")]
    Task {
        task_id: String,
        #[source]
        source: Box<CtaError>,
    },
}

impl CtaError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CtaError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        CtaError::Json {
            path: path.into(),
            source,
        }
    }

    /// Attach a task id to an error bubbling out of a module.
    pub fn in_task(self, task_id: &str) -> Self {
        CtaError::Task {
            task_id: task_id.to_string(),
            source: Box::new(self),
        }
    }

    /// Walk through `Task` wrappers to the underlying module error.
    pub fn root(&self) -> &CtaError {
        match self {
            CtaError::Task { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, CtaError>;
