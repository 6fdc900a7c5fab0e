//! Audit configuration: thresholds, command tables, and detector weights.
//!
//! Every tunable lives here so that identical configs produce identical
//! audits. The effective config is echoed into each audit output.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CtaError, Result};
use crate::trace::EventType;

/// Weight triple for one detector's three signature clauses.
pub type ClauseWeights = [f64; 3];

/// Per-class clause weights for the five SIP detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorWeights {
    pub ps: ClauseWeights,
    pub ep: ClauseWeights,
    pub re: ClauseWeights,
    pub sa: ClauseWeights,
    pub cb: ClauseWeights,
}

impl Default for DetectorWeights {
    fn default() -> Self {
        DetectorWeights {
            ps: [0.4, 0.3, 0.3],
            ep: [0.4, 0.3, 0.3],
            re: [0.35, 0.35, 0.30],
            sa: [0.35, 0.25, 0.40],
            cb: [0.35, 0.30, 0.35],
        }
    }
}

/// Tunables for a full audit run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditConfig {
    /// Intent-pair similarity threshold; pairs below it stay unaligned.
    pub delta: f64,
    /// SIP fire threshold; a detector score >= theta fires.
    pub theta: f64,
    /// Commands whose appearance (as a contiguous token run) marks a
    /// validation execution.
    pub validation_commands: Vec<String>,
    /// Case-insensitive substrings of tool output that mark a failure.
    pub failure_markers: Vec<String>,
    /// Case-insensitive substrings of tool output that mark a success.
    pub success_markers: Vec<String>,
    /// Prefix stripped from every normalized path ("" disables stripping).
    pub workspace_prefix: String,
    /// Smallest skill n-gram that counts as a literal copy.
    pub sa_ngram_min: usize,
    /// Largest skill n-gram probed when reporting the longest literal copy.
    pub sa_ngram_max: usize,
    /// Clause weights per SIP class.
    pub detector_weights: DetectorWeights,
    /// Row cap for rendered trace diffs.
    pub max_diff_rows: usize,
    /// Raw tool label -> event type. Unlisted labels classify as EXECUTE.
    pub tool_map: BTreeMap<String, EventType>,
    /// Tokens counted as guards in written content. Single words match on
    /// word boundaries; entries with spaces match as literal substrings.
    pub guard_tokens: Vec<String>,
    /// Character budget for the command head in a canonical signature.
    pub signature_budget: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            delta: 0.5,
            theta: 0.50,
            validation_commands: vec![
                "pytest".into(),
                "npm test".into(),
                "mvn test".into(),
                "cargo test".into(),
            ],
            failure_markers: vec!["failed".into(), "error".into()],
            success_markers: vec!["passed".into(), "ok".into()],
            workspace_prefix: String::new(),
            sa_ngram_min: 3,
            sa_ngram_max: 8,
            detector_weights: DetectorWeights::default(),
            max_diff_rows: 28,
            tool_map: default_tool_map(),
            guard_tokens: vec![
                "if".into(),
                "try".into(),
                "assert".into(),
                "trap".into(),
                "set -".into(),
            ],
            signature_budget: 50,
        }
    }
}

fn default_tool_map() -> BTreeMap<String, EventType> {
    let mut map = BTreeMap::new();
    for (name, ty) in [
        ("Read", EventType::Read),
        ("NotebookRead", EventType::Read),
        ("Write", EventType::Write),
        ("Edit", EventType::Write),
        ("MultiEdit", EventType::Write),
        ("NotebookEdit", EventType::Write),
        ("Bash", EventType::Execute),
        ("BashOutput", EventType::Execute),
        ("Grep", EventType::Search),
        ("Glob", EventType::Search),
        ("WebSearch", EventType::Search),
        ("LS", EventType::Search),
    ] {
        map.insert(name.to_string(), ty);
    }
    map
}

impl AuditConfig {
    /// Load a config file (JSON, same shape as the serialized default).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CtaError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CtaError::json(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("delta", self.delta), ("theta", self.theta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CtaError::InvalidConfig(format!("{name} out of [0,1]: {v}")));
            }
        }
        if self.sa_ngram_min < 3 {
            return Err(CtaError::InvalidConfig(format!(
                "sa_ngram_min must be >= 3, got {}",
                self.sa_ngram_min
            )));
        }
        if self.sa_ngram_max < self.sa_ngram_min {
            return Err(CtaError::InvalidConfig(format!(
                "sa_ngram_max {} < sa_ngram_min {}",
                self.sa_ngram_max, self.sa_ngram_min
            )));
        }
        Ok(())
    }
}
