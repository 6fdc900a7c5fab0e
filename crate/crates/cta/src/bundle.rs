//! Bundle loading: the paired with/without traces for one task, the skill
//! document, the two eval reports, and optional task metadata, plus the
//! pass-rate and token-overhead arithmetic on top of them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::AuditConfig;
use crate::error::{CtaError, Result};
use crate::trace::{normalize_path, RawTrace};

/// Unit-test pass information for one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pass_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total: Option<u64>,
}

/// Raw eval report as found on disk: either an explicit rate, counts, or both.
#[derive(Debug, Deserialize)]
struct RawEvalReport {
    pass_rate: Option<f64>,
    passed: Option<u64>,
    total: Option<u64>,
}

impl EvalReport {
    fn from_raw(raw: RawEvalReport, path: &Path) -> Result<Self> {
        let counted = match (raw.passed, raw.total) {
            (Some(p), Some(t)) if t > 0 => Some(p as f64 / t as f64),
            _ => None,
        };
        let rate = match (raw.pass_rate, counted) {
            (Some(rate), Some(from_counts)) => {
                if (rate - from_counts).abs() > 1e-9 {
                    return Err(CtaError::InconsistentEvalReport {
                        rate,
                        passed: raw.passed.unwrap_or(0),
                        total: raw.total.unwrap_or(0),
                    });
                }
                rate
            }
            (Some(rate), None) => rate,
            (None, Some(from_counts)) => from_counts,
            (None, None) => {
                return Err(CtaError::MissingInput(format!(
                    "{}: neither pass_rate nor passed/total present",
                    path.display()
                )))
            }
        };
        if !(0.0..=1.0).contains(&rate) {
            return Err(CtaError::OutOfRange(rate));
        }
        Ok(EvalReport {
            pass_rate: rate,
            passed: raw.passed,
            total: raw.total,
        })
    }
}

/// Task requirements: free text plus the expected write targets, when known.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    #[serde(default)]
    pub requirement_text: String,
    /// Canonicalized expected write targets; absent on corpora without
    /// structured metadata.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file_operations: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
struct RawTaskMeta {
    task_id: Option<String>,
    #[serde(default)]
    requirement_text: String,
    file_operations: Option<Vec<String>>,
}

/// The six inputs for one task, loaded and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskBundle {
    pub task_id: String,
    pub task_spec: TaskSpec,
    pub trace_with: RawTrace,
    pub trace_without: RawTrace,
    /// Retained byte-for-byte; literal n-gram matching depends on it.
    pub skill_doc: String,
    pub eval_with: EvalReport,
    pub eval_without: EvalReport,
}

/// File names inside a bundle directory, each overridable.
#[derive(Debug, Clone, PartialEq)]
pub struct BundlePaths {
    pub trace_with: PathBuf,
    pub trace_without: PathBuf,
    pub skill: PathBuf,
    pub eval_with: PathBuf,
    pub eval_without: PathBuf,
    pub task_meta: PathBuf,
}

impl Default for BundlePaths {
    fn default() -> Self {
        BundlePaths {
            trace_with: "trace_with.jsonl".into(),
            trace_without: "trace_without.jsonl".into(),
            skill: "skill.md".into(),
            eval_with: "eval_report_with.json".into(),
            eval_without: "eval_report_without.json".into(),
            task_meta: "task.json".into(),
        }
    }
}

impl BundlePaths {
    fn resolve(&self, dir: &Path, name: &Path) -> PathBuf {
        if name.is_absolute() {
            name.to_path_buf()
        } else {
            dir.join(name)
        }
    }
}

fn read_required(dir: &Path, name: &Path, paths: &BundlePaths, input: &str) -> Result<String> {
    let path = paths.resolve(dir, name);
    if !path.is_file() {
        return Err(CtaError::MissingInput(input.to_string()));
    }
    std::fs::read_to_string(&path).map_err(|e| CtaError::io(path, e))
}

/// Load and validate a bundle directory with the default layout.
pub fn load_bundle(dir: &Path, config: &AuditConfig) -> Result<TaskBundle> {
    load_bundle_with_paths(dir, &BundlePaths::default(), config)
}

/// Load a bundle with overridden member file names.
pub fn load_bundle_with_paths(
    dir: &Path,
    paths: &BundlePaths,
    config: &AuditConfig,
) -> Result<TaskBundle> {
    let trace_with_text = read_required(dir, &paths.trace_with, paths, "trace_with")?;
    let trace_without_text = read_required(dir, &paths.trace_without, paths, "trace_without")?;
    let skill_doc = read_required(dir, &paths.skill, paths, "skill_doc")?;
    let eval_with_text = read_required(dir, &paths.eval_with, paths, "eval_with")?;
    let eval_without_text = read_required(dir, &paths.eval_without, paths, "eval_without")?;

    let trace_with = RawTrace::from_str(
        &trace_with_text,
        &paths.trace_with.display().to_string(),
    )?;
    let trace_without = RawTrace::from_str(
        &trace_without_text,
        &paths.trace_without.display().to_string(),
    )?;

    let eval_with_path = paths.resolve(dir, &paths.eval_with);
    let raw: RawEvalReport = serde_json::from_str(&eval_with_text)
        .map_err(|e| CtaError::json(&eval_with_path, e))?;
    let eval_with = EvalReport::from_raw(raw, &eval_with_path)?;

    let eval_without_path = paths.resolve(dir, &paths.eval_without);
    let raw: RawEvalReport = serde_json::from_str(&eval_without_text)
        .map_err(|e| CtaError::json(&eval_without_path, e))?;
    let eval_without = EvalReport::from_raw(raw, &eval_without_path)?;

    // task.json is optional metadata
    let meta_path = paths.resolve(dir, &paths.task_meta);
    let (meta_task_id, task_spec) = if meta_path.is_file() {
        let text = std::fs::read_to_string(&meta_path).map_err(|e| CtaError::io(&meta_path, e))?;
        let raw: RawTaskMeta =
            serde_json::from_str(&text).map_err(|e| CtaError::json(&meta_path, e))?;
        let file_operations = match raw.file_operations {
            Some(ops) => Some(
                ops.iter()
                    .map(|p| normalize_path(p, &config.workspace_prefix))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        (
            raw.task_id,
            TaskSpec {
                requirement_text: raw.requirement_text,
                file_operations,
            },
        )
    } else {
        (None, TaskSpec::default())
    };

    // task id: metadata wins, then trace hints, then the directory name
    let dir_name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "task".to_string());
    let hint_with = trace_with.task_id_hint().map(str::to_string);
    let hint_without = trace_without.task_id_hint().map(str::to_string);
    if let (Some(a), Some(b)) = (&hint_with, &hint_without) {
        if a != b {
            return Err(CtaError::TaskIdMismatch(a.clone(), b.clone()));
        }
    }
    let task_id = meta_task_id
        .or(hint_with.clone())
        .or(hint_without.clone())
        .unwrap_or(dir_name);
    for hint in [&hint_with, &hint_without].into_iter().flatten() {
        if *hint != task_id {
            return Err(CtaError::TaskIdMismatch(task_id, hint.clone()));
        }
    }

    Ok(TaskBundle {
        task_id,
        task_spec,
        trace_with,
        trace_without,
        skill_doc,
        eval_with,
        eval_without,
    })
}

/// Pass-rate change in signed percentage points: `(with - without) * 100`.
/// Rounding happens only at display time.
pub fn delta_p(r_without: f64, r_with: f64) -> Result<f64> {
    for v in [r_without, r_with] {
        if !(0.0..=1.0).contains(&v) {
            return Err(CtaError::OutOfRange(v));
        }
    }
    Ok((r_with - r_without) * 100.0)
}

/// Token-overhead multiple `with / without`; undefined when the baseline
/// total is zero (excluded from means downstream).
pub fn token_ratio(tokens_with: u64, tokens_without: u64) -> Result<f64> {
    if tokens_without == 0 {
        return Err(CtaError::DivisionByZero);
    }
    Ok(tokens_with as f64 / tokens_without as f64)
}

/// One-decimal signed percentage-point display, e.g. "+18.2" or "-20.0".
pub fn format_pp(pp: f64) -> String {
    format!("{pp:+.1}")
}

/// Two-decimal multiple display, e.g. "0.90" or "22.24".
pub fn format_ratio(ratio: f64) -> String {
    format!("{ratio:.2}")
}
