//! Per-task audits and corpus-level aggregation: bucket stratification,
//! SIP composition, phase distribution of divergences, and table rendering
//! in text, CSV, and Markdown.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::align::{align_bundle, DivergenceRecord};
use crate::bundle::{delta_p, token_ratio, TaskBundle};
use crate::config::AuditConfig;
use crate::detect::{label_divergence, DetectorContext, SipClass, SipFire};
use crate::error::{CtaError, Result};
use crate::phase::{segment, PhaseSequence, PhaseType};
use crate::trace::{parse_trace, Condition};

/// Baseline pass-rate stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Ceiling,
    Mid,
    Floor,
}

impl Bucket {
    /// Ceiling at baseline >= 0.9, Mid in [0.5, 0.9), Floor below 0.5.
    pub fn from_baseline(baseline: f64) -> Bucket {
        if baseline >= 0.9 {
            Bucket::Ceiling
        } else if baseline >= 0.5 {
            Bucket::Mid
        } else {
            Bucket::Floor
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Bucket::Ceiling => "Ceiling (>=0.9)",
            Bucket::Mid => "Mid (0.5-0.9)",
            Bucket::Floor => "Floor (<0.5)",
        }
    }
}

/// Full audit result for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAudit {
    pub task_id: String,
    /// Pass-rate change in percentage points.
    pub delta_p: f64,
    /// Without-skill pass rate.
    pub baseline: f64,
    /// With-skill pass rate.
    pub pass_with: f64,
    pub bucket: Bucket,
    /// None when the without-skill token total is zero.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token_ratio: Option<f64>,
    pub tokens_with: u64,
    pub tokens_without: u64,
    pub divergences: Vec<DivergenceRecord>,
    pub sip_fires: Vec<SipFire>,
    pub phases_with: PhaseSequence,
    pub phases_without: PhaseSequence,
    /// (with-trace fallback, without-trace fallback).
    pub fallback_flags: (bool, bool),
    pub skipped_records: (usize, usize),
    pub unknown_tools: (usize, usize),
    /// Effective configuration, echoed for reproducibility.
    pub config: AuditConfig,
}

impl TaskAudit {
    /// Task-level fallback: either trace collapsed to the fallback phase.
    pub fn any_fallback(&self) -> bool {
        self.fallback_flags.0 || self.fallback_flags.1
    }
}

/// Run the full pipeline on one bundle: parse, segment, align, detect.
pub fn audit_task(bundle: &TaskBundle, config: &AuditConfig) -> Result<TaskAudit> {
    let in_task = |e: CtaError| e.in_task(&bundle.task_id);

    let with_stream =
        parse_trace(&bundle.trace_with, Condition::WithSkill, config).map_err(in_task)?;
    let without_stream =
        parse_trace(&bundle.trace_without, Condition::WithoutSkill, config).map_err(in_task)?;

    let phases_with = segment(&with_stream, config).map_err(in_task)?;
    let phases_without = segment(&without_stream, config).map_err(in_task)?;

    let outcome = align_bundle(
        &bundle.task_id,
        &with_stream,
        &without_stream,
        &phases_with,
        &phases_without,
        config,
    )
    .map_err(in_task)?;

    let pp = delta_p(bundle.eval_without.pass_rate, bundle.eval_with.pass_rate).map_err(in_task)?;
    let ratio = token_ratio(with_stream.total_tokens, without_stream.total_tokens).ok();

    let ctx = DetectorContext::new(
        &bundle.task_spec,
        &bundle.skill_doc,
        &with_stream,
        &without_stream,
        &phases_with,
        &phases_without,
        (with_stream.total_tokens, without_stream.total_tokens),
        pp,
        config,
    );
    let mut sip_fires = Vec::new();
    for div in &outcome.divergences {
        sip_fires.extend(label_divergence(div, &ctx, config.theta));
    }

    Ok(TaskAudit {
        task_id: bundle.task_id.clone(),
        delta_p: pp,
        baseline: bundle.eval_without.pass_rate,
        pass_with: bundle.eval_with.pass_rate,
        bucket: Bucket::from_baseline(bundle.eval_without.pass_rate),
        token_ratio: ratio,
        tokens_with: with_stream.total_tokens,
        tokens_without: without_stream.total_tokens,
        divergences: outcome.divergences,
        sip_fires,
        fallback_flags: (phases_with.fallback_applied, phases_without.fallback_applied),
        skipped_records: (with_stream.skipped_records, without_stream.skipped_records),
        unknown_tools: (with_stream.unknown_tools, without_stream.unknown_tools),
        phases_with,
        phases_without,
        config: config.clone(),
    })
}

/// One stratum row of the corpus table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub label: String,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_baseline: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_delta_p: Option<f64>,
    /// Mean over tasks with a defined ratio.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_token_ratio: Option<f64>,
    /// Tasks excluded from the ratio mean because the ratio is undefined.
    pub ratio_excluded: usize,
    pub total_divergences: usize,
    pub total_sip_fires: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub div_per_task: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sips_per_task: Option<f64>,
    /// Mean fires per task for each class.
    pub sips_per_task_by_class: BTreeMap<SipClass, f64>,
}

/// Phase distribution of divergences, with the fallback-excluded variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDistribution {
    pub shares: BTreeMap<PhaseType, f64>,
    pub total_divergences: usize,
    /// Shares over tasks where neither trace hit the fallback; None when
    /// no such task has divergences.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shares_excluding_fallback: Option<BTreeMap<PhaseType, f64>>,
    pub fallback_tasks: usize,
}

/// Corpus-level aggregates over a list of task audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub buckets: Vec<BucketRow>,
    pub all: BucketRow,
    pub phase_distribution: PhaseDistribution,
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn bucket_row(label: &str, audits: &[&TaskAudit]) -> BucketRow {
    let n = audits.len();
    let baselines: Vec<f64> = audits.iter().map(|a| a.baseline).collect();
    let deltas: Vec<f64> = audits.iter().map(|a| a.delta_p).collect();
    let ratios: Vec<f64> = audits.iter().filter_map(|a| a.token_ratio).collect();
    let total_divergences: usize = audits.iter().map(|a| a.divergences.len()).sum();
    let total_sip_fires: usize = audits.iter().map(|a| a.sip_fires.len()).sum();

    let mut by_class = BTreeMap::new();
    for class in SipClass::ALL {
        let total: usize = audits
            .iter()
            .map(|a| a.sip_fires.iter().filter(|f| f.sip_class == class).count())
            .sum();
        let value = if n == 0 { 0.0 } else { total as f64 / n as f64 };
        by_class.insert(class, value);
    }

    BucketRow {
        label: label.to_string(),
        n,
        mean_baseline: mean(&baselines),
        mean_delta_p: mean(&deltas),
        mean_token_ratio: mean(&ratios),
        ratio_excluded: n - ratios.len(),
        total_divergences,
        total_sip_fires,
        div_per_task: if n == 0 {
            None
        } else {
            Some(total_divergences as f64 / n as f64)
        },
        sips_per_task: if n == 0 {
            None
        } else {
            Some(total_sip_fires as f64 / n as f64)
        },
        sips_per_task_by_class: by_class,
    }
}

/// Divergence phase shares over a set of audits; None when there are no
/// divergences to distribute.
fn shares_over(audits: &[&TaskAudit]) -> Option<BTreeMap<PhaseType, f64>> {
    let mut counts: BTreeMap<PhaseType, usize> = BTreeMap::new();
    for phase in PhaseType::ALL {
        counts.insert(phase, 0);
    }
    let mut total = 0usize;
    for audit in audits {
        for div in &audit.divergences {
            *counts.entry(div.phase_type).or_insert(0) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return None;
    }
    Some(
        counts
            .into_iter()
            .map(|(p, c)| (p, c as f64 / total as f64))
            .collect(),
    )
}

/// Phase distribution of divergences across the corpus, plus the variant
/// that drops tasks where either trace hit the segmentation fallback.
pub fn phase_distribution(audits: &[TaskAudit]) -> PhaseDistribution {
    let refs: Vec<&TaskAudit> = audits.iter().collect();
    let non_fallback: Vec<&TaskAudit> = audits.iter().filter(|a| !a.any_fallback()).collect();
    let total = audits.iter().map(|a| a.divergences.len()).sum();
    PhaseDistribution {
        shares: shares_over(&refs).unwrap_or_else(|| {
            PhaseType::ALL.iter().map(|p| (*p, 0.0)).collect()
        }),
        total_divergences: total,
        shares_excluding_fallback: shares_over(&non_fallback),
        fallback_tasks: audits.len() - non_fallback.len(),
    }
}

/// Stratify audits by the baseline buckets and aggregate every corpus
/// statistic. Permutation-invariant over the audit list.
pub fn stratify(audits: &[TaskAudit]) -> Result<CorpusStats> {
    if audits.is_empty() {
        return Err(CtaError::EmptyCorpus);
    }
    // fixed fold order regardless of input permutation
    let mut sorted: Vec<&TaskAudit> = audits.iter().collect();
    sorted.sort_by(|a, b| a.task_id.cmp(&b.task_id));

    let mut buckets = Vec::new();
    for bucket in [Bucket::Ceiling, Bucket::Mid, Bucket::Floor] {
        let members: Vec<&TaskAudit> = sorted
            .iter()
            .copied()
            .filter(|a| a.bucket == bucket)
            .collect();
        buckets.push(bucket_row(bucket.label(), &members));
    }
    let all = bucket_row("All", &sorted);

    Ok(CorpusStats {
        buckets,
        all,
        phase_distribution: phase_distribution(audits),
    })
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Md,
}

impl FromStr for Format {
    type Err = CtaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "md" => Ok(Format::Md),
            other => Err(CtaError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Text => "text",
            Format::Csv => "csv",
            Format::Md => "md",
        })
    }
}

fn render_cells(header: Vec<String>, rows: Vec<Vec<String>>, format: Format) -> String {
    match format {
        Format::Csv => {
            let mut out = String::new();
            out.push_str(&header.join(","));
            out.push('\n');
            for row in rows {
                out.push_str(&row.join(","));
                out.push('\n');
            }
            out
        }
        Format::Md => {
            let mut out = String::new();
            out.push_str(&format!("| {} |\n", header.join(" | ")));
            out.push_str(&format!(
                "|{}|\n",
                header.iter().map(|_| " --- ").collect::<Vec<_>>().join("|")
            ));
            for row in rows {
                out.push_str(&format!("| {} |\n", row.join(" | ")));
            }
            out
        }
        Format::Text => {
            let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
            for row in &rows {
                for (i, cell) in row.iter().enumerate() {
                    widths[i] = widths[i].max(cell.chars().count());
                }
            }
            let fmt_row = |cells: &[String]| {
                cells
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        if i == 0 {
                            format!("{:<width$}", c, width = widths[i])
                        } else {
                            format!("{:>width$}", c, width = widths[i])
                        }
                    })
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            let mut out = String::new();
            out.push_str(&fmt_row(&header));
            out.push('\n');
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
            for row in &rows {
                out.push_str(&fmt_row(row));
                out.push('\n');
            }
            out
        }
    }
}

fn opt2(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

fn opt_pp(v: Option<f64>) -> String {
    v.map(|x| format!("{x:+.1}")).unwrap_or_default()
}

fn opt1(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1}")).unwrap_or_default()
}

fn stratified_cells(row: &BucketRow) -> Vec<String> {
    vec![
        row.label.clone(),
        row.n.to_string(),
        opt2(row.mean_baseline),
        opt_pp(row.mean_delta_p),
        opt2(row.mean_token_ratio),
        row.total_divergences.to_string(),
        row.total_sip_fires.to_string(),
        opt1(row.div_per_task),
        opt1(row.sips_per_task),
    ]
}

/// The main stratified table: one row per bucket plus the all-tasks row.
pub fn render_table(stats: &CorpusStats, format: Format) -> String {
    let header = [
        "Bucket",
        "n",
        "Baseline",
        "dP (pp)",
        "Tok x",
        "#Div",
        "#SIP",
        "#Div/task",
        "#SIP/task",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut rows: Vec<Vec<String>> = stats.buckets.iter().map(stratified_cells).collect();
    rows.push(stratified_cells(&stats.all));
    render_cells(header, rows, format)
}

/// Mean fires per task by class: constructive (PS, EP), neutral (RE),
/// destructive (SA, CB).
pub fn render_sip_table(stats: &CorpusStats, format: Format) -> String {
    let header = ["Bucket", "PS", "EP", "RE", "SA", "CB"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let cells = |row: &BucketRow| {
        let mut out = vec![row.label.clone()];
        for class in SipClass::ALL {
            out.push(format!(
                "{:.2}",
                row.sips_per_task_by_class.get(&class).copied().unwrap_or(0.0)
            ));
        }
        out
    };
    let mut rows: Vec<Vec<String>> = stats.buckets.iter().map(cells).collect();
    rows.push(cells(&stats.all));
    let mut out = render_cells(header, rows, format);
    out.push_str("Constructive: PS, EP.  Neutral: RE.  Destructive: SA, CB.\n");
    out
}

/// Largest |dP| tasks, with pass rates and token ratios.
pub fn render_top_delta(audits: &[TaskAudit], format: Format, limit: usize) -> String {
    let mut sorted: Vec<&TaskAudit> = audits.iter().collect();
    sorted.sort_by(|a, b| {
        b.delta_p
            .abs()
            .partial_cmp(&a.delta_p.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.task_id.cmp(&b.task_id))
    });
    let header = ["Task", "Baseline", "With-skill", "dP (pp)", "Tok x"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = sorted
        .iter()
        .take(limit)
        .map(|a| {
            vec![
                a.task_id.clone(),
                format!("{:.2}", a.baseline),
                format!("{:.2}", a.pass_with),
                format!("{:+.1}", a.delta_p),
                a.token_ratio.map(|r| format!("{r:.2}")).unwrap_or_else(|| "n/a".into()),
            ]
        })
        .collect();
    render_cells(header, rows, format)
}

/// Divergence share per phase, full corpus and fallback-excluded.
pub fn render_phase_distribution(dist: &PhaseDistribution, format: Format) -> String {
    let header = ["Phase", "Share", "Share (excl. fallback)"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = PhaseType::ALL
        .iter()
        .map(|phase| {
            let full = dist.shares.get(phase).copied().unwrap_or(0.0);
            let excl = dist
                .shares_excluding_fallback
                .as_ref()
                .and_then(|m| m.get(phase).copied());
            vec![
                phase.to_string(),
                format!("{:.1}%", full * 100.0),
                excl.map(|v| format!("{:.1}%", v * 100.0)).unwrap_or_default(),
            ]
        })
        .collect();
    let mut out = render_cells(header, rows, format);
    out.push_str(&format!(
        "{} divergences; {} fallback task(s) excluded from the right column.\n",
        dist.total_divergences, dist.fallback_tasks
    ));
    out
}
