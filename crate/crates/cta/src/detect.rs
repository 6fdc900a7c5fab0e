//! Skill Influence Pattern detection: five independent rule detectors
//! mapping each divergence record (plus task and skill context) to scores
//! in [0, 1]. A pattern fires at score >= theta.
//!
//! Each detector is a clamped weighted sum of three binary clauses; the
//! clauses a signature cannot hold without (its counterfactual asymmetry)
//! gate the score to zero when unmet.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::align::{extract_intent_windows, DivergenceRecord};
use crate::bundle::TaskSpec;
use crate::config::{AuditConfig, ClauseWeights};
use crate::phase::{PhaseSequence, PhaseType};
use crate::text::{
    contains_token_run, count_guard_tokens, normalized_line_distance, NgramIndex, TfIdf,
};
use crate::trace::{EventStream, EventType};

/// The five pattern classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SipClass {
    /// Procedural Scaffolding (constructive)
    PS,
    /// Edge-case Prompting (constructive)
    EP,
    /// Redundant Exploration (neutral)
    RE,
    /// Surface Anchoring (destructive)
    SA,
    /// Concept Bleed (destructive)
    CB,
}

impl SipClass {
    pub const ALL: [SipClass; 5] = [
        SipClass::PS,
        SipClass::EP,
        SipClass::RE,
        SipClass::SA,
        SipClass::CB,
    ];
}

impl fmt::Display for SipClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SipClass::PS => "PS",
            SipClass::EP => "EP",
            SipClass::RE => "RE",
            SipClass::SA => "SA",
            SipClass::CB => "CB",
        };
        f.write_str(s)
    }
}

/// One detector firing on one divergence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SipFire {
    pub divergence_id: usize,
    pub sip_class: SipClass,
    pub score: f64,
    /// Which signature conditions held: matched n-grams, guard tokens,
    /// step lines, targets.
    pub evidence: Vec<String>,
}

/// Score plus the clause evidence that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorResult {
    pub score: f64,
    pub evidence: Vec<String>,
}

impl DetectorResult {
    fn zero() -> Self {
        DetectorResult {
            score: 0.0,
            evidence: Vec::new(),
        }
    }
}

/// Weighted sum of clause indicators, clamped to [0, 1]. `gates` lists the
/// clause positions that must hold for a nonzero score.
fn clause_score(clauses: [bool; 3], weights: &ClauseWeights, gates: &[usize]) -> f64 {
    if gates.iter().any(|g| !clauses[*g]) {
        return 0.0;
    }
    let sum: f64 = clauses
        .iter()
        .zip(weights.iter())
        .map(|(c, w)| if *c { *w } else { 0.0 })
        .sum();
    sum.clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// skill document structure
// ---------------------------------------------------------------------------

/// A heading-delimited slice of the skill document.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillSection {
    pub heading: String,
    /// Heading line plus body, verbatim.
    pub text: String,
}

/// Split a document into sections on heading lines (leading '#'s). Text
/// before the first heading forms a preamble section.
pub fn skill_sections(doc: &str) -> Vec<SkillSection> {
    let mut sections: Vec<SkillSection> = Vec::new();
    let mut current_heading = String::new();
    let mut current_lines: Vec<&str> = Vec::new();
    for line in doc.lines() {
        if line.trim_start().starts_with('#') {
            if !current_lines.is_empty() {
                sections.push(SkillSection {
                    heading: current_heading.clone(),
                    text: current_lines.join("\n"),
                });
            }
            current_heading = line.trim().to_string();
            current_lines = vec![line];
        } else {
            current_lines.push(line);
        }
    }
    if !current_lines.is_empty() {
        sections.push(SkillSection {
            heading: current_heading,
            text: current_lines.join("\n"),
        });
    }
    sections.retain(|s| !s.text.trim().is_empty());
    sections
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StepKind {
    Numbered,
    Heading,
    Bullet,
}

#[derive(Debug, Clone, PartialEq)]
struct StepLine {
    kind: StepKind,
    /// Marker-stripped text.
    text: String,
    /// Index of the section the line belongs to.
    section: usize,
}

fn numbered_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:\d+[.)]|Step\s+\d+:?)\s*").unwrap())
}

/// Step-like lines: numbered items, headings, and bullets, with their
/// markers stripped.
fn step_lines(doc: &str) -> Vec<StepLine> {
    let sections = skill_sections(doc);
    let mut steps = Vec::new();
    for (si, section) in sections.iter().enumerate() {
        for line in section.text.lines() {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if trimmed.starts_with('#') {
                steps.push(StepLine {
                    kind: StepKind::Heading,
                    text: trimmed.trim_start_matches('#').trim().to_string(),
                    section: si,
                });
            } else if numbered_re().is_match(trimmed) {
                steps.push(StepLine {
                    kind: StepKind::Numbered,
                    text: numbered_re().replace(trimmed, "").trim().to_string(),
                    section: si,
                });
            } else if let Some(rest) = trimmed
                .strip_prefix("- ")
                .or_else(|| trimmed.strip_prefix("* "))
                .or_else(|| trimmed.strip_prefix("+ "))
            {
                steps.push(StepLine {
                    kind: StepKind::Bullet,
                    text: rest.trim().to_string(),
                    section: si,
                });
            }
        }
    }
    steps
}

/// Map a step description to the phase it prescribes, by keyword.
fn step_phase(text: &str) -> Option<PhaseType> {
    const TABLE: [(PhaseType, &[&str]); 5] = [
        (
            PhaseType::Orientation,
            &[
                "read",
                "review",
                "inspect",
                "explore",
                "understand",
                "study",
                "locate",
            ],
        ),
        (
            PhaseType::Implementation,
            &[
                "implement", "write", "create", "add", "define", "draft", "build", "wire",
            ],
        ),
        (
            PhaseType::Validation,
            &["test", "validate", "verify", "run", "check"],
        ),
        (PhaseType::Debugging, &["debug", "fix", "repair"]),
        (
            PhaseType::Finalization,
            &["commit", "document", "finalize", "clean", "release"],
        ),
    ];
    let tokens = crate::text::tokenize(text);
    for (phase, keywords) in TABLE {
        if tokens.iter().any(|t| keywords.contains(&t.as_str())) {
            return Some(phase);
        }
    }
    None
}

fn is_subsequence(needle: &[PhaseType], hay: &[PhaseType]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

/// Lowercased whitespace tokens for reasoning/step overlap checks.
fn overlap_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

/// True when any `n` consecutive tokens of `a` occur consecutively in `b`.
fn has_token_overlap(a: &[String], b: &[String], n: usize) -> bool {
    if a.len() < n || b.len() < n {
        return false;
    }
    a.windows(n).any(|w| b.windows(n).any(|v| v == w))
}

// ---------------------------------------------------------------------------
// detector context
// ---------------------------------------------------------------------------

/// Read-only context shared by all five detectors for one bundle.
pub struct DetectorContext<'a> {
    pub task_spec: &'a TaskSpec,
    pub skill_doc: &'a str,
    pub with_stream: &'a EventStream,
    pub without_stream: &'a EventStream,
    pub with_phases: &'a PhaseSequence,
    pub without_phases: &'a PhaseSequence,
    pub token_totals: (u64, u64),
    pub delta_p: f64,
    config: &'a AuditConfig,
    sections: Vec<SkillSection>,
    steps: Vec<StepLine>,
    skill_ngrams: NgramIndex,
    without_write_contents: Vec<String>,
    without_intents: Vec<String>,
    with_write_target_count: usize,
    without_write_target_count: usize,
    without_write_targets: BTreeSet<String>,
    without_touched: BTreeSet<String>,
    /// Concatenated outputs of with-trace reads over dependency/config files.
    read_config_content: String,
    extra_impl_val_cycles: bool,
}

impl<'a> DetectorContext<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        task_spec: &'a TaskSpec,
        skill_doc: &'a str,
        with_stream: &'a EventStream,
        without_stream: &'a EventStream,
        with_phases: &'a PhaseSequence,
        without_phases: &'a PhaseSequence,
        token_totals: (u64, u64),
        delta_p: f64,
        config: &'a AuditConfig,
    ) -> Self {
        let without_write_contents: Vec<String> = without_stream
            .events
            .iter()
            .filter_map(|e| e.written_content())
            .map(str::to_string)
            .collect();
        let without_intents: Vec<String> = without_phases
            .spans
            .iter()
            .flat_map(|s| extract_intent_windows(s, without_stream))
            .map(|w| w.intent_text)
            .filter(|t| !t.is_empty())
            .collect();
        let read_config_content = with_stream
            .events
            .iter()
            .filter(|e| e.event_type == EventType::Read)
            .filter(|e| {
                e.target
                    .as_deref()
                    .is_some_and(looks_like_dependency_file)
            })
            .filter_map(|e| e.tool_output.as_deref())
            .collect::<Vec<_>>()
            .join("\n");

        let impl_val_cycles = |phases: &PhaseSequence| {
            let types = phases.types();
            types
                .windows(2)
                .filter(|w| {
                    matches!(w[0], PhaseType::Implementation | PhaseType::Debugging)
                        && w[1] == PhaseType::Validation
                })
                .count()
        };

        DetectorContext {
            task_spec,
            skill_doc,
            with_stream,
            without_stream,
            with_phases,
            without_phases,
            token_totals,
            delta_p,
            config,
            sections: skill_sections(skill_doc),
            steps: step_lines(skill_doc),
            skill_ngrams: NgramIndex::build(skill_doc, config.sa_ngram_min, config.sa_ngram_max),
            without_write_contents,
            without_intents,
            with_write_target_count: with_stream.write_targets().len(),
            without_write_target_count: without_stream.write_targets().len(),
            without_write_targets: without_stream
                .write_targets()
                .into_iter()
                .map(str::to_string)
                .collect(),
            without_touched: without_stream
                .touched_targets()
                .into_iter()
                .map(str::to_string)
                .collect(),
            read_config_content,
            extra_impl_val_cycles: impl_val_cycles(with_phases) > impl_val_cycles(without_phases),
        }
    }

    fn weights(&self) -> &crate::config::DetectorWeights {
        &self.config.detector_weights
    }
}

fn looks_like_dependency_file(path: &str) -> bool {
    let base = path.rsplit('/').next().unwrap_or(path).to_lowercase();
    const NAMES: [&str; 10] = [
        "package.json",
        "cargo.toml",
        "pyproject.toml",
        "setup.py",
        "setup.cfg",
        "go.mod",
        "pom.xml",
        "build.gradle",
        "makefile",
        "requirements.txt",
    ];
    if NAMES.contains(&base.as_str()) {
        return true;
    }
    const EXTS: [&str; 7] = [".yaml", ".yml", ".toml", ".cfg", ".ini", ".lock", ".json"];
    EXTS.iter().any(|e| base.ends_with(e))
}

// ---------------------------------------------------------------------------
// detectors
// ---------------------------------------------------------------------------

/// Procedural Scaffolding: the with-skill run follows a step sequence the
/// skill lays out and the baseline omits.
///
/// (a) a skill section's numbered steps, mapped to phases, form a
///     subsequence of the with-skill phase order;
/// (b) the divergence's with-skill reasoning shares a >=3-token contiguous
///     overlap with a skill step line (required);
/// (c) no without-skill intent window matches that step line at or above
///     delta (required).
pub fn detect_ps(div: &DivergenceRecord, ctx: &DetectorContext<'_>) -> DetectorResult {
    let weights = ctx.weights().ps;
    let mut evidence = Vec::new();

    // (b) first: it selects the step line that (c) refers to
    let reasoning = div
        .with_window
        .as_ref()
        .map(|w| w.intent_text.as_str())
        .unwrap_or("");
    let reasoning_tokens = overlap_tokens(reasoning);
    let mut cited_step: Option<&StepLine> = None;
    for step in &ctx.steps {
        let step_tokens = overlap_tokens(&step.text);
        if has_token_overlap(&step_tokens, &reasoning_tokens, 3) {
            cited_step = Some(step);
            break;
        }
    }
    let b = cited_step.is_some();
    if let Some(step) = cited_step {
        evidence.push(format!("cited skill step: {}", step.text));
    }

    // (a): ordered numbered steps of some section track the phase order
    let with_types = ctx.with_phases.types();
    let mut a = false;
    for si in 0..ctx.sections.len() {
        let mapped: Vec<PhaseType> = ctx
            .steps
            .iter()
            .filter(|s| s.section == si && s.kind == StepKind::Numbered)
            .filter_map(|s| step_phase(&s.text))
            .collect();
        if mapped.len() >= 2 && is_subsequence(&mapped, &with_types) {
            a = true;
            evidence.push(format!(
                "phase order tracks section: {}",
                ctx.sections[si].heading
            ));
            break;
        }
    }

    // (c): the baseline has no window matching the cited step above delta
    let c = match cited_step {
        Some(step) => {
            let mut docs: Vec<&str> = ctx.without_intents.iter().map(String::as_str).collect();
            docs.push(&step.text);
            let model = TfIdf::fit(&docs);
            let matched = ctx
                .without_intents
                .iter()
                .any(|intent| model.similarity(intent, &step.text) >= ctx.config.delta);
            if !matched {
                evidence.push("baseline omits the cited step".to_string());
            }
            !matched
        }
        None => false,
    };

    let score = clause_score([a, b, c], &weights, &[1, 2]);
    DetectorResult {
        score,
        evidence: if score > 0.0 { evidence } else { Vec::new() },
    }
}

/// Edge-case Prompting: the with-skill write guards a case the skill
/// enumerates, on a target the baseline also touches.
///
/// (a) positive guard-token delta on the divergence target (required);
/// (b) the same canonical target appears in the without-skill trace
///     (required);
/// (c) the guarded lines share a >=3-token run with the skill document.
pub fn detect_ep(div: &DivergenceRecord, ctx: &DetectorContext<'_>) -> DetectorResult {
    let weights = ctx.weights().ep;
    let mut evidence = Vec::new();

    let guard_delta = div.features.get("guard_delta").copied().unwrap_or(0.0);
    let a = guard_delta > 0.0;
    if a {
        evidence.push(format!("guard token delta +{guard_delta}"));
    }

    let b = div
        .affected_targets
        .iter()
        .any(|t| ctx.without_touched.contains(t));
    if b {
        evidence.push("target shared with the baseline trace".to_string());
    }

    let c = match div.with_content() {
        Some(content) => {
            let skill_tokens = overlap_tokens(ctx.skill_doc);
            let mut hit = None;
            for line in content.lines() {
                if count_guard_tokens(line, &ctx.config.guard_tokens) == 0 {
                    continue;
                }
                let line_tokens = overlap_tokens(line);
                if has_token_overlap(&line_tokens, &skill_tokens, 3) {
                    hit = Some(line.trim().to_string());
                    break;
                }
            }
            if let Some(line) = &hit {
                evidence.push(format!("skill enumerates the guarded case: {line}"));
            }
            hit.is_some()
        }
        None => false,
    };

    let score = clause_score([a, b, c], &weights, &[0, 1]);
    DetectorResult {
        score,
        evidence: if score > 0.0 { evidence } else { Vec::new() },
    }
}

/// Redundant Exploration: extra work that converges on the same result.
///
/// (a) high intent cosine (>= 0.7) with an elevated with-skill action
///     count (>= 1.5x the baseline window);
/// (b) final written content for shared targets is near-identical
///     (normalized line edit distance <= 0.1);
/// (c) bundle token ratio >= 1.5 with no pass-rate change.
pub fn detect_re(div: &DivergenceRecord, ctx: &DetectorContext<'_>) -> DetectorResult {
    if div.intent_cosine.is_none() && !ctx.extra_impl_val_cycles {
        return DetectorResult::zero();
    }
    let weights = ctx.weights().re;
    let mut evidence = Vec::new();

    let with_count = div
        .features
        .get("with_action_count")
        .copied()
        .unwrap_or(0.0);
    let without_count = div
        .features
        .get("without_action_count")
        .copied()
        .unwrap_or(0.0);
    let a = div.intent_cosine.unwrap_or(0.0) >= 0.7
        && with_count >= 1.0
        && with_count >= 1.5 * without_count;
    if a {
        evidence.push(format!(
            "same intent, elevated action count ({with_count} vs {without_count})"
        ));
    }

    let shared: Vec<&str> = ctx
        .with_stream
        .write_targets()
        .into_iter()
        .filter(|t| ctx.without_write_targets.contains(*t))
        .collect();
    let b = !shared.is_empty()
        && shared.iter().all(|t| {
            let wa = ctx.with_stream.final_content(t).unwrap_or("");
            let wb = ctx.without_stream.final_content(t).unwrap_or("");
            normalized_line_distance(wa, wb) <= 0.1
        });
    if b {
        evidence.push("final contents on shared targets are near-identical".to_string());
    }

    let ratio = if ctx.token_totals.1 > 0 {
        ctx.token_totals.0 as f64 / ctx.token_totals.1 as f64
    } else {
        0.0
    };
    let c = ratio >= 1.5 && ctx.delta_p.abs() < 1e-9;
    if c {
        evidence.push(format!(
            "token overhead {ratio:.2}x with unchanged pass rate"
        ));
    }

    let score = clause_score([a, b, c], &weights, &[]);
    DetectorResult {
        score,
        evidence: if score > 0.0 { evidence } else { Vec::new() },
    }
}

/// Surface Anchoring: a literal skill n-gram copied into a with-skill
/// write and absent from the baseline.
///
/// (a) a skill n-gram (n >= 3 after whitespace normalization) occurs
///     literally in the with-skill written content (required);
/// (b) one such n-gram never occurs in any without-skill written content
///     (required);
/// (c) the literal looks like a version pin, import, or config key absent
///     from the dependency/config files the agent read.
pub fn detect_sa(div: &DivergenceRecord, ctx: &DetectorContext<'_>) -> DetectorResult {
    let Some(content) = div.with_content() else {
        return DetectorResult::zero();
    };
    let weights = ctx.weights().sa;
    let mut evidence = Vec::new();

    let matches = ctx.skill_ngrams.matches(&content);
    let a = !matches.is_empty();
    if let Some(longest) = matches.first() {
        evidence.push(format!(
            "skill {}-gram copied literally: \"{}\"",
            longest.len, longest.text
        ));
    }

    // (b): an (a)-matched gram absent from every baseline write
    let absent = matches.iter().find(|m| {
        !ctx.without_write_contents
            .iter()
            .any(|c| contains_token_run(c, &m.text))
    });
    let b = absent.is_some();
    if let Some(m) = absent {
        evidence.push(format!("absent from baseline writes: \"{}\"", m.text));
    }

    let c = match absent.or_else(|| matches.first()) {
        Some(m) => {
            let pinlike = looks_like_pin_or_import(&m.text);
            let verifiable = !ctx.read_config_content.is_empty();
            let incompatible =
                pinlike && verifiable && !contains_token_run(&ctx.read_config_content, &m.text);
            if incompatible {
                evidence.push(format!(
                    "literal names a pin/import/key absent from read config: \"{}\"",
                    m.text
                ));
            }
            incompatible
        }
        None => false,
    };

    let score = clause_score([a, b, c], &weights, &[0, 1]);
    DetectorResult {
        score,
        evidence: if score > 0.0 { evidence } else { Vec::new() },
    }
}

fn version_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(==|>=|<=|~=|\^)\s*\d|\bv\d+\.\d+|\d+\.\d+\.\d+").unwrap())
}

fn looks_like_pin_or_import(literal: &str) -> bool {
    if version_re().is_match(literal) {
        return true;
    }
    for marker in ["import ", "require(", "use ", "from ", "#include"] {
        if literal.contains(marker) {
            return true;
        }
    }
    // key: value / KEY=value shapes
    literal.contains('=') || literal.contains(": ")
}

/// Concept Bleed: skill-flavored content lands in files the task never
/// asked for.
///
/// (a) strictly more write targets with the skill than without (required);
/// (b) the divergence's new target is not among the requirement's expected
///     file operations (required);
/// (c) the new content is close to a skill section (cosine >= 0.5) that is
///     itself unrelated to the requirement (cosine < 0.3).
pub fn detect_cb(div: &DivergenceRecord, ctx: &DetectorContext<'_>) -> DetectorResult {
    let weights = ctx.weights().cb;
    let mut evidence = Vec::new();

    let a = ctx.with_write_target_count > ctx.without_write_target_count;
    if a {
        evidence.push(format!(
            "write-target count {} vs {}",
            ctx.with_write_target_count, ctx.without_write_target_count
        ));
    }

    // the "new" target: affected by this divergence, not written without
    let new_target = div
        .affected_targets
        .iter()
        .find(|t| !ctx.without_write_targets.contains(*t));
    let b = match new_target {
        Some(target) => {
            let expected = match &ctx.task_spec.file_operations {
                Some(ops) => ops.iter().any(|op| op == target),
                None => ctx.task_spec.requirement_text.contains(target.as_str()),
            };
            if !expected {
                evidence.push(format!("off-task target: {target}"));
            }
            !expected
        }
        None => false,
    };

    let c = match div.with_content() {
        Some(content) => {
            let mut docs: Vec<&str> = ctx.sections.iter().map(|s| s.text.as_str()).collect();
            docs.push(&content);
            docs.push(&ctx.task_spec.requirement_text);
            let model = TfIdf::fit(&docs);
            let hit = ctx.sections.iter().find(|s| {
                model.similarity(&content, &s.text) >= 0.5
                    && model.similarity(&s.text, &ctx.task_spec.requirement_text) < 0.3
            });
            if let Some(section) = hit {
                evidence.push(format!(
                    "content echoes off-requirement section: {}",
                    section.heading
                ));
            }
            hit.is_some()
        }
        None => false,
    };

    let score = clause_score([a, b, c], &weights, &[0, 1]);
    DetectorResult {
        score,
        evidence: if score > 0.0 { evidence } else { Vec::new() },
    }
}

/// Run all five detectors on one divergence; return the fires at or above
/// `theta`. A record may fire zero, one, or several classes.
pub fn label_divergence(
    div: &DivergenceRecord,
    ctx: &DetectorContext<'_>,
    theta: f64,
) -> Vec<SipFire> {
    let results = [
        (SipClass::PS, detect_ps(div, ctx)),
        (SipClass::EP, detect_ep(div, ctx)),
        (SipClass::RE, detect_re(div, ctx)),
        (SipClass::SA, detect_sa(div, ctx)),
        (SipClass::CB, detect_cb(div, ctx)),
    ];
    results
        .into_iter()
        .filter(|(_, r)| r.score >= theta)
        .map(|(class, r)| SipFire {
            divergence_id: div.id,
            sip_class: class,
            score: r.score,
            evidence: r.evidence,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{DivType, IntentWindow};
    use crate::phase::PhaseSpan;
    use crate::trace::{Condition, TraceEvent};
    use std::collections::BTreeMap;

    fn cfg() -> AuditConfig {
        AuditConfig::default()
    }

    fn think(i: usize, text: &str) -> TraceEvent {
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

    fn write(i: usize, target: &str, content: &str) -> TraceEvent {
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

    fn stream(events: Vec<TraceEvent>) -> EventStream {
        EventStream {
            condition: Condition::WithSkill,
            events,
            total_tokens: 0,
            skipped_records: 0,
            unknown_tools: 0,
        }
    }

    fn imp_span(start: usize, end: usize) -> PhaseSpan {
        PhaseSpan {
            phase_type: PhaseType::Implementation,
            start_index: start,
            end_index: end,
            via_fallback: false,
        }
    }

    fn phases(spans: Vec<PhaseSpan>) -> PhaseSequence {
        PhaseSequence {
            spans,
            fallback_applied: false,
        }
    }

    fn window(intent: &str, actions: Vec<TraceEvent>) -> IntentWindow {
        let start = actions.first().map(|e| e.index).unwrap_or(0);
        let end = actions.last().map(|e| e.index).unwrap_or(start);
        IntentWindow {
            phase: imp_span(start, end),
            intent_text: intent.to_string(),
            action_window: actions,
            start_index: start,
            end_index: end,
        }
    }

    struct Fixture {
        task_spec: TaskSpec,
        skill: String,
        with_stream: EventStream,
        without_stream: EventStream,
        with_phases: PhaseSequence,
        without_phases: PhaseSequence,
        tokens: (u64, u64),
        delta_p: f64,
    }

    impl Fixture {
        fn ctx<'a>(&'a self, config: &'a AuditConfig) -> DetectorContext<'a> {
            DetectorContext::new(
                &self.task_spec,
                &self.skill,
                &self.with_stream,
                &self.without_stream,
                &self.with_phases,
                &self.without_phases,
                self.tokens,
                self.delta_p,
                config,
            )
        }
    }

    fn record(
        div_type: DivType,
        with_w: IntentWindow,
        without_w: Option<IntentWindow>,
        targets: Vec<&str>,
        cosine: Option<f64>,
        features: &[(&str, f64)],
    ) -> DivergenceRecord {
        DivergenceRecord {
            id: 0,
            task_id: "t".into(),
            phase_type: PhaseType::Implementation,
            div_type,
            with_window: Some(with_w),
            without_window: without_w,
            affected_targets: targets.into_iter().map(str::to_string).collect(),
            intent_cosine: cosine,
            features: features
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect::<BTreeMap<_, _>>(),
        }
    }

    /// Skill with numbered steps echoed in with-skill reasoning only.
    fn ps_fixture(baseline_matches_step: bool) -> Fixture {
        let skill = "# Protocol\n\n## Steps\n\n1. Review the handler registry carefully.\n2. Write the dispatch table entries.\n3. Run the integration checks.\n"
            .to_string();
        let with_stream = stream(vec![
            think(0, "Review the handler registry carefully before touching it."),
            write(1, "src/dispatch.py", "TABLE = {}\n"),
            write(2, "src/dispatch.py", "TABLE = {'a': handle_a}\n"),
        ]);
        let without_reasoning = if baseline_matches_step {
            "Review the handler registry carefully first."
        } else {
            "Just edit the file directly."
        };
        let without_stream = stream(vec![
            think(0, without_reasoning),
            write(1, "src/dispatch.py", "TABLE = {'a': handle_a}\n"),
        ]);
        Fixture {
            task_spec: TaskSpec::default(),
            skill,
            with_phases: phases(vec![
                PhaseSpan {
                    phase_type: PhaseType::Orientation,
                    start_index: 0,
                    end_index: 0,
                    via_fallback: false,
                },
                imp_span(1, 2),
                PhaseSpan {
                    phase_type: PhaseType::Validation,
                    start_index: 2,
                    end_index: 2,
                    via_fallback: false,
                },
            ]),
            without_phases: phases(vec![imp_span(0, 1)]),
            with_stream,
            without_stream,
            tokens: (100, 100),
            delta_p: 0.0,
        }
    }

    #[test]
    fn ps_fires_when_all_clauses_hold() {
        let f = ps_fixture(false);
        let config = cfg();
        let ctx = f.ctx(&config);
        let div = record(
            DivType::ContentMismatch,
            window(
                "Review the handler registry carefully before touching it.",
                vec![write(1, "src/dispatch.py", "TABLE = {}\n")],
            ),
            Some(window("edit", vec![])),
            vec!["src/dispatch.py"],
            Some(0.8),
            &[],
        );
        let r = detect_ps(&div, &ctx);
        assert!((r.score - 1.0).abs() < 1e-9, "score {}", r.score);
        assert!(!r.evidence.is_empty());
    }

    #[test]
    fn ps_without_numbered_steps_caps_at_two_thirds() {
        let mut f = ps_fixture(false);
        f.skill = "Plain prose with no structure at all. Review the handler registry carefully."
            .to_string();
        let config = cfg();
        let ctx = f.ctx(&config);
        let div = record(
            DivType::ContentMismatch,
            window(
                "Review the handler registry carefully before touching it.",
                vec![write(1, "src/dispatch.py", "TABLE = {}\n")],
            ),
            Some(window("edit", vec![])),
            vec!["src/dispatch.py"],
            Some(0.8),
            &[],
        );
        let r = detect_ps(&div, &ctx);
        assert!(r.score <= 2.0 / 3.0 + 1e-9, "score {}", r.score);
    }

    #[test]
    fn ps_does_not_fire_when_baseline_matches_the_step() {
        let f = ps_fixture(true);
        let config = cfg();
        let ctx = f.ctx(&config);
        let div = record(
            DivType::ContentMismatch,
            window(
                "Review the handler registry carefully before touching it.",
                vec![write(1, "src/dispatch.py", "TABLE = {}\n")],
            ),
            Some(window("edit", vec![])),
            vec!["src/dispatch.py"],
            Some(0.8),
            &[],
        );
        let r = detect_ps(&div, &ctx);
        assert!(r.score < cfg().theta, "score {}", r.score);
        assert_eq!(r.score, 0.0);
    }

    fn ep_fixture() -> Fixture {
        let skill = "# Loader Hardening\n\n- Empty inputs must yield an empty list.\n- Wrap the parse loop in try/except OSError handling.\n".to_string();
        let guarded = "def load(p):\n    try:\n        return parse(p)\n    except OSError:\n        return []\n";
        let plain = "def load(p):\n    return parse(p)\n";
        Fixture {
            task_spec: TaskSpec::default(),
            skill,
            with_stream: stream(vec![write(0, "src/loader.py", guarded)]),
            without_stream: stream(vec![write(0, "src/loader.py", plain)]),
            with_phases: phases(vec![imp_span(0, 0)]),
            without_phases: phases(vec![imp_span(0, 0)]),
            tokens: (100, 100),
            delta_p: 0.0,
        }
    }

    #[test]
    fn ep_fires_on_guarded_shared_target_enumerated_by_skill() {
        let f = ep_fixture();
        let config = cfg();
        let ctx = f.ctx(&config);
        let guarded = "def load(p):\n    try:\n        return parse(p)\n    except OSError:\n        return []\n";
        let div = record(
            DivType::ContentMismatch,
            window("guard the loader", vec![write(0, "src/loader.py", guarded)]),
            Some(window("edit loader", vec![])),
            vec!["src/loader.py"],
            Some(0.9),
            &[("guard_delta", 1.0)],
        );
        let r = detect_ep(&div, &ctx);
        assert!(r.score >= config.theta, "score {}", r.score);
        // guard line "try:" itself has no 3-token skill overlap, so clause
        // (c) only holds via the except line; either way (a) and (b) carry
        // the fire
        assert!(!r.evidence.is_empty());
    }

    #[test]
    fn ep_is_zero_without_guard_delta() {
        let f = ep_fixture();
        let config = cfg();
        let ctx = f.ctx(&config);
        let div = record(
            DivType::ContentMismatch,
            window("edit", vec![write(0, "src/loader.py", "x = 1\n")]),
            Some(window("edit", vec![])),
            vec!["src/loader.py"],
            Some(0.9),
            &[("guard_delta", 0.0)],
        );
        assert_eq!(detect_ep(&div, &ctx).score, 0.0);
    }

    #[test]
    fn ep_stays_below_theta_on_unshared_targets() {
        let f = ep_fixture();
        let config = cfg();
        let ctx = f.ctx(&config);
        let guarded = "try:\n    pass\nexcept OSError:\n    pass\n";
        let div = record(
            DivType::UnilateralAction,
            window("", vec![write(0, "scripts/new_helper.py", guarded)]),
            None,
            vec!["scripts/new_helper.py"],
            None,
            &[("guard_delta", 1.0), ("from_recovery", 1.0)],
        );
        let r = detect_ep(&div, &ctx);
        assert!(r.score < config.theta);
        assert_eq!(r.score, 0.0);
    }

    fn re_fixture(ratio_num: u64, delta_p: f64) -> Fixture {
        let content = "fn main() {\n    run();\n}\n";
        Fixture {
            task_spec: TaskSpec::default(),
            skill: "# Skill\n\nGeneral advice.".to_string(),
            with_stream: stream(vec![
                write(0, "src/main.rs", content),
                write(1, "src/main.rs", content),
            ]),
            without_stream: stream(vec![write(0, "src/main.rs", content)]),
            with_phases: phases(vec![imp_span(0, 1)]),
            without_phases: phases(vec![imp_span(0, 0)]),
            tokens: (ratio_num, 100),
            delta_p,
        }
    }

    #[test]
    fn re_fires_on_redundant_convergent_work() {
        let f = re_fixture(200, 0.0);
        let config = cfg();
        let ctx = f.ctx(&config);
        let div = record(
            DivType::ContentMismatch,
            window(
                "rewrite main",
                vec![
                    write(0, "src/main.rs", "fn main() {}\n"),
                    write(1, "src/main.rs", "fn main() {}\n"),
                ],
            ),
            Some(window("rewrite main", vec![write(0, "src/main.rs", "x")])),
            vec!["src/main.rs"],
            Some(1.0),
            &[("with_action_count", 2.0), ("without_action_count", 1.0)],
        );
        let r = detect_re(&div, &ctx);
        assert!((r.score - 1.0).abs() < 1e-9, "score {}", r.score);
    }

    #[test]
    fn re_clause_a_requires_high_cosine() {
        let f = re_fixture(100, 5.0);
        let config = cfg();
        let ctx = f.ctx(&config);
        let div = record(
            DivType::ContentMismatch,
            window("x", vec![write(0, "src/main.rs", "a")]),
            Some(window("y", vec![write(0, "src/main.rs", "b")])),
            vec!["src/main.rs"],
            Some(0.3),
            &[("with_action_count", 4.0), ("without_action_count", 1.0)],
        );
        let r = detect_re(&div, &ctx);
        // (a) fails on cosine; only (b) can contribute here
        assert!(r.score < config.theta, "score {}", r.score);
    }

    #[test]
    fn re_token_clause_matches_ceiling_pattern() {
        // heavy overhead, unchanged pass rate, identical outputs
        let f = re_fixture(680, 0.0);
        let config = cfg();
        let ctx = f.ctx(&config);
        let div = record(
            DivType::ContentMismatch,
            window("polish", vec![write(0, "src/main.rs", "a")]),
            Some(window("done", vec![write(0, "src/main.rs", "b")])),
            vec!["src/main.rs"],
            Some(0.2),
            &[("with_action_count", 1.0), ("without_action_count", 1.0)],
        );
        let r = detect_re(&div, &ctx);
        // clauses (b) and (c) hold: 0.35 + 0.30 >= theta
        assert!(r.score >= config.theta, "score {}", r.score);
        assert!(r
            .evidence
            .iter()
            .any(|e| e.contains("token overhead 6.80x")));
    }

    fn sa_fixture(baseline_copies_too: bool) -> Fixture {
        let skill = "# Defensive Shell\n\nEnable strict mode:\n\n```bash\nset -Eeuo pipefail\n```\n"
            .to_string();
        let with_script = "#!/bin/bash\nset -Eeuo pipefail\ntar -czf out.tar.gz data/\n";
        let without_script = if baseline_copies_too {
            "#!/bin/bash\nset -Eeuo pipefail\ntar -czf out.tar.gz data/\n"
        } else {
            "#!/bin/bash\ntar -czf out.tar.gz data/\n"
        };
        Fixture {
            task_spec: TaskSpec::default(),
            skill,
            with_stream: stream(vec![write(0, "scripts/backup.sh", with_script)]),
            without_stream: stream(vec![write(0, "scripts/backup.sh", without_script)]),
            with_phases: phases(vec![imp_span(0, 0)]),
            without_phases: phases(vec![imp_span(0, 0)]),
            tokens: (90, 100),
            delta_p: 18.2,
        }
    }

    fn sa_div(content: &str) -> DivergenceRecord {
        record(
            DivType::ContentMismatch,
            window("harden", vec![write(0, "scripts/backup.sh", content)]),
            Some(window("write script", vec![])),
            vec!["scripts/backup.sh"],
            Some(0.9),
            &[("guard_delta", 1.0)],
        )
    }

    #[test]
    fn sa_fires_on_verbatim_skill_copy() {
        let f = sa_fixture(false);
        let config = cfg();
        let ctx = f.ctx(&config);
        let r = detect_sa(
            &sa_div("#!/bin/bash\nset -Eeuo pipefail\ntar -czf out.tar.gz data/\n"),
            &ctx,
        );
        assert!(r.score >= config.theta, "score {}", r.score);
        assert!(r.evidence.iter().any(|e| e.contains("set -Eeuo pipefail")));
    }

    #[test]
    fn sa_is_zero_without_any_shared_ngram() {
        let f = sa_fixture(false);
        let config = cfg();
        let ctx = f.ctx(&config);
        let r = detect_sa(&sa_div("echo hello\nsleep 1\n"), &ctx);
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn sa_does_not_fire_when_baseline_has_the_same_ngram() {
        let f = sa_fixture(true);
        let config = cfg();
        let ctx = f.ctx(&config);
        let r = detect_sa(
            &sa_div("#!/bin/bash\nset -Eeuo pipefail\ntar -czf out.tar.gz data/\n"),
            &ctx,
        );
        assert!(r.score < config.theta, "score {}", r.score);
        assert_eq!(r.score, 0.0);
    }

    fn cb_fixture(extra_with_target: bool) -> Fixture {
        let skill = "# Patterns\n\n## Documentation Habits\n\nAuthor a README summarizing usage, flags, and troubleshooting steps for future maintainers.\n".to_string();
        let mut with_events = vec![write(0, "src/api.py", "def handler(): pass\n")];
        if extra_with_target {
            with_events.push(write(
                1,
                "README.md",
                "Usage, flags, and troubleshooting steps for future maintainers.\n",
            ));
        }
        Fixture {
            task_spec: TaskSpec {
                requirement_text: "Add the admin endpoint in src/api.py".to_string(),
                file_operations: Some(vec!["src/api.py".to_string()]),
            },
            skill,
            with_stream: stream(with_events),
            without_stream: stream(vec![write(0, "src/api.py", "def handler(): pass\n")]),
            with_phases: phases(vec![imp_span(0, 1)]),
            without_phases: phases(vec![imp_span(0, 0)]),
            tokens: (100, 100),
            delta_p: 0.0,
        }
    }

    fn cb_div(target: &str, content: &str) -> DivergenceRecord {
        record(
            DivType::UnilateralAction,
            window("", vec![write(1, target, content)]),
            None,
            vec![target],
            None,
            &[("from_recovery", 1.0)],
        )
    }

    #[test]
    fn cb_fires_on_off_task_skill_flavored_file() {
        let f = cb_fixture(true);
        let config = cfg();
        let ctx = f.ctx(&config);
        let r = detect_cb(
            &cb_div(
                "README.md",
                "Usage, flags, and troubleshooting steps for future maintainers.\n",
            ),
            &ctx,
        );
        assert!(r.score >= config.theta, "score {}", r.score);
    }

    #[test]
    fn cb_needs_strictly_more_write_targets() {
        let f = cb_fixture(false);
        let config = cfg();
        let ctx = f.ctx(&config);
        let r = detect_cb(&cb_div("README.md", "Usage notes.\n"), &ctx);
        assert!(r.score < config.theta);
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn cb_does_not_fire_on_expected_targets() {
        let mut f = cb_fixture(true);
        f.task_spec.file_operations =
            Some(vec!["src/api.py".to_string(), "README.md".to_string()]);
        let config = cfg();
        let ctx = f.ctx(&config);
        let r = detect_cb(
            &cb_div(
                "README.md",
                "Usage, flags, and troubleshooting steps for future maintainers.\n",
            ),
            &ctx,
        );
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn scores_stay_in_unit_interval_even_with_odd_weights() {
        let mut config = cfg();
        config.detector_weights.sa = [0.9, 0.9, 0.9];
        let f = sa_fixture(false);
        let ctx = f.ctx(&config);
        let r = detect_sa(
            &sa_div("#!/bin/bash\nset -Eeuo pipefail\ntar -czf out.tar.gz data/\n"),
            &ctx,
        );
        assert!(r.score <= 1.0);
        assert!(r.score >= 0.0);
    }

    #[test]
    fn exact_threshold_score_fires_inclusively() {
        let mut config = cfg();
        // weights tuned so (a) and (b) alone land exactly on theta
        config.detector_weights.sa = [0.25, 0.25, 0.5];
        let f = sa_fixture(false);
        let ctx = f.ctx(&config);
        let div = sa_div("#!/bin/bash\nset -Eeuo pipefail\ntar -czf out.tar.gz data/\n");
        let r = detect_sa(&div, &ctx);
        assert_eq!(r.score, 0.50);
        let fires = label_divergence(&div, &ctx, config.theta);
        assert!(fires.iter().any(|f| f.sip_class == SipClass::SA));
    }

    #[test]
    fn one_record_can_fire_multiple_classes() {
        // a unilateral write that copies skill text verbatim into an
        // off-task file satisfies both SA and CB
        let skill = "# Shell Patterns\n\n## Test Scaffolding\n\nAuthor bats test files covering the failure paths and the happy path so regressions surface early.\n".to_string();
        let bats = "#!/usr/bin/env bats\n# covering the failure paths and the happy path so regressions surface early\n@test \"fails without args\" { run scripts/backup.sh; }\n";
        let f = Fixture {
            task_spec: TaskSpec {
                requirement_text: "Add a backup script at scripts/backup.sh".to_string(),
                file_operations: Some(vec!["scripts/backup.sh".to_string()]),
            },
            skill,
            with_stream: stream(vec![
                write(0, "scripts/backup.sh", "#!/bin/bash\ntar -czf b.tgz d/\n"),
                write(1, "tests/backup.bats", bats),
            ]),
            without_stream: stream(vec![write(
                0,
                "scripts/backup.sh",
                "#!/bin/bash\ntar -czf b.tgz d/\n",
            )]),
            with_phases: phases(vec![imp_span(0, 1)]),
            without_phases: phases(vec![imp_span(0, 0)]),
            tokens: (90, 100),
            delta_p: 18.2,
        };
        let config = cfg();
        let ctx = f.ctx(&config);
        let div = cb_div("tests/backup.bats", bats);
        let fires = label_divergence(&div, &ctx, config.theta);
        let classes: Vec<SipClass> = fires.iter().map(|f| f.sip_class).collect();
        assert!(classes.contains(&SipClass::SA), "fires: {classes:?}");
        assert!(classes.contains(&SipClass::CB), "fires: {classes:?}");
        for fire in &fires {
            assert!(!fire.evidence.is_empty());
            assert!(fire.score >= config.theta);
        }
    }

    #[test]
    fn detectors_are_independent() {
        // removing one detector cannot change another's score: scores are
        // pure functions of (div, ctx); spot-check by calling in isolation
        let f = sa_fixture(false);
        let config = cfg();
        let ctx = f.ctx(&config);
        let div = sa_div("#!/bin/bash\nset -Eeuo pipefail\n");
        let alone = detect_sa(&div, &ctx).score;
        let _ = detect_ps(&div, &ctx);
        let _ = detect_cb(&div, &ctx);
        let again = detect_sa(&div, &ctx).score;
        assert_eq!(alone, again);
    }
}
