//! Counterfactual alignment: dynamic time warping over phase sequences,
//! intent-window extraction and pairing, action-window comparison, and the
//! one-sided recovery pass for writes the baseline never touches.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::AuditConfig;
use crate::error::{CtaError, Result};
use crate::phase::{outcome_class, PhaseSequence, PhaseSpan, PhaseType};
use crate::text::{changed_line_count, count_guard_tokens, TfIdf};
use crate::trace::{canonical_signature, EventStream, EventType, TraceEvent};

/// A reasoning event (or leading action run) plus the tool actions it
/// governs, up to the next reasoning event or phase boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentWindow {
    pub phase: PhaseSpan,
    pub intent_text: String,
    pub action_window: Vec<TraceEvent>,
    pub start_index: usize,
    pub end_index: usize,
}

/// Phase-level warping path between the two traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseAlignment {
    /// (with-span index, without-span index) pairs along the path.
    pub pairs: Vec<(usize, usize)>,
    /// Number of type-mismatched pairs on the path.
    pub total_cost: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivType {
    TargetMismatch,
    ContentMismatch,
    OutcomeMismatch,
    UnilateralAction,
}

/// A localized behavioral difference between the two traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRecord {
    pub id: usize,
    pub task_id: String,
    pub phase_type: PhaseType,
    pub div_type: DivType,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub with_window: Option<IntentWindow>,
    /// Empty for records from the one-sided recovery pass.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub without_window: Option<IntentWindow>,
    pub affected_targets: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intent_cosine: Option<f64>,
    /// Normalized numeric features consumed by the detectors.
    pub features: BTreeMap<String, f64>,
}

impl DivergenceRecord {
    /// Written content on the with side relevant to this divergence:
    /// write actions in the with window touching an affected target (or any
    /// write when no targets are recorded).
    pub fn with_content(&self) -> Option<String> {
        window_content(self.with_window.as_ref(), &self.affected_targets)
    }

    pub fn without_content(&self) -> Option<String> {
        window_content(self.without_window.as_ref(), &self.affected_targets)
    }

    /// True when this record came from the one-sided recovery pass.
    pub fn from_recovery(&self) -> bool {
        self.features.get("from_recovery").copied() == Some(1.0)
    }
}

fn window_content(window: Option<&IntentWindow>, targets: &[String]) -> Option<String> {
    let window = window?;
    let mut parts = Vec::new();
    for e in &window.action_window {
        if let Some(content) = e.written_content() {
            let relevant = targets.is_empty()
                || e.target
                    .as_deref()
                    .is_some_and(|t| targets.iter().any(|a| a == t));
            if relevant {
                parts.push(content);
            }
        }
    }
    if parts.is_empty() {
        None
    } else {
        Some(parts.join("\n"))
    }
}

// ---------------------------------------------------------------------------
// phase-level DTW
// ---------------------------------------------------------------------------

/// Dynamic time warping over the two span sequences. Per-pair cost is 1
/// when the phase types differ, 0 otherwise. Ties prefer diagonal steps,
/// then steps that advance the with-skill index.
pub fn align_phases(
    with_seq: &PhaseSequence,
    without_seq: &PhaseSequence,
) -> Result<PhaseAlignment> {
    let a = with_seq.types();
    let b = without_seq.types();
    if a.is_empty() || b.is_empty() {
        return Err(CtaError::EmptySequence);
    }
    let (m, n) = (a.len(), b.len());
    let mut dp = vec![vec![usize::MAX; n]; m];
    let mut parent: Vec<Vec<Option<(usize, usize)>>> = vec![vec![None; n]; m];

    for i in 0..m {
        for j in 0..n {
            let cost = usize::from(a[i] != b[j]);
            if i == 0 && j == 0 {
                dp[0][0] = cost;
                continue;
            }
            // candidates in tie-break preference order
            let mut candidates: Vec<(usize, usize)> = Vec::with_capacity(3);
            if i > 0 && j > 0 {
                candidates.push((i - 1, j - 1));
            }
            if i > 0 {
                candidates.push((i - 1, j));
            }
            if j > 0 {
                candidates.push((i, j - 1));
            }
            let mut best: Option<(usize, (usize, usize))> = None;
            for (pi, pj) in candidates {
                let c = dp[pi][pj];
                if best.is_none_or(|(bc, _)| c < bc) {
                    best = Some((c, (pi, pj)));
                }
            }
            let (bc, bp) = best.expect("non-origin cell has a predecessor");
            dp[i][j] = bc + cost;
            parent[i][j] = Some(bp);
        }
    }

    let mut path = Vec::new();
    let mut cur = (m - 1, n - 1);
    loop {
        path.push(cur);
        match parent[cur.0][cur.1] {
            Some(p) => cur = p,
            None => break,
        }
    }
    path.reverse();

    Ok(PhaseAlignment {
        pairs: path,
        total_cost: dp[m - 1][n - 1],
    })
}

// ---------------------------------------------------------------------------
// intent windows
// ---------------------------------------------------------------------------

/// One window per maximal reasoning run inside the span; a leading action
/// run with no preceding reasoning forms a window with empty intent text.
pub fn extract_intent_windows(span: &PhaseSpan, stream: &EventStream) -> Vec<IntentWindow> {
    let mut windows = Vec::new();
    let events = &stream.events;
    if span.start_index >= events.len() {
        return windows;
    }
    let end = span.end_index.min(events.len() - 1);
    let mut i = span.start_index;

    while i <= end {
        let window_start = i;
        let mut intent_parts: Vec<&str> = Vec::new();
        while i <= end && events[i].event_type == EventType::Think {
            if let Some(text) = events[i].reasoning.as_deref() {
                intent_parts.push(text);
            }
            i += 1;
        }
        let mut actions = Vec::new();
        while i <= end && events[i].event_type != EventType::Think {
            actions.push(events[i].clone());
            i += 1;
        }
        let window_end = if i > window_start { i - 1 } else { window_start };
        windows.push(IntentWindow {
            phase: *span,
            intent_text: intent_parts.join("\n"),
            action_window: actions,
            start_index: window_start,
            end_index: window_end,
        });
    }
    windows
}

// ---------------------------------------------------------------------------
// intent similarity and pairing
// ---------------------------------------------------------------------------

/// TF-IDF cosine of two reasoning texts under a model fitted on exactly
/// this pair. Bundle-level audits fit one model over all intent texts of
/// both traces instead; see [`build_intent_model`].
pub fn intent_similarity(a: &str, b: &str) -> f64 {
    crate::text::pair_similarity(a, b)
}

/// Fit the bundle-local TF-IDF model: the document set is every intent
/// text from both traces.
pub fn build_intent_model(windows: &[&[IntentWindow]]) -> TfIdf {
    let docs: Vec<&str> = windows
        .iter()
        .flat_map(|ws| ws.iter().map(|w| w.intent_text.as_str()))
        .collect();
    TfIdf::fit(&docs)
}

/// Result of pairing two window lists.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentAlignment {
    /// (with index, without index, similarity), monotone in both indices.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unpaired_with: Vec<usize>,
    pub unpaired_without: Vec<usize>,
}

/// Greedy order-preserving matching: scan the with-skill windows in order
/// and pair each with its best candidate at or above `delta` beyond a
/// monotone frontier. Pairs below threshold stay unaligned; no crossings.
pub fn align_intents(
    with_windows: &[IntentWindow],
    without_windows: &[IntentWindow],
    model: &TfIdf,
    delta: f64,
) -> IntentAlignment {
    let mut pairs = Vec::new();
    let mut frontier = 0usize;
    for (i, w) in with_windows.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (j, v) in without_windows.iter().enumerate().skip(frontier) {
            let s = model.similarity(&w.intent_text, &v.intent_text);
            if s >= delta && best.is_none_or(|(_, bs)| s > bs) {
                best = Some((j, s));
            }
        }
        if let Some((j, s)) = best {
            pairs.push((i, j, s));
            frontier = j + 1;
        }
    }
    let paired_with: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let paired_without: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    IntentAlignment {
        unpaired_with: (0..with_windows.len())
            .filter(|i| !paired_with.contains(i))
            .collect(),
        unpaired_without: (0..without_windows.len())
            .filter(|j| !paired_without.contains(j))
            .collect(),
        pairs,
    }
}

// ---------------------------------------------------------------------------
// action-window comparison
// ---------------------------------------------------------------------------

fn sig_key(event: &TraceEvent, config: &AuditConfig) -> String {
    canonical_signature(event, config).unwrap_or_default()
}

/// Whitespace-insensitive line view used for content equality.
fn normalized_lines(content: &str) -> Vec<&str> {
    content
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect()
}

struct RecordBuilder<'a> {
    task_id: &'a str,
    with_w: &'a IntentWindow,
    without_w: &'a IntentWindow,
    cosine: f64,
    config: &'a AuditConfig,
}

impl RecordBuilder<'_> {
    fn base_features(&self) -> BTreeMap<String, f64> {
        let mut f = BTreeMap::new();
        f.insert(
            "with_action_count".into(),
            self.with_w.action_window.len() as f64,
        );
        f.insert(
            "without_action_count".into(),
            self.without_w.action_window.len() as f64,
        );
        f
    }

    fn record(
        &self,
        div_type: DivType,
        affected: Vec<String>,
        extra: BTreeMap<String, f64>,
    ) -> DivergenceRecord {
        let mut features = self.base_features();
        features.extend(extra);
        DivergenceRecord {
            id: 0,
            task_id: self.task_id.to_string(),
            phase_type: self.with_w.phase.phase_type,
            div_type,
            with_window: Some(self.with_w.clone()),
            without_window: Some(self.without_w.clone()),
            affected_targets: affected,
            intent_cosine: Some(self.cosine),
            features,
        }
    }
}

/// Compare the tail action windows of one aligned intent pair and emit a
/// record per behavioral difference: different targets, same target with
/// different written content, same action with a different outcome class,
/// or an action type+target present in only one window. Behaviorally
/// identical windows emit nothing.
pub fn compare_action_windows(
    task_id: &str,
    with_w: &IntentWindow,
    without_w: &IntentWindow,
    cosine: f64,
    config: &AuditConfig,
) -> Vec<DivergenceRecord> {
    let b = RecordBuilder {
        task_id,
        with_w,
        without_w,
        cosine,
        config,
    };
    let wa = &with_w.action_window;
    let woa = &without_w.action_window;
    let mut records = Vec::new();

    // 1. exact signature matching, in order
    let mut used_b = vec![false; woa.len()];
    let mut matched: Vec<(usize, usize)> = Vec::new();
    let mut leftover_a: Vec<usize> = Vec::new();
    for (ai, a) in wa.iter().enumerate() {
        let sig = sig_key(a, config);
        let hit = woa
            .iter()
            .enumerate()
            .position(|(bi, e)| !used_b[bi] && sig_key(e, config) == sig);
        match hit {
            Some(bi) => {
                used_b[bi] = true;
                matched.push((ai, bi));
            }
            None => leftover_a.push(ai),
        }
    }
    let leftover_b: Vec<usize> = (0..woa.len()).filter(|bi| !used_b[*bi]).collect();

    for (ai, bi) in &matched {
        records.extend(compare_pair(&b, &wa[*ai], &woa[*bi]));
    }

    // 2. leftovers of the same event type pair positionally
    let mut overflow: Vec<(&TraceEvent, bool)> = Vec::new(); // (event, is_with_side)
    for ty in [
        EventType::Read,
        EventType::Write,
        EventType::Execute,
        EventType::Search,
    ] {
        let la: Vec<&TraceEvent> = leftover_a
            .iter()
            .map(|i| &wa[*i])
            .filter(|e| e.event_type == ty)
            .collect();
        let lb: Vec<&TraceEvent> = leftover_b
            .iter()
            .map(|i| &woa[*i])
            .filter(|e| e.event_type == ty)
            .collect();
        let common = la.len().min(lb.len());
        for k in 0..common {
            let (ea, eb) = (la[k], lb[k]);
            match (ea.target.as_deref(), eb.target.as_deref()) {
                (Some(ta), Some(tb)) if ta != tb => {
                    let mut extra = BTreeMap::new();
                    extra.insert("guard_delta".into(), guard_delta(ea, eb, config));
                    records.push(b.record(
                        DivType::TargetMismatch,
                        vec![ta.to_string(), tb.to_string()],
                        extra,
                    ));
                }
                _ => records.extend(compare_pair(&b, ea, eb)),
            }
        }
        overflow.extend(la.into_iter().skip(common).map(|e| (e, true)));
        overflow.extend(lb.into_iter().skip(common).map(|e| (e, false)));
    }

    // 3. count overflow: an action type+target present in only one window
    for (event, is_with) in overflow {
        let mut extra = BTreeMap::new();
        extra.insert("unilateral_side_with".into(), f64::from(u8::from(is_with)));
        if is_with {
            if let Some(content) = event.written_content() {
                extra.insert(
                    "guard_delta".into(),
                    count_guard_tokens(content, &config.guard_tokens) as f64,
                );
            }
        }
        let affected = event.target.clone().into_iter().collect();
        records.push(b.record(DivType::UnilateralAction, affected, extra));
    }

    records
}

/// Checks for one matched action pair (same signature, or same type and
/// target): outcome class and, for writes, normalized content.
fn compare_pair(b: &RecordBuilder<'_>, ea: &TraceEvent, eb: &TraceEvent) -> Vec<DivergenceRecord> {
    let mut records = Vec::new();
    let targets: Vec<String> = match (&ea.target, &eb.target) {
        (Some(ta), Some(tb)) if ta != tb => {
            // same basename, different path: a target mismatch after all
            let mut extra = BTreeMap::new();
            extra.insert("guard_delta".into(), guard_delta(ea, eb, b.config));
            records.push(b.record(DivType::TargetMismatch, vec![ta.clone(), tb.clone()], extra));
            return records;
        }
        (Some(t), _) | (_, Some(t)) => vec![t.clone()],
        (None, None) => Vec::new(),
    };

    if outcome_class(ea, b.config) != outcome_class(eb, b.config) {
        records.push(b.record(DivType::OutcomeMismatch, targets.clone(), BTreeMap::new()));
    }

    if ea.event_type == EventType::Write {
        let ca = ea.written_content().unwrap_or("");
        let cb = eb.written_content().unwrap_or("");
        if normalized_lines(ca) != normalized_lines(cb) {
            let mut extra = BTreeMap::new();
            extra.insert("guard_delta".into(), guard_delta(ea, eb, b.config));
            extra.insert("changed_lines".into(), changed_line_count(ca, cb) as f64);
            records.push(b.record(DivType::ContentMismatch, targets, extra));
        }
    }
    records
}

fn guard_delta(ea: &TraceEvent, eb: &TraceEvent, config: &AuditConfig) -> f64 {
    let ga = ea
        .written_content()
        .map(|c| count_guard_tokens(c, &config.guard_tokens))
        .unwrap_or(0) as f64;
    let gb = eb
        .written_content()
        .map(|c| count_guard_tokens(c, &config.guard_tokens))
        .unwrap_or(0) as f64;
    ga - gb
}

// ---------------------------------------------------------------------------
// unilateral recovery pass
// ---------------------------------------------------------------------------

/// Emit one UNILATERAL_ACTION record (with an empty without-skill window)
/// per with-skill write target never touched by any event in the
/// without-skill trace. The phase comes from the span containing the first
/// such write.
pub fn recover_unilateral(
    task_id: &str,
    with_stream: &EventStream,
    without_stream: &EventStream,
    with_phases: &PhaseSequence,
    config: &AuditConfig,
) -> Vec<DivergenceRecord> {
    let without_touched = without_stream.touched_targets();
    let mut seen = std::collections::BTreeSet::new();
    let mut records = Vec::new();

    for event in &with_stream.events {
        if event.event_type != EventType::Write {
            continue;
        }
        let Some(target) = event.target.as_deref() else {
            continue;
        };
        if without_touched.contains(target) || !seen.insert(target.to_string()) {
            continue;
        }
        let writes: Vec<TraceEvent> = with_stream
            .events
            .iter()
            .filter(|e| e.event_type == EventType::Write && e.target.as_deref() == Some(target))
            .cloned()
            .collect();
        let first_index = writes[0].index;
        let last_index = writes.last().unwrap().index;
        let span = with_phases
            .span_of(first_index)
            .map(|i| with_phases.spans[i])
            .unwrap_or(PhaseSpan {
                phase_type: PhaseType::Implementation,
                start_index: first_index,
                end_index: last_index,
                via_fallback: false,
            });

        let mut features = BTreeMap::new();
        features.insert("from_recovery".into(), 1.0);
        features.insert("with_action_count".into(), writes.len() as f64);
        features.insert("without_action_count".into(), 0.0);
        let guard_total: usize = writes
            .iter()
            .filter_map(TraceEvent::written_content)
            .map(|c| count_guard_tokens(c, &config.guard_tokens))
            .sum();
        features.insert("guard_delta".into(), guard_total as f64);

        records.push(DivergenceRecord {
            id: 0,
            task_id: task_id.to_string(),
            phase_type: span.phase_type,
            div_type: DivType::UnilateralAction,
            with_window: Some(IntentWindow {
                phase: span,
                intent_text: String::new(),
                action_window: writes,
                start_index: first_index,
                end_index: last_index,
            }),
            without_window: None,
            affected_targets: vec![target.to_string()],
            intent_cosine: None,
            features,
        });
    }
    records
}

// ---------------------------------------------------------------------------
// bundle-level driver
// ---------------------------------------------------------------------------

/// Alignment output for one bundle: the warping path and the stable-ordered
/// divergence records from both the pairwise comparison and the recovery
/// pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentOutcome {
    pub phase_alignment: PhaseAlignment,
    pub divergences: Vec<DivergenceRecord>,
}

/// Run the full alignment for one bundle.
pub fn align_bundle(
    task_id: &str,
    with_stream: &EventStream,
    without_stream: &EventStream,
    with_phases: &PhaseSequence,
    without_phases: &PhaseSequence,
    config: &AuditConfig,
) -> Result<AlignmentOutcome> {
    let phase_alignment = align_phases(with_phases, without_phases)?;

    let with_windows: Vec<Vec<IntentWindow>> = with_phases
        .spans
        .iter()
        .map(|s| extract_intent_windows(s, with_stream))
        .collect();
    let without_windows: Vec<Vec<IntentWindow>> = without_phases
        .spans
        .iter()
        .map(|s| extract_intent_windows(s, without_stream))
        .collect();

    let all: Vec<&[IntentWindow]> = with_windows
        .iter()
        .map(Vec::as_slice)
        .chain(without_windows.iter().map(Vec::as_slice))
        .collect();
    let model = build_intent_model(&all);

    let mut records = Vec::new();
    // per-span frontiers keep pairing monotone across repeated path visits
    let mut frontier_with = vec![0usize; with_windows.len()];
    let mut frontier_without = vec![0usize; without_windows.len()];

    for &(si, sj) in &phase_alignment.pairs {
        let avail_with = &with_windows[si][frontier_with[si]..];
        let avail_without = &without_windows[sj][frontier_without[sj]..];
        if avail_with.is_empty() || avail_without.is_empty() {
            continue;
        }
        let alignment = align_intents(avail_with, avail_without, &model, config.delta);
        for (wi, vi, cosine) in &alignment.pairs {
            let w = &avail_with[*wi];
            let v = &avail_without[*vi];
            records.extend(compare_action_windows(task_id, w, v, *cosine, config));
        }
        if let Some(last) = alignment.pairs.last() {
            frontier_with[si] += last.0 + 1;
            frontier_without[sj] += last.1 + 1;
        }
    }

    records.extend(recover_unilateral(
        task_id,
        with_stream,
        without_stream,
        with_phases,
        config,
    ));

    // stable order: with-skill anchor index, then type, then targets
    records.sort_by(|a, b| {
        let anchor = |r: &DivergenceRecord| {
            r.with_window
                .as_ref()
                .map(|w| w.start_index)
                .unwrap_or(usize::MAX)
        };
        anchor(a)
            .cmp(&anchor(b))
            .then_with(|| a.div_type.cmp(&b.div_type))
            .then_with(|| a.affected_targets.cmp(&b.affected_targets))
    });
    for (i, r) in records.iter_mut().enumerate() {
        r.id = i;
    }

    Ok(AlignmentOutcome {
        phase_alignment,
        divergences: records,
    })
}
