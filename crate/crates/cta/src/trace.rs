//! Trace parsing: converts a raw newline-delimited record stream into a
//! uniform typed event stream with canonical targets and a per-trace token
//! total.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::AuditConfig;
use crate::error::{CtaError, Result};

/// The five event types every record collapses to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Read,
    Write,
    Execute,
    Search,
    Think,
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EventType::Read => "read",
            EventType::Write => "write",
            EventType::Execute => "execute",
            EventType::Search => "search",
            EventType::Think => "think",
        };
        f.write_str(s)
    }
}

/// Which arm of the counterfactual pair a stream came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    WithSkill,
    WithoutSkill,
}

/// One typed agent action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
    pub event_type: EventType,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tool_input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tool_output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub tool_name: String,
    pub tokens: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i64>,
}

impl TraceEvent {
    /// Written content carried by this event, if it is a write.
    pub fn written_content(&self) -> Option<&str> {
        if self.event_type == EventType::Write {
            self.tool_input.as_deref()
        } else {
            None
        }
    }
}

/// A parsed trace: ordered events plus bookkeeping tallies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStream {
    pub condition: Condition,
    pub events: Vec<TraceEvent>,
    pub total_tokens: u64,
    /// Records that were valid objects but produced no event.
    pub skipped_records: usize,
    /// Tool labels that fell through the mapping table to EXECUTE.
    pub unknown_tools: usize,
}

impl EventStream {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Canonical targets of WRITE events, in first-write order, deduplicated.
    pub fn write_targets(&self) -> Vec<&str> {
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for e in &self.events {
            if e.event_type == EventType::Write {
                if let Some(t) = e.target.as_deref() {
                    if seen.insert(t) {
                        out.push(t);
                    }
                }
            }
        }
        out
    }

    /// Canonical targets touched by any event type.
    pub fn touched_targets(&self) -> std::collections::BTreeSet<&str> {
        self.events
            .iter()
            .filter_map(|e| e.target.as_deref())
            .collect()
    }

    /// Last written content per target, in stream order.
    pub fn final_content(&self, target: &str) -> Option<&str> {
        self.events
            .iter()
            .rev()
            .find(|e| e.event_type == EventType::Write && e.target.as_deref() == Some(target))
            .and_then(|e| e.written_content())
    }

    /// Normalized-event export: one JSON object per event, stable key order.
    pub fn export_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }
}

/// A record stream as loaded from disk: JSON objects, order preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrace {
    pub file: String,
    pub records: Vec<Value>,
}

impl RawTrace {
    /// Parse newline-delimited JSON. Blank lines are ignored; any line that
    /// is not a JSON object fails with its 1-based record index.
    pub fn from_str(text: &str, file: &str) -> Result<Self> {
        let mut records = Vec::new();
        let mut record_no = 0usize;
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            record_no += 1;
            let value: Value = serde_json::from_str(line).map_err(|_| CtaError::MalformedTrace {
                file: file.to_string(),
                record: record_no,
            })?;
            if !value.is_object() {
                return Err(CtaError::MalformedTrace {
                    file: file.to_string(),
                    record: record_no,
                });
            }
            records.push(value);
        }
        Ok(RawTrace {
            file: file.to_string(),
            records,
        })
    }

    /// Task id named by any record, if present.
    pub fn task_id_hint(&self) -> Option<&str> {
        self.records
            .iter()
            .find_map(|r| r.get("task_id").and_then(Value::as_str))
    }
}

/// Map a raw tool label to an event type. Reasoning payloads map to THINK;
/// labels outside the table map to EXECUTE (tallied by the caller).
pub fn classify_event(tool_name: &str, is_reasoning: bool, config: &AuditConfig) -> EventType {
    if is_reasoning {
        return EventType::Think;
    }
    if let Some(ty) = config.tool_map.get(tool_name) {
        return *ty;
    }
    // case-insensitive fallback before defaulting
    let lowered = tool_name.to_lowercase();
    for (name, ty) in &config.tool_map {
        if name.to_lowercase() == lowered {
            return *ty;
        }
    }
    EventType::Execute
}

fn is_known_tool(tool_name: &str, config: &AuditConfig) -> bool {
    if config.tool_map.contains_key(tool_name) {
        return true;
    }
    let lowered = tool_name.to_lowercase();
    config.tool_map.keys().any(|k| k.to_lowercase() == lowered)
}

/// Lexically canonicalize a path: collapse duplicate separators, resolve
/// `.` and `..`, strip the configured workspace prefix, preserve case.
pub fn normalize_path(raw: &str, workspace_prefix: &str) -> Result<String> {
    if raw.is_empty() {
        return Err(CtaError::EmptyPath);
    }
    let resolved = lexical_resolve(raw);
    if workspace_prefix.is_empty() {
        return Ok(resolved);
    }
    let prefix = lexical_resolve(workspace_prefix);
    if resolved == prefix {
        return Ok(".".to_string());
    }
    if let Some(rest) = resolved.strip_prefix(&format!("{prefix}/")) {
        return Ok(rest.to_string());
    }
    Ok(resolved)
}

fn lexical_resolve(raw: &str) -> String {
    let absolute = raw.starts_with('/');
    let mut stack: Vec<&str> = Vec::new();
    for part in raw.split('/') {
        match part {
            "" | "." => {}
            ".." => {
                if stack.last().is_some_and(|p| *p != "..") {
                    stack.pop();
                } else if !absolute {
                    stack.push("..");
                }
                // ".." at an absolute root is dropped
            }
            other => stack.push(other),
        }
    }
    let joined = stack.join("/");
    if absolute {
        format!("/{joined}")
    } else if joined.is_empty() {
        ".".to_string()
    } else {
        joined
    }
}

/// `<ToolName>:<short-target-or-command-head>` for a tool event. Targets
/// shorten to their final path component; command heads are truncated to
/// the configured budget with a trailing ellipsis.
pub fn canonical_signature(event: &TraceEvent, config: &AuditConfig) -> Result<String> {
    if event.event_type == EventType::Think {
        return Err(CtaError::NotAToolEvent);
    }
    let short = match event.target.as_deref() {
        Some(target) => target.rsplit('/').next().unwrap_or(target).to_string(),
        None => {
            let head: String = event
                .tool_input
                .as_deref()
                .unwrap_or("")
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ");
            truncate_with_ellipsis(&head, config.signature_budget)
        }
    };
    Ok(format!("{}:{}", event.tool_name, short))
}

fn truncate_with_ellipsis(s: &str, budget: usize) -> String {
    if s.chars().count() <= budget {
        return s.to_string();
    }
    let mut out: String = s.chars().take(budget).collect();
    out.push('…');
    out
}

// ---------------------------------------------------------------------------
// record stream -> event stream
// ---------------------------------------------------------------------------

fn get_str<'a>(obj: &'a Value, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| obj.get(*k).and_then(Value::as_str))
}

fn get_any<'a>(obj: &'a Value, keys: &[&str]) -> Option<&'a Value> {
    keys.iter().find_map(|k| obj.get(*k))
}

/// Token count reported by a record's usage fields, tolerating several
/// layouts: a bare number, `{"total_tokens": n}`, or input/output splits.
fn record_tokens(record: &Value) -> u64 {
    if let Some(n) = record.get("tokens").and_then(Value::as_u64) {
        return n;
    }
    match record.get("usage") {
        Some(Value::Number(n)) => n.as_u64().unwrap_or(0),
        Some(usage @ Value::Object(_)) => {
            if let Some(total) = usage.get("total_tokens").and_then(Value::as_u64) {
                total
            } else {
                let input = usage.get("input_tokens").and_then(Value::as_u64).unwrap_or(0);
                let output = usage
                    .get("output_tokens")
                    .and_then(Value::as_u64)
                    .unwrap_or(0);
                input + output
            }
        }
        _ => 0,
    }
}

fn value_to_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

enum RecordKind<'a> {
    Reasoning(String),
    Tool(&'a Value),
    Administrative,
}

fn record_kind(record: &Value) -> RecordKind<'_> {
    let kind = get_str(record, &["type", "kind", "role"]).unwrap_or("");
    match kind {
        "think" | "thinking" | "reasoning" | "thought" | "text" => {
            let text = get_str(record, &["text", "reasoning", "content", "thought"])
                .unwrap_or("")
                .to_string();
            RecordKind::Reasoning(text)
        }
        "tool_call" | "tool_use" | "tool" | "action" => RecordKind::Tool(record),
        _ => RecordKind::Administrative,
    }
}

/// Convert one record stream into a typed event stream.
///
/// Every tool call and reasoning block becomes exactly one event; other
/// records are skipped but tallied (their usage still counts toward the
/// stream total, attributed to the nearest event). A stream with zero
/// events is a hard error for auditing.
pub fn parse_trace(
    raw: &RawTrace,
    condition: Condition,
    config: &AuditConfig,
) -> Result<EventStream> {
    let mut events: Vec<TraceEvent> = Vec::new();
    let mut skipped = 0usize;
    let mut unknown_tools = 0usize;
    // usage from records that produce no event, waiting for an event to carry it
    let mut orphan_tokens = 0u64;

    for (idx, record) in raw.records.iter().enumerate() {
        let tokens = record_tokens(record);
        match record_kind(record) {
            RecordKind::Reasoning(text) => {
                events.push(TraceEvent {
                    index: events.len(),
                    timestamp: get_any(record, &["timestamp", "t", "ts"]).and_then(Value::as_f64),
                    event_type: EventType::Think,
                    reasoning: Some(text),
                    tool_input: None,
                    tool_output: None,
                    target: None,
                    tool_name: String::new(),
                    tokens,
                    exit_code: None,
                });
            }
            RecordKind::Tool(rec) => {
                let tool_name = get_str(rec, &["tool", "tool_name", "name"])
                    .unwrap_or("")
                    .to_string();
                if tool_name.is_empty() {
                    return Err(CtaError::MalformedRecord(idx + 1));
                }
                let event_type = classify_event(&tool_name, false, config);
                if !is_known_tool(&tool_name, config) {
                    unknown_tools += 1;
                }
                let (target, tool_input) = extract_payload(rec, event_type, config)?;
                let tool_output = get_any(rec, &["output", "tool_output", "result"])
                    .map(value_to_text);
                events.push(TraceEvent {
                    index: events.len(),
                    timestamp: get_any(rec, &["timestamp", "t", "ts"]).and_then(Value::as_f64),
                    event_type,
                    reasoning: None,
                    tool_input,
                    tool_output,
                    target,
                    tool_name,
                    tokens,
                    exit_code: get_any(rec, &["exit_code", "exit_status", "code"])
                        .and_then(Value::as_i64),
                });
            }
            RecordKind::Administrative => {
                skipped += 1;
                orphan_tokens += tokens;
                // attribute to the most recent event when one exists
                if let Some(last) = events.last_mut() {
                    last.tokens += orphan_tokens;
                    orphan_tokens = 0;
                }
                continue;
            }
        }
        // flush usage buffered before the first event
        if orphan_tokens > 0 {
            if let Some(last) = events.last_mut() {
                last.tokens += orphan_tokens;
                orphan_tokens = 0;
            }
        }
    }

    if events.is_empty() {
        return Err(CtaError::EmptyTrace);
    }
    let total_tokens = events.iter().map(|e| e.tokens).sum();
    Ok(EventStream {
        condition,
        events,
        total_tokens,
        skipped_records: skipped,
        unknown_tools,
    })
}

/// Pull target and input text out of a tool record according to its type.
fn extract_payload(
    record: &Value,
    event_type: EventType,
    config: &AuditConfig,
) -> Result<(Option<String>, Option<String>)> {
    const PATH_KEYS: &[&str] = &[
        "file_path",
        "path",
        "target",
        "file",
        "filename",
        "notebook_path",
        "directory",
    ];
    let input = get_any(record, &["input", "tool_input", "args", "arguments"]);

    let mut target: Option<String> = None;
    let mut text: Option<String> = None;

    match input {
        Some(Value::Object(_)) => {
            let obj = input.unwrap();
            if let Some(p) = get_str(obj, PATH_KEYS) {
                target = Some(normalize_path(p, &config.workspace_prefix)?);
            }
            text = match event_type {
                EventType::Write => {
                    get_str(obj, &["content", "new_string", "new_str", "body", "text"])
                        .map(str::to_string)
                }
                EventType::Execute => {
                    get_str(obj, &["command", "cmd", "script"]).map(str::to_string)
                }
                EventType::Search => {
                    get_str(obj, &["pattern", "query", "q"]).map(str::to_string)
                }
                EventType::Read | EventType::Think => None,
            };
        }
        Some(Value::String(s)) => match event_type {
            EventType::Read | EventType::Write => {
                target = Some(normalize_path(s, &config.workspace_prefix)?);
            }
            _ => text = Some(s.clone()),
        },
        _ => {}
    }

    // some harnesses flatten the payload onto the record itself
    if target.is_none() {
        if let Some(p) = get_str(record, PATH_KEYS) {
            target = Some(normalize_path(p, &config.workspace_prefix)?);
        }
    }
    if text.is_none() {
        text = match event_type {
            EventType::Write => get_str(record, &["content", "new_string"]).map(str::to_string),
            EventType::Execute => get_str(record, &["command"]).map(str::to_string),
            EventType::Search => get_str(record, &["pattern", "query"]).map(str::to_string),
            _ => None,
        };
    }
    Ok((target, text))
}
