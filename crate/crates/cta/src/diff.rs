//! Row-aligned trace diffs: collapse tool events to canonical signatures,
//! align the two signature sequences by longest matching blocks, classify
//! rows, and elide shared runs to fit a row cap.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::config::AuditConfig;
use crate::error::{CtaError, Result};
use crate::trace::{canonical_signature, EventStream, EventType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    /// Same signature on both sides.
    Shared,
    /// Present only in the with-skill trace.
    WithOnly,
    /// Present only in the without-skill trace.
    WithoutOnly,
    /// Paired rows with different signatures (equal-length replace region).
    Changed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DiffItem {
    Row {
        kind: RowKind,
        without: Option<String>,
        with: Option<String>,
    },
    /// A contiguous block of shared steps elided to fit the cap.
    Omitted { count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDiff {
    pub items: Vec<DiffItem>,
    /// Content rows before elision.
    pub total_rows: usize,
}

/// A maximal matching block: a-run start, b-run start, length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Block {
    a: usize,
    b: usize,
    len: usize,
}

/// Longest matching block in a[alo..ahi] x b[blo..bhi]; among maximal
/// blocks the one starting earliest in a, then earliest in b.
fn find_longest_match(
    a: &[String],
    b: &[String],
    alo: usize,
    ahi: usize,
    blo: usize,
    bhi: usize,
) -> Block {
    let mut b2j: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (j, v) in b.iter().enumerate().take(bhi).skip(blo) {
        b2j.entry(v.as_str()).or_default().push(j);
    }
    let mut best = Block {
        a: alo,
        b: blo,
        len: 0,
    };
    // j2len[j] = length of the longest run ending at a[i], b[j]
    let mut j2len: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, av) in a.iter().enumerate().take(ahi).skip(alo) {
        let mut new_j2len: BTreeMap<usize, usize> = BTreeMap::new();
        if let Some(js) = b2j.get(av.as_str()) {
            for &j in js {
                let k = if j == 0 {
                    1
                } else {
                    j2len.get(&(j - 1)).copied().unwrap_or(0) + 1
                };
                new_j2len.insert(j, k);
                if k > best.len {
                    best = Block {
                        a: i + 1 - k,
                        b: j + 1 - k,
                        len: k,
                    };
                }
            }
        }
        j2len = new_j2len;
    }
    best
}

/// All matching blocks, in order, via recursive longest-block splitting.
fn matching_blocks(a: &[String], b: &[String]) -> Vec<Block> {
    let mut queue = vec![(0usize, a.len(), 0usize, b.len())];
    let mut blocks = Vec::new();
    while let Some((alo, ahi, blo, bhi)) = queue.pop() {
        if alo >= ahi || blo >= bhi {
            continue;
        }
        let block = find_longest_match(a, b, alo, ahi, blo, bhi);
        if block.len == 0 {
            continue;
        }
        blocks.push(block);
        queue.push((alo, block.a, blo, block.b));
        queue.push((block.a + block.len, ahi, block.b + block.len, bhi));
    }
    blocks.sort_by_key(|bl| (bl.a, bl.b));
    blocks
}

/// Tool-event signatures of a stream (reasoning events are not rows).
fn signatures(stream: &EventStream, config: &AuditConfig) -> Vec<String> {
    stream
        .events
        .iter()
        .filter(|e| e.event_type != EventType::Think)
        .map(|e| canonical_signature(e, config).expect("tool event"))
        .collect()
}

/// Compute the classified row list with no cap applied.
pub fn compute_diff(
    with_stream: &EventStream,
    without_stream: &EventStream,
    config: &AuditConfig,
) -> Result<TraceDiff> {
    if with_stream.is_empty() || without_stream.is_empty() {
        return Err(CtaError::EmptyStream);
    }
    // column convention: a = without-skill, b = with-skill
    let a = signatures(without_stream, config);
    let b = signatures(with_stream, config);

    let mut items = Vec::new();
    let (mut ai, mut bi) = (0usize, 0usize);
    let mut blocks = matching_blocks(&a, &b);
    blocks.push(Block {
        a: a.len(),
        b: b.len(),
        len: 0,
    });

    for block in blocks {
        let (da, db) = (block.a - ai, block.b - bi);
        if da > 0 && da == db {
            // equal-length replace region: paired rows, different targets
            for k in 0..da {
                items.push(DiffItem::Row {
                    kind: RowKind::Changed,
                    without: Some(a[ai + k].clone()),
                    with: Some(b[bi + k].clone()),
                });
            }
        } else {
            for k in 0..da {
                items.push(DiffItem::Row {
                    kind: RowKind::WithoutOnly,
                    without: Some(a[ai + k].clone()),
                    with: None,
                });
            }
            for k in 0..db {
                items.push(DiffItem::Row {
                    kind: RowKind::WithOnly,
                    without: None,
                    with: Some(b[bi + k].clone()),
                });
            }
        }
        for k in 0..block.len {
            items.push(DiffItem::Row {
                kind: RowKind::Shared,
                without: Some(a[block.a + k].clone()),
                with: Some(b[block.b + k].clone()),
            });
        }
        ai = block.a + block.len;
        bi = block.b + block.len;
    }

    let total_rows = items.len();
    Ok(TraceDiff { items, total_rows })
}

fn content_rows(items: &[DiffItem]) -> usize {
    items
        .iter()
        .filter(|i| matches!(i, DiffItem::Row { .. }))
        .count()
}

/// Elide shared runs (longest first, earliest on ties) down to `max_rows`
/// content rows. Non-shared rows are only truncated once no shared row
/// remains elidable.
pub fn cap_diff(diff: &TraceDiff, max_rows: usize) -> TraceDiff {
    let mut items = diff.items.clone();
    while content_rows(&items) > max_rows {
        // longest run of consecutive shared rows
        let mut best: Option<(usize, usize)> = None; // (start, len)
        let mut run_start = None;
        for (idx, item) in items.iter().enumerate() {
            let is_shared = matches!(
                item,
                DiffItem::Row {
                    kind: RowKind::Shared,
                    ..
                }
            );
            match (is_shared, run_start) {
                (true, None) => run_start = Some(idx),
                (false, Some(start)) => {
                    let len = idx - start;
                    if best.is_none_or(|(_, bl)| len > bl) {
                        best = Some((start, len));
                    }
                    run_start = None;
                }
                _ => {}
            }
        }
        if let Some(start) = run_start {
            let len = items.len() - start;
            if best.is_none_or(|(_, bl)| len > bl) {
                best = Some((start, len));
            }
        }
        match best {
            Some((start, len)) => {
                items.splice(start..start + len, [DiffItem::Omitted { count: len }]);
            }
            None => {
                // nothing shared left: truncate the tail
                let mut kept = 0usize;
                let mut cut = items.len();
                for (idx, item) in items.iter().enumerate() {
                    if matches!(item, DiffItem::Row { .. }) {
                        kept += 1;
                        if kept > max_rows {
                            cut = idx;
                            break;
                        }
                    }
                }
                let dropped = content_rows(&items[cut..]);
                items.truncate(cut);
                items.push(DiffItem::Omitted { count: dropped });
                break;
            }
        }
    }
    TraceDiff {
        items,
        total_rows: diff.total_rows,
    }
}

/// Render the capped two-column diff as plain text with row markers:
/// ' ' shared, '~' paired-different, '-' without-only, '+' with-only.
pub fn render_diff(
    with_stream: &EventStream,
    without_stream: &EventStream,
    config: &AuditConfig,
    max_rows: usize,
) -> Result<String> {
    let diff = cap_diff(&compute_diff(with_stream, without_stream, config)?, max_rows);

    let cell = |s: &Option<String>| s.clone().unwrap_or_else(|| "--".to_string());
    let width_without = diff
        .items
        .iter()
        .filter_map(|i| match i {
            DiffItem::Row { without, .. } => Some(cell(without).chars().count()),
            _ => None,
        })
        .max()
        .unwrap_or(0)
        .max("without-skill".len());

    let mut out = String::new();
    out.push_str(&format!(
        "  #   {:<width$}   with-skill\n",
        "without-skill",
        width = width_without
    ));
    out.push_str(&format!(
        "----  {:-<width$}   ----------\n",
        "",
        width = width_without
    ));
    let mut row_no = 0usize;
    for item in &diff.items {
        match item {
            DiffItem::Row {
                kind,
                without,
                with,
            } => {
                row_no += 1;
                let marker = match kind {
                    RowKind::Shared => ' ',
                    RowKind::Changed => '~',
                    RowKind::WithoutOnly => '-',
                    RowKind::WithOnly => '+',
                };
                out.push_str(&format!(
                    "{row_no:>3}{marker}  {:<width$}   {}\n",
                    cell(without),
                    cell(with),
                    width = width_without
                ));
            }
            DiffItem::Omitted { count } => {
                out.push_str(&format!("      … {count} shared steps omitted\n"));
            }
        }
    }
    Ok(out)
}
