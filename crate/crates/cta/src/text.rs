//! Text machinery shared by intent alignment and the SIP detectors:
//! tokenization, TF-IDF vectors, and literal token n-gram matching.
//!
//! All containers are ordered (`BTreeMap`) so that floating-point folds
//! happen in a fixed order and results are bit-stable across runs.

use std::collections::{BTreeMap, BTreeSet};

/// Split text into sentences on '.', '?', '!', and newlines.
pub fn split_sentences(text: &str) -> Vec<&str> {
    text.split(['.', '?', '!', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Lowercase tokens split on non-alphanumeric boundaries.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Whitespace-delimited tokens with runs of whitespace collapsed; case and
/// punctuation are preserved. This is the unit for literal n-gram matching.
pub fn whitespace_tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// TF-IDF model fitted over a fixed document set.
///
/// Uses smoothed inverse document frequency, `ln((1 + n) / (1 + df)) + 1`,
/// so a term occurring in every document still carries weight and two
/// identical documents keep cosine 1.
#[derive(Debug, Clone)]
pub struct TfIdf {
    doc_count: usize,
    doc_freq: BTreeMap<String, usize>,
}

impl TfIdf {
    pub fn fit<S: AsRef<str>>(documents: &[S]) -> Self {
        let mut doc_freq: BTreeMap<String, usize> = BTreeMap::new();
        for doc in documents {
            let terms: BTreeSet<String> = tokenize(doc.as_ref()).into_iter().collect();
            for term in terms {
                *doc_freq.entry(term).or_insert(0) += 1;
            }
        }
        TfIdf {
            doc_count: documents.len(),
            doc_freq,
        }
    }

    fn idf(&self, term: &str) -> f64 {
        let df = *self.doc_freq.get(term).unwrap_or(&0) as f64;
        (((1 + self.doc_count) as f64) / (1.0 + df)).ln() + 1.0
    }

    /// Weighted term vector for one text.
    pub fn vector(&self, text: &str) -> BTreeMap<String, f64> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for token in tokenize(text) {
            *counts.entry(token).or_insert(0) += 1;
        }
        counts
            .into_iter()
            .map(|(term, count)| {
                let idf = self.idf(&term);
                (term, count as f64 * idf)
            })
            .collect()
    }

    /// Cosine similarity of two texts under this model, in [0, 1].
    /// Any comparison against empty text is 0.
    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        cosine(&self.vector(a), &self.vector(b))
    }
}

/// Cosine of two sparse vectors; 0 when either has zero norm.
pub fn cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    for (term, wa) in a {
        norm_a += wa * wa;
        if let Some(wb) = b.get(term) {
            dot += wa * wb;
        }
    }
    let norm_b: f64 = b.values().map(|w| w * w).sum();
    if norm_a == 0.0 || norm_b == 0.0 {
        0.0
    } else {
        // clamp: rounding can nudge identical vectors past 1.0
        (dot / (norm_a.sqrt() * norm_b.sqrt())).clamp(0.0, 1.0)
    }
}

/// Similarity between two texts with the model fitted on exactly that pair.
pub fn pair_similarity(a: &str, b: &str) -> f64 {
    TfIdf::fit(&[a, b]).similarity(a, b)
}

/// A literal n-gram shared between a source document and a probe text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramMatch {
    /// Number of tokens in the match.
    pub len: usize,
    /// Matched tokens joined by single spaces.
    pub text: String,
}

/// Index of every token n-gram (for n in `min..=max`) of a source document,
/// keyed for fast containment probes against other texts.
#[derive(Debug, Clone)]
pub struct NgramIndex {
    min: usize,
    max: usize,
    grams: BTreeSet<Vec<String>>,
}

impl NgramIndex {
    pub fn build(source: &str, min: usize, max: usize) -> Self {
        let tokens: Vec<String> = whitespace_tokens(source)
            .into_iter()
            .map(str::to_string)
            .collect();
        let mut grams = BTreeSet::new();
        for n in min..=max {
            if tokens.len() < n {
                break;
            }
            for window in tokens.windows(n) {
                grams.insert(window.to_vec());
            }
        }
        NgramIndex { min, max, grams }
    }

    /// Longest source n-gram occurring literally (as a contiguous token run)
    /// in `text`, if any n-gram of length >= min occurs.
    pub fn longest_match(&self, text: &str) -> Option<NgramMatch> {
        let tokens: Vec<String> = whitespace_tokens(text)
            .into_iter()
            .map(str::to_string)
            .collect();
        for n in (self.min..=self.max).rev() {
            if tokens.len() < n {
                continue;
            }
            for window in tokens.windows(n) {
                if self.grams.contains(window) {
                    return Some(NgramMatch {
                        len: n,
                        text: window.join(" "),
                    });
                }
            }
        }
        None
    }

    /// Every matching n-gram in `text` across all indexed lengths, longest
    /// first, deduplicated, in scan order within a length.
    pub fn matches(&self, text: &str) -> Vec<NgramMatch> {
        let tokens: Vec<String> = whitespace_tokens(text)
            .into_iter()
            .map(str::to_string)
            .collect();
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for n in (self.min..=self.max).rev() {
            if tokens.len() < n {
                continue;
            }
            for window in tokens.windows(n) {
                if self.grams.contains(window) && seen.insert(window.to_vec()) {
                    out.push(NgramMatch {
                        len: n,
                        text: window.join(" "),
                    });
                }
            }
        }
        out
    }
}

/// True when `needle_tokens` occurs as a contiguous run inside `text`'s
/// whitespace tokens.
pub fn contains_token_run(text: &str, needle: &str) -> bool {
    let hay = whitespace_tokens(text);
    let needle = whitespace_tokens(needle);
    if needle.is_empty() || hay.len() < needle.len() {
        return false;
    }
    hay.windows(needle.len()).any(|w| w == needle.as_slice())
}

/// Count guard-token occurrences in written content. Single-word guards
/// match whole tokens; guards containing whitespace or punctuation match as
/// substrings anchored at a non-word left boundary.
pub fn count_guard_tokens(content: &str, guards: &[String]) -> usize {
    let tokens = tokenize(content);
    let mut count = 0;
    for guard in guards {
        let is_word = guard.chars().all(char::is_alphanumeric);
        if is_word {
            let g = guard.to_lowercase();
            count += tokens.iter().filter(|t| **t == g).count();
        } else {
            let mut rest = content;
            let mut offset = 0usize;
            while let Some(pos) = rest.find(guard.as_str()) {
                let abs = offset + pos;
                let left_ok = abs == 0
                    || !content[..abs]
                        .chars()
                        .next_back()
                        .is_some_and(char::is_alphanumeric);
                if left_ok {
                    count += 1;
                }
                rest = &rest[pos + guard.len()..];
                offset = abs + guard.len();
            }
        }
    }
    count
}

/// Line-level normalized edit distance in [0, 1]: Levenshtein over
/// whitespace-trimmed lines divided by the longer line count.
pub fn normalized_line_distance(a: &str, b: &str) -> f64 {
    let la: Vec<&str> = a.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let lb: Vec<&str> = b.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let (n, m) = (la.len(), lb.len());
    if n == 0 && m == 0 {
        return 0.0;
    }
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0usize; m + 1];
    for i in 1..=n {
        cur[0] = i;
        for j in 1..=m {
            let cost = usize::from(la[i - 1] != lb[j - 1]);
            cur[j] = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m] as f64 / n.max(m) as f64
}

/// Number of whitespace-trimmed lines present in `b` but not `a` plus lines
/// present in `a` but not `b` (multiset difference size).
pub fn changed_line_count(a: &str, b: &str) -> usize {
    let mut counts: BTreeMap<&str, i64> = BTreeMap::new();
    for line in a.lines().map(str::trim).filter(|l| !l.is_empty()) {
        *counts.entry(line).or_insert(0) += 1;
    }
    for line in b.lines().map(str::trim).filter(|l| !l.is_empty()) {
        *counts.entry(line).or_insert(0) -= 1;
    }
    counts.values().map(|c| c.unsigned_abs() as usize).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_texts_have_unit_similarity() {
        let s = pair_similarity("fix the parser bug", "fix the parser bug");
        assert!((s - 1.0).abs() < 1e-9, "got {s}");
    }

    #[test]
    fn disjoint_vocabularies_have_zero_similarity() {
        assert_eq!(pair_similarity("alpha beta gamma", "delta epsilon"), 0.0);
    }

    #[test]
    fn empty_text_has_zero_similarity_with_anything() {
        assert_eq!(pair_similarity("", "anything at all"), 0.0);
        assert_eq!(pair_similarity("", ""), 0.0);
    }

    #[test]
    fn sentences_split_on_terminators_and_newlines() {
        let s = split_sentences("First. Second? Third!\nFourth");
        assert_eq!(s, vec!["First", "Second", "Third", "Fourth"]);
    }

    #[test]
    fn ngram_index_finds_planted_literal() {
        let idx = NgramIndex::build("enable strict mode:  set -Eeuo pipefail early", 3, 8);
        let m = idx
            .longest_match("#!/bin/bash\nset -Eeuo pipefail\necho hi")
            .expect("match");
        assert!(m.len >= 3);
        assert!(m.text.contains("set -Eeuo pipefail"));
    }

    #[test]
    fn ngram_index_ignores_short_overlap() {
        let idx = NgramIndex::build("set -Eeuo pipefail", 3, 8);
        assert!(idx.longest_match("use set -x here").is_none());
    }

    #[test]
    fn whitespace_runs_collapse_for_matching() {
        let idx = NgramIndex::build("a   b\t c d", 3, 8);
        assert!(idx.longest_match("x a b c y").is_some());
    }

    #[test]
    fn line_distance_identical_is_zero() {
        assert_eq!(normalized_line_distance("a\nb\n", "a\nb\n"), 0.0);
    }

    #[test]
    fn line_distance_ignores_surrounding_whitespace() {
        assert_eq!(normalized_line_distance("  a\nb  ", "a\n  b"), 0.0);
    }

    #[test]
    fn line_distance_counts_replacements() {
        let d = normalized_line_distance("a\nb\nc\nd\ne\nf\ng\nh\ni\nj", "a\nb\nc\nd\ne\nf\ng\nh\ni\nX");
        assert!((d - 0.1).abs() < 1e-9);
    }

    #[test]
    fn changed_lines_is_symmetric_difference() {
        assert_eq!(changed_line_count("a\nb", "a\nc"), 2);
        assert_eq!(changed_line_count("a", "a"), 0);
    }

    #[test]
    fn guard_counting_matches_words_and_prefixes() {
        let guards: Vec<String> = ["if", "try", "assert", "trap", "set -"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let script = "#!/bin/bash\nset -Eeuo pipefail\ntrap cleanup EXIT\nif [ -z \"$1\" ]; then exit 1; fi\n";
        assert_eq!(count_guard_tokens(script, &guards), 3);
        // "if" inside a word and "set -" inside a word do not count
        assert_eq!(count_guard_tokens("verification subset -x", &guards), 0);
        assert_eq!(count_guard_tokens("try: pass\nexcept:", &guards), 1);
    }
}
