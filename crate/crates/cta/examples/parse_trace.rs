//! Parse a raw trace into the normalized typed event stream.
//!
//! ```bash
//! cargo run -p cta --example parse_trace [-- path/to/trace.jsonl]
//! ```

use std::path::PathBuf;

use cta::config::AuditConfig;
use cta::trace::{parse_trace, Condition, RawTrace};

fn main() -> cta::Result<()> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("fixtures/corpus/shellcheck-hardening/trace_with.jsonl")
    });
    let config = AuditConfig::default();

    let text = std::fs::read_to_string(&path).map_err(|e| cta::CtaError::io(&path, e))?;
    let raw = RawTrace::from_str(&text, &path.display().to_string())?;
    let stream = parse_trace(&raw, Condition::WithSkill, &config)?;

    println!("# events: {}", stream.len());
    println!("# total tokens: {}", stream.total_tokens);
    println!(
        "# skipped records: {}, unknown tools: {}",
        stream.skipped_records, stream.unknown_tools
    );
    println!("# normalized events, one JSON object per line:");
    print!("{}", stream.export_jsonl());
    Ok(())
}
