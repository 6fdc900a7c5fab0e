//! Render every corpus report section (stratified table, SIP composition,
//! largest-|dP| tasks, phase distribution) from fresh audits.
//!
//! ```bash
//! cargo run -p cta --example corpus_report [-- path/to/corpus [text|csv|md]]
//! ```

use std::path::PathBuf;

use cta::bundle::load_bundle;
use cta::config::AuditConfig;
use cta::report::{
    audit_task, render_phase_distribution, render_sip_table, render_table, render_top_delta,
    stratify, Format,
};

fn main() -> cta::Result<()> {
    let mut args = std::env::args().skip(1);
    let corpus = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus")
    });
    let format: Format = args.next().as_deref().unwrap_or("text").parse()?;
    let config = AuditConfig::default();

    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&corpus)
        .map_err(|e| cta::CtaError::io(&corpus, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join("trace_with.jsonl").is_file())
        .collect();
    dirs.sort();

    let mut audits = Vec::new();
    for dir in &dirs {
        audits.push(audit_task(&load_bundle(dir, &config)?, &config)?);
    }
    let stats = stratify(&audits)?;

    println!("== Stratified by baseline pass rate ==");
    print!("{}", render_table(&stats, format));
    println!("\n== Mean SIP fires per task by class ==");
    print!("{}", render_sip_table(&stats, format));
    println!("\n== Largest |dP| tasks ==");
    print!("{}", render_top_delta(&audits, format, 6));
    println!("\n== Divergence share by phase ==");
    print!("{}", render_phase_distribution(&stats.phase_distribution, format));
    Ok(())
}
