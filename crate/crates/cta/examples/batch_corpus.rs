//! Audit every bundle in a corpus directory and print the stratified
//! corpus table. Outputs land in a temporary directory.
//!
//! ```bash
//! cargo run -p cta --example batch_corpus [-- path/to/corpus]
//! ```

use std::path::PathBuf;

use cta::bundle::load_bundle;
use cta::config::AuditConfig;
use cta::report::{audit_task, render_table, stratify, Format};

fn main() -> cta::Result<()> {
    let corpus = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus")
    });
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
        let bundle = load_bundle(dir, &config)?;
        let audit = audit_task(&bundle, &config)?;
        println!(
            "audited {:<22} dP={:+.1}pp div={} sip={}",
            audit.task_id,
            audit.delta_p,
            audit.divergences.len(),
            audit.sip_fires.len()
        );
        audits.push(audit);
    }

    let stats = stratify(&audits)?;
    println!();
    print!("{}", render_table(&stats, Format::Text));
    Ok(())
}
