//! Segment both traces of a bundle into goal-directed phases.
//!
//! ```bash
//! cargo run -p cta --example segment_phases [-- path/to/bundle]
//! ```

use std::path::PathBuf;

use cta::bundle::load_bundle;
use cta::config::AuditConfig;
use cta::phase::{segment, PhaseSequence};
use cta::trace::{parse_trace, Condition};

fn describe(label: &str, seq: &PhaseSequence) {
    println!("{label}:");
    for span in &seq.spans {
        println!(
            "  {:<15} events {}..={}{}",
            span.phase_type.to_string(),
            span.start_index,
            span.end_index,
            if span.via_fallback { "  (fallback)" } else { "" }
        );
    }
}

fn main() -> cta::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus/csv-edge-cases")
    });
    let config = AuditConfig::default();
    let bundle = load_bundle(&dir, &config)?;

    let with = parse_trace(&bundle.trace_with, Condition::WithSkill, &config)?;
    let without = parse_trace(&bundle.trace_without, Condition::WithoutSkill, &config)?;

    describe("with-skill", &segment(&with, &config)?);
    describe("without-skill", &segment(&without, &config)?);
    Ok(())
}
