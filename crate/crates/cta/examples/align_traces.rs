//! Align the two traces of a bundle and print every divergence record:
//! the phase warping path, then type, phase, targets, and features.
//!
//! ```bash
//! cargo run -p cta --example align_traces [-- path/to/bundle]
//! ```

use std::path::PathBuf;

use cta::align::align_bundle;
use cta::bundle::load_bundle;
use cta::config::AuditConfig;
use cta::phase::segment;
use cta::trace::{parse_trace, Condition};

fn main() -> cta::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus/shellcheck-hardening")
    });
    let config = AuditConfig::default();
    let bundle = load_bundle(&dir, &config)?;

    let with = parse_trace(&bundle.trace_with, Condition::WithSkill, &config)?;
    let without = parse_trace(&bundle.trace_without, Condition::WithoutSkill, &config)?;
    let with_phases = segment(&with, &config)?;
    let without_phases = segment(&without, &config)?;

    let outcome = align_bundle(
        &bundle.task_id,
        &with,
        &without,
        &with_phases,
        &without_phases,
        &config,
    )?;

    println!(
        "phase warping path (cost {}):",
        outcome.phase_alignment.total_cost
    );
    for (i, j) in &outcome.phase_alignment.pairs {
        println!(
            "  with {:<15} <-> without {}",
            with_phases.spans[*i].phase_type.to_string(),
            without_phases.spans[*j].phase_type
        );
    }

    println!("\n{} divergence record(s):", outcome.divergences.len());
    for div in &outcome.divergences {
        println!(
            "  [{}] {:?} in {} targets={:?} cosine={:?}",
            div.id, div.div_type, div.phase_type, div.affected_targets, div.intent_cosine
        );
        for (key, value) in &div.features {
            println!("      {key} = {value}");
        }
    }
    Ok(())
}
