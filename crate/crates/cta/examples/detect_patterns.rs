//! Run the five Skill Influence Pattern detectors on every divergence of a
//! bundle and print each fire with its evidence.
//!
//! ```bash
//! cargo run -p cta --example detect_patterns [-- path/to/bundle]
//! ```

use std::path::PathBuf;

use cta::bundle::load_bundle;
use cta::config::AuditConfig;
use cta::report::audit_task;

fn main() -> cta::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus/shellcheck-hardening")
    });
    let config = AuditConfig::default();
    let bundle = load_bundle(&dir, &config)?;
    let audit = audit_task(&bundle, &config)?;

    println!(
        "{}: {} divergence(s), {} fire(s) at theta {}",
        audit.task_id,
        audit.divergences.len(),
        audit.sip_fires.len(),
        config.theta
    );
    for fire in &audit.sip_fires {
        println!(
            "\n{} on divergence {} (score {:.2}):",
            fire.sip_class, fire.divergence_id, fire.score
        );
        for line in &fire.evidence {
            println!("  - {line}");
        }
    }
    if audit.sip_fires.is_empty() {
        println!("no detector fired; the divergences carry no pattern signature");
    }
    Ok(())
}
