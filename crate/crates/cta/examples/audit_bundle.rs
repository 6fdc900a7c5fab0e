//! Full audit of one bundle: parse, segment, align, detect, and print the
//! audit object as JSON.
//!
//! ```bash
//! cargo run -p cta --example audit_bundle [-- path/to/bundle]
//! ```

use std::path::PathBuf;

use cta::bundle::load_bundle;
use cta::config::AuditConfig;
use cta::report::audit_task;

fn main() -> cta::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus/prompt-suite")
    });
    let config = AuditConfig::default();
    let bundle = load_bundle(&dir, &config)?;
    let audit = audit_task(&bundle, &config)?;

    eprintln!(
        "task={} dP={:+.1}pp bucket={:?} div={} sip={}",
        audit.task_id,
        audit.delta_p,
        audit.bucket,
        audit.divergences.len(),
        audit.sip_fires.len()
    );
    println!("{}", serde_json::to_string_pretty(&audit).expect("audit serializes"));
    Ok(())
}
