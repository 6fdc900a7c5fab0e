//! Print the row-aligned tool-invocation diff for one bundle: shared rows
//! blank, '+' with-only, '-' without-only, '~' paired with a different
//! target. Long shared runs are elided to the row cap.
//!
//! ```bash
//! cargo run -p cta --example render_diff [-- path/to/bundle [max_rows]]
//! ```

use std::path::PathBuf;

use cta::bundle::load_bundle;
use cta::config::AuditConfig;
use cta::diff::render_diff;
use cta::trace::{parse_trace, Condition};

fn main() -> cta::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus/shellcheck-hardening")
    });
    let config = AuditConfig::default();
    let max_rows = args
        .next()
        .and_then(|s| s.parse().ok())
        .unwrap_or(config.max_diff_rows);

    let bundle = load_bundle(&dir, &config)?;
    let with = parse_trace(&bundle.trace_with, Condition::WithSkill, &config)?;
    let without = parse_trace(&bundle.trace_without, Condition::WithoutSkill, &config)?;

    print!("{}", render_diff(&with, &without, &config, max_rows)?);
    Ok(())
}
