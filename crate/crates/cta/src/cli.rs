//! Command-line surface: audit one bundle, batch-audit a corpus, render
//! corpus reports, and print trace diffs.
//!
//! Exit codes: 0 success, 2 malformed bundle, 3 empty trace, 4 nothing to
//! process, 1 any other failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bundle::{load_bundle_with_paths, BundlePaths};
use crate::config::AuditConfig;
use crate::diff::render_diff;
use crate::error::{CtaError, Result};
use crate::report::{
    audit_task, render_phase_distribution, render_sip_table, render_table, render_top_delta,
    stratify, Format, TaskAudit,
};
use crate::trace::{parse_trace, Condition};

#[derive(Debug, Parser)]
#[command(name = "cta", version, about = "Counterfactual trace auditing for paired agent runs")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Audit one bundle directory and write the task audit.
    Audit(AuditArgs),
    /// Audit every bundle under a corpus directory and write corpus stats.
    Batch(BatchArgs),
    /// Render corpus tables from a directory of audit files.
    Report(ReportArgs),
    /// Print the row-aligned trace diff for one bundle.
    Diff(DiffArgs),
}

/// Flags shared by the commands that run the pipeline. Precedence:
/// flags > config file > defaults.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// Config file (JSON); CTA_CONFIG is the fallback.
    #[arg(long, env = "CTA_CONFIG")]
    config: Option<PathBuf>,
    /// Intent-pair similarity threshold.
    #[arg(long)]
    delta: Option<f64>,
    /// SIP fire threshold.
    #[arg(long)]
    theta: Option<f64>,
    /// Row cap for rendered diffs.
    #[arg(long)]
    max_diff_rows: Option<usize>,
    /// Workspace prefix stripped from canonical paths.
    #[arg(long)]
    workspace_prefix: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<AuditConfig> {
        let mut config = match &self.config {
            Some(path) => AuditConfig::from_file(path)?,
            None => AuditConfig::default(),
        };
        if let Some(delta) = self.delta {
            config.delta = delta;
        }
        if let Some(theta) = self.theta {
            config.theta = theta;
        }
        if let Some(rows) = self.max_diff_rows {
            config.max_diff_rows = rows;
        }
        if let Some(prefix) = &self.workspace_prefix {
            config.workspace_prefix = prefix.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

/// Bundle member file names, overridable per invocation.
#[derive(Debug, Args)]
struct PathArgs {
    #[arg(long)]
    trace_with: Option<PathBuf>,
    #[arg(long)]
    trace_without: Option<PathBuf>,
    #[arg(long)]
    skill: Option<PathBuf>,
    #[arg(long)]
    eval_with: Option<PathBuf>,
    #[arg(long)]
    eval_without: Option<PathBuf>,
    #[arg(long)]
    task_meta: Option<PathBuf>,
}

impl PathArgs {
    fn resolve(&self) -> BundlePaths {
        let mut paths = BundlePaths::default();
        if let Some(p) = &self.trace_with {
            paths.trace_with = p.clone();
        }
        if let Some(p) = &self.trace_without {
            paths.trace_without = p.clone();
        }
        if let Some(p) = &self.skill {
            paths.skill = p.clone();
        }
        if let Some(p) = &self.eval_with {
            paths.eval_with = p.clone();
        }
        if let Some(p) = &self.eval_without {
            paths.eval_without = p.clone();
        }
        if let Some(p) = &self.task_meta {
            paths.task_meta = p.clone();
        }
        paths
    }
}

#[derive(Debug, Args)]
struct AuditArgs {
    /// Bundle directory.
    #[arg(long)]
    bundle: PathBuf,
    /// Output file for the audit object (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    paths: PathArgs,
}

#[derive(Debug, Args)]
struct BatchArgs {
    /// Corpus directory: one bundle per subdirectory.
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory for per-task audits and corpus stats.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for auditing bundles (default: rayon's choice).
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory holding *.audit.json files.
    #[arg(long)]
    audits: PathBuf,
    /// Output format: text, csv, or md.
    #[arg(long, default_value = "text")]
    format: String,
    /// Rows in the largest-|dP| table.
    #[arg(long, default_value_t = 6)]
    top: usize,
}

#[derive(Debug, Args)]
struct DiffArgs {
    /// Bundle directory.
    #[arg(long)]
    bundle: PathBuf,
    /// Override the diff row cap.
    #[arg(long)]
    max_rows: Option<usize>,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    paths: PathArgs,
}

fn exit_code(err: &CtaError) -> i32 {
    match err.root() {
        CtaError::MissingInput(_)
        | CtaError::MalformedTrace { .. }
        | CtaError::MalformedRecord(_)
        | CtaError::TaskIdMismatch(..)
        | CtaError::Json { .. }
        | CtaError::InconsistentEvalReport { .. }
        | CtaError::OutOfRange(_) => 2,
        CtaError::EmptyTrace | CtaError::EmptyStream => 3,
        CtaError::EmptyCorpus => 4,
        _ => 1,
    }
}

fn summary_line(audit: &TaskAudit) -> String {
    let ratio = audit
        .token_ratio
        .map(|r| format!("{r:.2}"))
        .unwrap_or_else(|| "n/a".into());
    format!(
        "task={} dP={:+.1}pp div={} sip={} ratio={}",
        audit.task_id,
        audit.delta_p,
        audit.divergences.len(),
        audit.sip_fires.len(),
        ratio
    )
}

fn audit_json(audit: &TaskAudit) -> String {
    let mut json = serde_json::to_string_pretty(audit).expect("audit serializes");
    json.push('\n');
    json
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CtaError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CtaError::io(path, e))
}

/// Audit one bundle; write the audit object and print a one-line summary.
pub fn cmd_audit(
    bundle_dir: &Path,
    paths: &BundlePaths,
    config: &AuditConfig,
    out: Option<&Path>,
) -> i32 {
    let run = || -> Result<TaskAudit> {
        let bundle = load_bundle_with_paths(bundle_dir, paths, config)?;
        audit_task(&bundle, config)
    };
    match run() {
        Ok(audit) => {
            let json = audit_json(&audit);
            match out {
                Some(path) => {
                    if let Err(e) = write_file(path, &json) {
                        eprintln!("error: {e}");
                        return 1;
                    }
                    println!("{}", summary_line(&audit));
                }
                None => {
                    print!("{json}");
                    eprintln!("{}", summary_line(&audit));
                }
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Bundle subdirectories of a corpus, sorted by name.
fn bundle_dirs(corpus: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(corpus).map_err(|e| CtaError::io(corpus, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.join(BundlePaths::default().trace_with).is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Audit every bundle in a corpus; failures are reported and skipped.
pub fn cmd_batch(corpus: &Path, out_dir: &Path, config: &AuditConfig, jobs: Option<usize>) -> i32 {
    let dirs = match bundle_dirs(corpus) {
        Ok(dirs) => dirs,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if dirs.is_empty() {
        eprintln!("error: no bundles found under {}", corpus.display());
        return 4;
    }

    let audit_one = |dir: &PathBuf| -> (PathBuf, Result<TaskAudit>) {
        let result = load_bundle_with_paths(dir, &BundlePaths::default(), config)
            .and_then(|bundle| audit_task(&bundle, config));
        (dir.clone(), result)
    };
    let results: Vec<(PathBuf, Result<TaskAudit>)> = match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .expect("thread pool");
            pool.install(|| {
                use rayon::prelude::*;
                dirs.par_iter().map(audit_one).collect()
            })
        }
        None => {
            use rayon::prelude::*;
            dirs.par_iter().map(audit_one).collect()
        }
    };

    let mut audits = Vec::new();
    let mut failures = Vec::new();
    for (dir, result) in results {
        match result {
            Ok(audit) => audits.push(audit),
            Err(e) => failures.push((dir, e)),
        }
    }
    audits.sort_by(|a, b| a.task_id.cmp(&b.task_id));

    for audit in &audits {
        let path = out_dir.join(format!("{}.audit.json", audit.task_id));
        if let Err(e) = write_file(&path, &audit_json(audit)) {
            eprintln!("error: {e}");
            return 1;
        }
        println!("{}", summary_line(audit));
    }

    if !audits.is_empty() {
        match stratify(&audits) {
            Ok(stats) => {
                let mut json =
                    serde_json::to_string_pretty(&stats).expect("stats serialize");
                json.push('\n');
                if let Err(e) = write_file(&out_dir.join("corpus_stats.json"), &json) {
                    eprintln!("error: {e}");
                    return 1;
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                return 1;
            }
        }
    }

    for (dir, e) in &failures {
        eprintln!("failed: {}: {e}", dir.display());
    }
    if failures.is_empty() {
        0
    } else {
        1
    }
}

/// Load every *.audit.json under a directory, sorted by file name.
fn load_audits(dir: &Path) -> Result<Vec<TaskAudit>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CtaError::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(".audit.json"))
        })
        .collect();
    files.sort();
    let mut audits = Vec::new();
    for file in files {
        let text = std::fs::read_to_string(&file).map_err(|e| CtaError::io(&file, e))?;
        let audit: TaskAudit =
            serde_json::from_str(&text).map_err(|e| CtaError::json(&file, e))?;
        audits.push(audit);
    }
    Ok(audits)
}

/// Print the four corpus report sections.
pub fn cmd_report(audits_dir: &Path, format_name: &str, top: usize) -> i32 {
    let format = match format_name.parse::<Format>() {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let audits = match load_audits(audits_dir) {
        Ok(audits) => audits,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if audits.is_empty() {
        eprintln!("error: no audits found under {}", audits_dir.display());
        return 4;
    }
    let stats = match stratify(&audits) {
        Ok(stats) => stats,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };

    println!("== Stratified by baseline pass rate ==");
    print!("{}", render_table(&stats, format));
    println!();
    println!("== Mean SIP fires per task by class ==");
    print!("{}", render_sip_table(&stats, format));
    println!();
    println!("== Largest |dP| tasks ==");
    print!("{}", render_top_delta(&audits, format, top));
    println!();
    println!("== Divergence share by phase ==");
    print!("{}", render_phase_distribution(&stats.phase_distribution, format));
    0
}

/// Print the capped, classified trace diff for one bundle.
pub fn cmd_diff(
    bundle_dir: &Path,
    paths: &BundlePaths,
    config: &AuditConfig,
    max_rows: Option<usize>,
) -> i32 {
    let run = || -> Result<String> {
        let bundle = load_bundle_with_paths(bundle_dir, paths, config)?;
        let with_stream = parse_trace(&bundle.trace_with, Condition::WithSkill, config)?;
        let without_stream = parse_trace(&bundle.trace_without, Condition::WithoutSkill, config)?;
        render_diff(
            &with_stream,
            &without_stream,
            config,
            max_rows.unwrap_or(config.max_diff_rows),
        )
    };
    match run() {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Parse arguments and dispatch; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own help/version output
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match cli.command {
        Command::Audit(args) => {
            let config = match args.config.resolve() {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return 1;
                }
            };
            cmd_audit(
                &args.bundle,
                &args.paths.resolve(),
                &config,
                args.out.as_deref(),
            )
        }
        Command::Batch(args) => {
            let config = match args.config.resolve() {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return 1;
                }
            };
            cmd_batch(&args.corpus, &args.out, &config, args.jobs)
        }
        Command::Report(args) => cmd_report(&args.audits, &args.format, args.top),
        Command::Diff(args) => {
            let config = match args.config.resolve() {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return 1;
                }
            };
            cmd_diff(
                &args.bundle,
                &args.paths.resolve(),
                &config,
                args.max_rows,
            )
        }
    }
}

/// Entry point for the binary.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}
