//! Command-line surface: configure and execute runs over a prompt corpus,
//! persist artifacts, and analyze or export them.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime/backend failure,
//! 3 partial success (some prompts failed or ran out of budget; artifacts
//! for the rest are valid).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use memetron::config::RunConfig;
use memetron::run::{
    analyze_run, execute_run, export_run, load_prompts, AnalyzeOptions, ExportFormat,
    RunOptions,
};
use memetron::stats::Sidedness;
use memetron::Error;

#[derive(Parser)]
#[command(
    name = "memetron",
    version,
    about = "Reward-guided metaheuristic search over black-box text-generator outputs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the configured algorithm over a prompt corpus
    Run {
        /// Run configuration (JSON)
        #[arg(long)]
        config: PathBuf,
        /// Prompt corpus: JSONL of {"id": str, "text": str}
        #[arg(long)]
        prompts: PathBuf,
        /// Worker threads over prompts
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Re-enter an existing run directory, skipping completed prompts
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Compare generations of a persisted run; writes report.csv and summary.json
    Analyze {
        run_dir: PathBuf,
        /// Generation pair to compare, as "a:b" (repeatable).
        /// Default: final generation vs each earlier one.
        #[arg(long = "compare", value_parser = parse_pair)]
        compare: Vec<(u32, u32)>,
        /// Benjamini-Hochberg false discovery rate level
        #[arg(long, default_value_t = 0.05)]
        fdr: f64,
        /// Use one-sided tests (alternative: the later generation is better)
        #[arg(long)]
        one_sided: bool,
    },
    /// Flatten run histories into a single file for downstream use
    Export {
        run_dir: PathBuf,
        #[arg(long, value_enum)]
        format: FormatArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

fn parse_pair(text: &str) -> Result<(u32, u32), String> {
    let (a, b) = text
        .split_once(':')
        .ok_or_else(|| format!("expected \"a:b\", got {text:?}"))?;
    Ok((
        a.trim().parse().map_err(|e| format!("bad generation {a:?}: {e}"))?,
        b.trim().parse().map_err(|e| format!("bad generation {b:?}: {e}"))?,
    ))
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

/// Validation-class errors are the user's input problem; everything else is a
/// runtime or backend failure.
fn classify(error: &Error) -> u8 {
    match error {
        Error::InvalidParam { .. }
        | Error::InvalidPValue(_)
        | Error::MissingGeneration { .. }
        | Error::SizeOutOfRange { .. }
        | Error::InsufficientData(_)
        | Error::Json(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn fail(error: &Error, code: u8) -> ExitCode {
    eprintln!("error: {error}");
    ExitCode::from(code)
}

fn cmd_run(
    config_path: &Path,
    prompts_path: &Path,
    workers: usize,
    resume: Option<PathBuf>,
) -> ExitCode {
    let config_text = match std::fs::read_to_string(config_path) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config_path.display());
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let config = match RunConfig::from_json(&config_text) {
        Ok(config) => config,
        Err(e) => return fail(&e, EXIT_VALIDATION),
    };
    let prompts = match load_prompts(prompts_path) {
        Ok(prompts) => prompts,
        Err(e) => return fail(&e, EXIT_VALIDATION),
    };
    let options = RunOptions { workers, resume };
    let report = match execute_run(&config, &prompts, &options) {
        Ok(report) => report,
        Err(e) => {
            let code = classify(&e);
            return fail(&e, code);
        }
    };

    let totals = &report.manifest.totals;
    println!("run directory: {}", report.run_dir.display());
    println!(
        "prompts: {} completed, {} failed; model calls: {}, reward evals: {}, candidates: {}",
        totals.completed, totals.failed, totals.model_calls, totals.reward_evals,
        totals.candidates
    );
    for summary in &report.manifest.prompts {
        if let Some(reward) = summary.best_reward {
            println!(
                "  {}: best reward {} (candidate {}) after {} calls",
                summary.prompt_id,
                reward,
                summary.best_id.map(|id| id.to_string()).unwrap_or_default(),
                summary.used_model_calls
            );
        } else {
            println!(
                "  {}: FAILED ({})",
                summary.prompt_id,
                summary.error.as_deref().unwrap_or("unknown error")
            );
        }
    }

    if report.all_failed() {
        ExitCode::from(EXIT_RUNTIME)
    } else if report.any_failed() || report.any_budget_exhausted() {
        println!("note: partial run (failed prompts or exhausted budgets); artifacts are valid");
        ExitCode::from(EXIT_PARTIAL)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_analyze(run_dir: &Path, compare: Vec<(u32, u32)>, fdr: f64, one_sided: bool) -> ExitCode {
    let options = AnalyzeOptions {
        comparisons: compare,
        fdr_q: fdr,
        sidedness: if one_sided {
            Sidedness::OneSidedGreater
        } else {
            Sidedness::TwoSided
        },
    };
    let report = match analyze_run(run_dir, &options) {
        Ok(report) => report,
        Err(e) => {
            let code = classify(&e);
            return fail(&e, code);
        }
    };
    for summary in &report.summaries {
        println!(
            "gen {} vs {}: mean diff {:.4} +/- {:.4} | welch/mw {}/{} | sig raw/fdr {}/{} | d {:.3} (pooled {:.3}) | delta {:.3} (pooled {:.3})",
            summary.gen_a,
            summary.gen_b,
            summary.mean_diff_mean,
            summary.mean_diff_sd,
            summary.welch_count,
            summary.mann_whitney_count,
            summary.significant_raw,
            summary.significant_fdr,
            summary.cohens_d_question_mean,
            summary.cohens_d_pooled,
            summary.cliffs_delta_question_mean,
            summary.cliffs_delta_pooled,
        );
    }
    println!("report: {}", report.report_path.display());
    println!("summary: {}", report.summary_path.display());
    ExitCode::SUCCESS
}

fn cmd_export(run_dir: &Path, format: FormatArg) -> ExitCode {
    let format = match format {
        FormatArg::Csv => ExportFormat::Csv,
        FormatArg::Jsonl => ExportFormat::Jsonl,
    };
    match export_run(run_dir, format) {
        Ok(path) => {
            println!("exported: {}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = classify(&e);
            fail(&e, code)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            prompts,
            workers,
            resume,
        } => cmd_run(&config, &prompts, workers, resume),
        Command::Analyze {
            run_dir,
            compare,
            fdr,
            one_sided,
        } => cmd_analyze(&run_dir, compare, fdr, one_sided),
        Command::Export { run_dir, format } => cmd_export(&run_dir, format),
    }
}
