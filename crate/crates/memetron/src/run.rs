//! Corpus runner: execute the configured algorithm over a prompt file with a
//! worker pool, persist artifacts, and drive analysis and export.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::annetron::run_annetron;
use crate::config::{Algorithm, RunConfig};
use crate::error::{Error, Result};
use crate::genetron::{run_best_of_n, run_genetron};
use crate::memetron::{run_memetron, MemetronConfig};
use crate::rng::{child_seed, fnv1a64, StreamTag};
use crate::rundir::{self, Manifest, PromptStatus, PromptSummary};
use crate::search::{SearchContext, SearchOutcome, StopReason};
use crate::stats::{
    compare_generation_samples, generation_pairs, load_generation_scores, ComparisonResult,
    ComparisonSummary, Sidedness,
};
use crate::types::{CandidateId, Origin, Prompt};

/// Prompt corpus: JSONL of `{"id": str, "text": str}` records.
pub fn load_prompts(path: &Path) -> Result<Vec<Prompt>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::invalid("prompts", format!("{}: {e}", path.display())))?;
    let mut prompts: Vec<Prompt> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let prompt: Prompt = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            path: path.display().to_string(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        prompt.validate().map_err(|e| Error::MalformedLine {
            path: path.display().to_string(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(prompt.id.clone()) {
            return Err(Error::MalformedLine {
                path: path.display().to_string(),
                line: lineno + 1,
                message: format!("duplicate prompt id {:?}", prompt.id),
            });
        }
        prompts.push(prompt);
    }
    if prompts.is_empty() {
        return Err(Error::invalid("prompts", "file contains no prompts"));
    }
    Ok(prompts)
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    /// Re-enter an existing run directory, skipping completed prompts.
    pub resume: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            workers: 1,
            resume: None,
        }
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub run_dir: PathBuf,
    pub manifest: Manifest,
}

impl RunReport {
    pub fn any_failed(&self) -> bool {
        self.manifest.totals.failed > 0
    }

    pub fn all_failed(&self) -> bool {
        self.manifest.totals.failed == self.manifest.totals.prompts
    }

    pub fn any_budget_exhausted(&self) -> bool {
        self.manifest
            .prompts
            .iter()
            .any(|p| p.stopped_by == Some(StopReason::BudgetExhausted))
    }
}

/// Execute one prompt with its own budget, scorer cache, and seed stream.
fn run_prompt(config: &RunConfig, prompt: &Prompt) -> Result<(SearchOutcome, u64, u64)> {
    let budget = Arc::new(config.budget.build());
    let mut ctx = SearchContext::new(
        prompt.clone(),
        config.build_backend()?,
        config.reward.build()?,
        budget.clone(),
        config.sampling.clone(),
        config.render_options(),
        child_seed(config.seed(), StreamTag::Prompt, fnv1a64(&prompt.id)),
    );
    ctx.fusion_template = config.fusion_template()?;
    ctx.refine_template = config.refine_template()?;

    let outcome = match config.algorithm {
        Algorithm::Genetron => run_genetron(&ctx, &config.genetron)?,
        Algorithm::Annetron => run_annetron(&ctx, &config.annetron)?,
        Algorithm::Memetron => run_memetron(
            &ctx,
            &MemetronConfig {
                genetron: config.genetron.clone(),
                annetron: config.annetron.clone(),
            },
        )?,
        Algorithm::BestOfNBaseline => run_best_of_n(&ctx, config.genetron.population_size)?,
    };
    Ok((
        outcome,
        budget.used_model_calls(),
        budget.used_reward_evals(),
    ))
}

/// Run the corpus. Prompts are processed by `workers` threads; results are
/// assembled in input order, so the artifacts are identical for any worker
/// count. A failing prompt is recorded and the run continues.
pub fn execute_run(
    config: &RunConfig,
    prompts: &[Prompt],
    options: &RunOptions,
) -> Result<RunReport> {
    config.validate()?;
    if prompts.is_empty() {
        return Err(Error::invalid("prompts", "no prompts to run"));
    }
    let workers = options.workers.max(1);

    let (run_dir, previous): (PathBuf, Option<Manifest>) = match &options.resume {
        Some(dir) => {
            let manifest = Manifest::load(dir)?;
            (dir.clone(), Some(manifest))
        }
        None => {
            let dir = config.output_dir.clone();
            if dir.exists() && dir.read_dir()?.next().is_some() {
                return Err(Error::invalid(
                    "config.output_dir",
                    format!("{} already exists and is not empty", dir.display()),
                ));
            }
            std::fs::create_dir_all(&dir)?;
            (dir, None)
        }
    };

    let done: std::collections::HashSet<String> = previous
        .as_ref()
        .map(|manifest| {
            manifest
                .prompts
                .iter()
                .filter(|p| {
                    p.status == PromptStatus::Completed
                        && rundir::history_path(&run_dir, &p.prompt_id).exists()
                })
                .map(|p| p.prompt_id.clone())
                .collect()
        })
        .unwrap_or_default();

    let pending: Vec<(usize, &Prompt)> = prompts
        .iter()
        .enumerate()
        .filter(|(_, p)| !done.contains(&p.id))
        .collect();

    let results: Mutex<Vec<Option<PromptSummary>>> =
        Mutex::new(vec![None; prompts.len()]);
    let cursor = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(pending.len().max(1)) {
            scope.spawn(|| loop {
                let at = cursor.fetch_add(1, Ordering::SeqCst);
                let Some((index, prompt)) = pending.get(at) else {
                    break;
                };
                let summary = match run_prompt(config, prompt) {
                    Ok((outcome, calls, evals)) => {
                        let persisted = rundir::write_history(&run_dir, &outcome.history)
                            .and_then(|_| {
                                rundir::write_log(&run_dir, &prompt.id, &outcome.log)
                            });
                        match persisted {
                            Ok(()) => PromptSummary::completed(prompt, &outcome, calls, evals),
                            Err(e) => PromptSummary::failed(prompt, &e),
                        }
                    }
                    Err(e) => {
                        log::error!("prompt {} failed: {e}", prompt.id);
                        PromptSummary::failed(prompt, &e)
                    }
                };
                results.lock().expect("results poisoned")[*index] = Some(summary);
            });
        }
    });

    let fresh = results.into_inner().expect("results poisoned");
    let summaries: Vec<PromptSummary> = prompts
        .iter()
        .zip(fresh)
        .map(|(prompt, summary)| match summary {
            Some(summary) => summary,
            // Untouched because a previous run already completed it.
            None => previous
                .as_ref()
                .and_then(|m| m.summary_for(&prompt.id).cloned())
                .expect("skipped prompts exist in the previous manifest"),
        })
        .collect();

    let manifest = Manifest::new(config.clone(), summaries);
    manifest.save(&run_dir)?;
    Ok(RunReport { run_dir, manifest })
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    /// Generation pairs to compare; empty means final vs each earlier one.
    pub comparisons: Vec<(u32, u32)>,
    pub fdr_q: f64,
    pub sidedness: Sidedness,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            comparisons: Vec::new(),
            fdr_q: 0.05,
            sidedness: Sidedness::TwoSided,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnalyzeSummaryFile {
    pub schema_version: u32,
    pub fdr_q: f64,
    pub sidedness: Sidedness,
    pub comparisons: Vec<ComparisonSummary>,
}

#[derive(Debug)]
pub struct AnalyzeReport {
    pub report_path: PathBuf,
    pub summary_path: PathBuf,
    pub rows: Vec<ComparisonResult>,
    pub summaries: Vec<ComparisonSummary>,
}

/// Compare generations across the run and write `report.csv` (one row per
/// question and comparison) plus `summary.json` (per-comparison aggregates).
pub fn analyze_run(run_dir: &Path, options: &AnalyzeOptions) -> Result<AnalyzeReport> {
    if !(0.0..1.0).contains(&options.fdr_q) || options.fdr_q <= 0.0 {
        return Err(Error::invalid(
            "fdr_q",
            format!("must be in (0, 1), got {}", options.fdr_q),
        ));
    }
    let questions = load_generation_scores(run_dir)?;

    let comparisons = if options.comparisons.is_empty() {
        let mut generations: std::collections::BTreeSet<u32> = std::collections::BTreeSet::new();
        for question in &questions {
            generations.extend(question.by_generation.keys().copied());
        }
        let last = *generations.iter().next_back().ok_or_else(|| {
            Error::InsufficientData("run has no scored generations".into())
        })?;
        let earlier: Vec<(u32, u32)> = generations
            .iter()
            .copied()
            .filter(|g| *g < last)
            .map(|g| (g, last))
            .collect();
        if earlier.is_empty() {
            return Err(Error::InsufficientData(
                "run has a single generation; nothing to compare".into(),
            ));
        }
        earlier
    } else {
        options.comparisons.clone()
    };

    let mut all_rows = Vec::new();
    let mut summaries = Vec::new();
    for (gen_a, gen_b) in comparisons {
        let pairs = generation_pairs(&questions, gen_a, gen_b)?;
        let (rows, summary) =
            compare_generation_samples(&pairs, options.fdr_q, options.sidedness)?;
        all_rows.extend(rows);
        summaries.push(summary);
    }

    let report_path = run_dir.join("report.csv");
    let mut writer = csv::Writer::from_path(&report_path)?;
    writer.write_record([
        "question_id",
        "gen_a",
        "gen_b",
        "test_used",
        "statistic",
        "p_raw",
        "p_adjusted",
        "mean_diff",
        "cohens_d",
        "cliffs_delta",
        "significant_raw",
        "significant_fdr",
    ])?;
    for row in &all_rows {
        writer.write_record([
            row.question_id.clone(),
            row.gen_a.to_string(),
            row.gen_b.to_string(),
            match row.test_used {
                crate::stats::TestUsed::Welch => "welch".to_string(),
                crate::stats::TestUsed::MannWhitney => "mann_whitney".to_string(),
            },
            row.statistic.to_string(),
            row.p_raw.to_string(),
            row.p_adjusted.to_string(),
            row.mean_diff.to_string(),
            row.cohens_d.to_string(),
            row.cliffs_delta.to_string(),
            row.significant_raw.to_string(),
            row.significant_fdr.to_string(),
        ])?;
    }
    writer.flush()?;

    let summary_path = run_dir.join("summary.json");
    let summary_file = AnalyzeSummaryFile {
        schema_version: 1,
        fdr_q: options.fdr_q,
        sidedness: options.sidedness,
        comparisons: summaries.clone(),
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(&summary_path)?);
    serde_json::to_writer_pretty(&mut file, &summary_file)?;
    file.write_all(b"\n")?;
    file.flush()?;

    Ok(AnalyzeReport {
        report_path,
        summary_path,
        rows: all_rows,
        summaries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Jsonl,
}

/// One exported candidate row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub prompt_id: String,
    pub id: CandidateId,
    pub text: String,
    pub reward: Option<f64>,
    pub origin: Origin,
    pub generation: u32,
}

/// Flatten all histories (every recorded candidate, in manifest prompt order)
/// for downstream training-data use.
pub fn export_run(run_dir: &Path, format: ExportFormat) -> Result<PathBuf> {
    let manifest = Manifest::load(run_dir)?;
    let mut records = Vec::new();
    for summary in &manifest.prompts {
        if summary.status != PromptStatus::Completed {
            continue;
        }
        let history = rundir::load_history(run_dir, &summary.prompt_id)?;
        for candidate in history.iter() {
            records.push(ExportRecord {
                prompt_id: summary.prompt_id.clone(),
                id: candidate.id,
                text: candidate.text.clone(),
                reward: candidate.reward,
                origin: candidate.origin.clone(),
                generation: candidate.generation,
            });
        }
    }

    let path = match format {
        ExportFormat::Csv => {
            let path = run_dir.join("export.csv");
            let mut writer = csv::Writer::from_path(&path)?;
            writer.write_record(["prompt_id", "id", "text", "reward", "origin", "generation"])?;
            for record in &records {
                writer.write_record([
                    record.prompt_id.clone(),
                    record.id.to_string(),
                    record.text.clone(),
                    record.reward.map(|r| r.to_string()).unwrap_or_default(),
                    serde_json::to_string(&record.origin)?,
                    record.generation.to_string(),
                ])?;
            }
            writer.flush()?;
            path
        }
        ExportFormat::Jsonl => {
            let path = run_dir.join("export.jsonl");
            let mut writer = std::io::BufWriter::new(std::fs::File::create(&path)?);
            for record in &records {
                serde_json::to_writer(&mut writer, record)?;
                writer.write_all(b"\n")?;
            }
            writer.flush()?;
            path
        }
    };
    Ok(path)
}

/// Parse an export file back into records (CSV and JSONL are equivalent).
pub fn read_export(path: &Path, format: ExportFormat) -> Result<Vec<ExportRecord>> {
    match format {
        ExportFormat::Jsonl => {
            let file = std::fs::File::open(path)?;
            let mut records = Vec::new();
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                records.push(serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: e.to_string(),
                })?);
            }
            Ok(records)
        }
        ExportFormat::Csv => {
            let mut reader = csv::Reader::from_path(path)?;
            let mut records = Vec::new();
            for (lineno, row) in reader.records().enumerate() {
                let row = row.map_err(|e| Error::MalformedLine {
                    path: path.display().to_string(),
                    line: lineno + 2,
                    message: e.to_string(),
                })?;
                let get = |i: usize| row.get(i).unwrap_or_default().to_string();
                records.push(ExportRecord {
                    prompt_id: get(0),
                    id: CandidateId(get(1).parse().map_err(|e| Error::MalformedLine {
                        path: path.display().to_string(),
                        line: lineno + 2,
                        message: format!("bad id: {e}"),
                    })?),
                    text: get(2),
                    reward: match get(3).as_str() {
                        "" => None,
                        s => Some(s.parse().map_err(|e| Error::MalformedLine {
                            path: path.display().to_string(),
                            line: lineno + 2,
                            message: format!("bad reward: {e}"),
                        })?),
                    },
                    origin: serde_json::from_str(&get(4)).map_err(|e| Error::MalformedLine {
                        path: path.display().to_string(),
                        line: lineno + 2,
                        message: format!("bad origin: {e}"),
                    })?,
                    generation: get(5).parse().map_err(|e| Error::MalformedLine {
                        path: path.display().to_string(),
                        line: lineno + 2,
                        message: format!("bad generation: {e}"),
                    })?,
                });
            }
            Ok(records)
        }
    }
}
