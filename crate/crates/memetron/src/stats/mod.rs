//! Statistical comparison pipeline over persisted run histories: normality
//! gating, two-sample tests, effect sizes, and multiple-testing correction.

pub mod dist;
pub mod shapiro;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use shapiro::shapiro_wilk;

/// Shapiro–Wilk gate level: both samples must look normal at this level for
/// Welch's t-test to be used.
pub const NORMALITY_GATE_P: f64 = 0.05;

/// Reported effect size when the pooled variance is exactly zero but the
/// means differ (two distinct constant samples). Keeps the direction and the
/// dominance ordering while staying finite and serializable.
pub const DEGENERATE_EFFECT_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    #[default]
    TwoSided,
    /// Alternative: the second sample is stochastically greater.
    OneSidedGreater,
}

/// Welch's t-test: statistic, Welch–Satterthwaite degrees of freedom, p-value.
pub fn welch_t(a: &[f64], b: &[f64], sidedness: Sidedness) -> Result<(f64, f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData(
            "welch t-test needs at least 2 values per sample".into(),
        ));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_variance(a, ma), sample_variance(b, mb));
    if va == 0.0 && vb == 0.0 {
        return Err(Error::InsufficientData(
            "welch t-test needs nonzero variance in at least one sample".into(),
        ));
    }
    let sa = va / na;
    let sb = vb / nb;
    let se = (sa + sb).sqrt();
    let t = (ma - mb) / se;
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p = match sidedness {
        Sidedness::TwoSided => 2.0 * (1.0 - dist::student_t_cdf(t.abs(), df)),
        Sidedness::OneSidedGreater => dist::student_t_cdf(t, df),
    };
    Ok((t, df, p.clamp(0.0, 1.0)))
}

/// Midranks of each value within the combined pool (average ranks on ties).
fn midranks(combined: &[f64]) -> Vec<f64> {
    let n = combined.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| combined[i].partial_cmp(&combined[j]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && combined[order[j + 1]] == combined[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Number of rank arrangements of samples sized (m, n) with U statistic
/// exactly u, by the classic recurrence
/// `N(u; m, n) = N(u - n; m - 1, n) + N(u; m, n - 1)`.
fn exact_u_counts(m: usize, n: usize) -> Vec<f64> {
    let capacity = m * n + 1;
    // counts[i][u] for the current column j, rolled over j.
    let mut counts = vec![vec![0.0f64; capacity]; m + 1];
    counts[0][0] = 1.0; // N(0; 0, 0) = 1
    for j in 0..=n {
        if j > 0 {
            // Move from column j-1 to j: N(u; i, j) = N(u - j; i - 1, j) + N(u; i, j - 1).
            for i in 1..=m {
                for u in (0..capacity).rev() {
                    let from_prev_i = if u >= j { counts[i - 1][u - j] } else { 0.0 };
                    counts[i][u] += from_prev_i;
                }
            }
        } else {
            // Column 0: only u = 0 reachable for any i.
            for row in counts.iter_mut().skip(1) {
                row[0] = 1.0;
            }
        }
    }
    counts.pop().unwrap()
}

/// Mann–Whitney U test with midrank tie handling.
///
/// Returns (U of the first sample, p). The p-value is exact by enumeration
/// when `|a| + |b| <= 20` and the pooled values are tie-free, otherwise a
/// normal approximation with tie and continuity corrections.
pub fn mann_whitney_u(a: &[f64], b: &[f64], sidedness: Sidedness) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData(
            "mann-whitney needs non-empty samples".into(),
        ));
    }
    let (m, n) = (a.len(), b.len());
    let combined: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    if combined.iter().any(|v| !v.is_finite()) {
        return Err(Error::InsufficientData("sample contains non-finite values".into()));
    }
    let ranks = midranks(&combined);
    let rank_sum_a: f64 = ranks[..m].iter().sum();
    let u_a = rank_sum_a - (m * (m + 1)) as f64 / 2.0;

    // Tie structure of the pooled sample.
    let mut sorted = combined.clone();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut tie_term = 0.0;
    let mut has_ties = false;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        if t > 1.0 {
            has_ties = true;
            tie_term += t * t * t - t;
        }
        i = j + 1;
    }

    let p = if m + n <= 20 && !has_ties {
        let counts = exact_u_counts(m, n);
        let total: f64 = counts.iter().sum();
        let cdf_at = |u: f64| -> f64 {
            counts
                .iter()
                .enumerate()
                .take_while(|(k, _)| (*k as f64) <= u)
                .map(|(_, c)| c)
                .sum::<f64>()
                / total
        };
        match sidedness {
            Sidedness::TwoSided => {
                let u_b = (m * n) as f64 - u_a;
                (2.0 * cdf_at(u_a.min(u_b))).min(1.0)
            }
            Sidedness::OneSidedGreater => cdf_at(u_a),
        }
    } else {
        let nm = (m * n) as f64;
        let big_n = (m + n) as f64;
        let variance =
            nm / 12.0 * ((big_n + 1.0) - tie_term / (big_n * (big_n - 1.0)));
        if variance <= 0.0 {
            1.0
        } else {
            let sigma = variance.sqrt();
            let centered = u_a - nm / 2.0;
            // Continuity correction of one half toward the mean.
            let corrected = centered - 0.5 * centered.signum();
            let corrected = if centered == 0.0 { 0.0 } else { corrected };
            let z = corrected / sigma;
            match sidedness {
                Sidedness::TwoSided => (2.0 * (1.0 - dist::normal_cdf(z.abs()))).min(1.0),
                Sidedness::OneSidedGreater => dist::normal_cdf((u_a - nm / 2.0 + 0.5) / sigma),
            }
        }
    };
    Ok((u_a, p))
}

/// Cohen's d with (n-1)-weighted pooled standard deviation:
/// `(mean(a) - mean(b)) / s_pooled`.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData(
            "cohen's d needs at least 2 values per sample".into(),
        ));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_variance(a, ma), sample_variance(b, mb));
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
    if pooled <= 0.0 {
        return Err(Error::ZeroPooledVariance);
    }
    Ok((ma - mb) / pooled.sqrt())
}

/// Cliff's delta by full pairwise enumeration:
/// `(#{a_i > b_j} - #{a_i < b_j}) / (|a| * |b|)`.
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData(
            "cliff's delta needs non-empty samples".into(),
        ));
    }
    let mut dominance = 0i64;
    for x in a {
        for y in b {
            dominance += match x.partial_cmp(y).unwrap() {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => -1,
                std::cmp::Ordering::Equal => 0,
            };
        }
    }
    Ok(dominance as f64 / (a.len() * b.len()) as f64)
}

/// Benjamini–Hochberg step-up procedure. Returns adjusted p-values (cumulative
/// minimum of `(m/k) * p_(k)` from the largest rank down) and the rejection
/// mask at level `q`.
pub fn bh_fdr(p_values: &[f64], q: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    if !(0.0..1.0).contains(&q) || q <= 0.0 {
        return Err(Error::invalid("fdr.q", format!("must be in (0, 1), got {q}")));
    }
    for &p in p_values {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidPValue(p));
        }
    }
    let m = p_values.len();
    if m == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].partial_cmp(&p_values[j]).unwrap());

    let mut adjusted_sorted = vec![0.0; m];
    let mut running_min = 1.0f64;
    for k in (0..m).rev() {
        let scaled = p_values[order[k]] * m as f64 / (k + 1) as f64;
        running_min = running_min.min(scaled);
        adjusted_sorted[k] = running_min;
    }
    let mut adjusted = vec![0.0; m];
    for (k, &original) in order.iter().enumerate() {
        adjusted[original] = adjusted_sorted[k];
    }
    let reject = adjusted.iter().map(|&p| p <= q).collect();
    Ok((adjusted, reject))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_variance(values: &[f64], mean: f64) -> f64 {
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    sample_variance(values, mean(values)).sqrt()
}

/// Scored responses of one generation of one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSample {
    pub question_id: String,
    pub generation: u32,
    pub scores: Vec<f64>,
}

impl GenerationSample {
    pub fn validate(&self) -> Result<()> {
        if self.scores.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "question {} generation {} has {} scores, need at least 3",
                self.question_id,
                self.generation,
                self.scores.len()
            )));
        }
        for &s in &self.scores {
            if !s.is_finite() {
                return Err(Error::NonFiniteReward { value: s });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestUsed {
    Welch,
    MannWhitney,
}

/// One per-question comparison row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub question_id: String,
    pub gen_a: u32,
    pub gen_b: u32,
    pub test_used: TestUsed,
    pub statistic: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    /// mean(gen_b scores) - mean(gen_a scores): positive favours the later
    /// generation.
    pub mean_diff: f64,
    /// cohens_d(a, b): negative when the later generation scores higher.
    pub cohens_d: f64,
    pub cliffs_delta: f64,
    pub significant_raw: bool,
    pub significant_fdr: bool,
}

/// Aggregates over one generation pair, in the evaluation table's shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub gen_a: u32,
    pub gen_b: u32,
    pub questions: usize,
    pub mean_diff_mean: f64,
    pub mean_diff_sd: f64,
    pub welch_count: usize,
    pub mann_whitney_count: usize,
    pub significant_raw: usize,
    pub significant_fdr: usize,
    /// Mean of the per-question effect sizes.
    pub cohens_d_question_mean: f64,
    pub cliffs_delta_question_mean: f64,
    /// Effect sizes pooled over all scores of all questions.
    pub cohens_d_pooled: f64,
    pub cliffs_delta_pooled: f64,
}

/// Compare two generations across questions: a Shapiro–Wilk gate selects
/// Welch's t-test when both samples look normal (p > 0.05 each), otherwise
/// Mann–Whitney; per-question p-values are then FDR-corrected jointly.
///
/// Degenerate (all-equal) samples fail the normality gate and use the
/// nonparametric path.
pub fn compare_generation_samples(
    pairs: &[(GenerationSample, GenerationSample)],
    fdr_q: f64,
    sidedness: Sidedness,
) -> Result<(Vec<ComparisonResult>, ComparisonSummary)> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no questions to compare".into()));
    }
    let (gen_a, gen_b) = (pairs[0].0.generation, pairs[0].1.generation);

    let mut rows = Vec::with_capacity(pairs.len());
    let mut p_raw_values = Vec::with_capacity(pairs.len());
    let mut pooled_a = Vec::new();
    let mut pooled_b = Vec::new();
    for (sample_a, sample_b) in pairs {
        sample_a.validate()?;
        sample_b.validate()?;
        let a = &sample_a.scores;
        let b = &sample_b.scores;

        let normal = |scores: &[f64]| match shapiro_wilk(scores) {
            Ok((_, p)) => Ok(p > NORMALITY_GATE_P),
            Err(Error::DegenerateSample) => Ok(false),
            Err(Error::SizeOutOfRange { .. }) => Ok(false),
            Err(e) => Err(e),
        };
        let use_welch = normal(a)? && normal(b)?;
        let (test_used, statistic, p_raw) = if use_welch {
            let (t, _, p) = welch_t(a, b, sidedness)?;
            (TestUsed::Welch, t, p)
        } else {
            let (u, p) = mann_whitney_u(a, b, sidedness)?;
            (TestUsed::MannWhitney, u, p)
        };

        let mean_diff = mean(b) - mean(a);
        let d = match cohens_d(a, b) {
            Ok(d) => d,
            Err(Error::ZeroPooledVariance) => {
                if mean_diff == 0.0 {
                    0.0
                } else {
                    -DEGENERATE_EFFECT_CAP * mean_diff.signum()
                }
            }
            Err(e) => return Err(e),
        };
        let delta = cliffs_delta(a, b)?;

        pooled_a.extend_from_slice(a);
        pooled_b.extend_from_slice(b);
        p_raw_values.push(p_raw);
        rows.push(ComparisonResult {
            question_id: sample_a.question_id.clone(),
            gen_a: sample_a.generation,
            gen_b: sample_b.generation,
            test_used,
            statistic,
            p_raw,
            p_adjusted: f64::NAN,
            mean_diff,
            cohens_d: d,
            cliffs_delta: delta,
            significant_raw: p_raw < 0.05,
            significant_fdr: false,
        });
    }

    let (adjusted, reject) = bh_fdr(&p_raw_values, fdr_q)?;
    for ((row, p_adj), rejected) in rows.iter_mut().zip(adjusted).zip(reject) {
        row.p_adjusted = p_adj;
        row.significant_fdr = rejected;
    }

    let diffs: Vec<f64> = rows.iter().map(|r| r.mean_diff).collect();
    let pooled_d = match cohens_d(&pooled_a, &pooled_b) {
        Ok(d) => d,
        Err(Error::ZeroPooledVariance) => 0.0,
        Err(e) => return Err(e),
    };
    let summary = ComparisonSummary {
        gen_a,
        gen_b,
        questions: rows.len(),
        mean_diff_mean: mean(&diffs),
        mean_diff_sd: sample_sd(&diffs),
        welch_count: rows.iter().filter(|r| r.test_used == TestUsed::Welch).count(),
        mann_whitney_count: rows
            .iter()
            .filter(|r| r.test_used == TestUsed::MannWhitney)
            .count(),
        significant_raw: rows.iter().filter(|r| r.significant_raw).count(),
        significant_fdr: rows.iter().filter(|r| r.significant_fdr).count(),
        cohens_d_question_mean: mean(&rows.iter().map(|r| r.cohens_d).collect::<Vec<_>>()),
        cliffs_delta_question_mean: mean(
            &rows.iter().map(|r| r.cliffs_delta).collect::<Vec<_>>(),
        ),
        cohens_d_pooled: pooled_d,
        cliffs_delta_pooled: cliffs_delta(&pooled_a, &pooled_b)?,
    };
    Ok((rows, summary))
}

/// Scores of one question's history-set candidates, grouped by generation.
#[derive(Debug, Clone)]
pub struct QuestionScores {
    pub question_id: String,
    pub by_generation: std::collections::BTreeMap<u32, Vec<f64>>,
}

/// Load per-generation scores for every completed prompt of a run.
///
/// Scalar and composite runs use the recorded rewards directly. Anchored
/// pairwise runs rerank each question's history set jointly to set-relative
/// scalar scores first, so the analysis scale differs from the anchored
/// scores used during search.
pub fn load_generation_scores(run_dir: &std::path::Path) -> Result<Vec<QuestionScores>> {
    use crate::reward::RewardMode;

    let manifest = crate::rundir::Manifest::load(run_dir)?;
    let mode = manifest.config.reward.build()?;
    let mut questions = Vec::new();
    for summary in &manifest.prompts {
        if summary.status != crate::rundir::PromptStatus::Completed {
            continue;
        }
        let history = crate::rundir::load_history(run_dir, &summary.prompt_id)?;
        let lineage: Vec<&crate::types::Candidate> = summary
            .lineage
            .iter()
            .map(|id| {
                history.get(*id).ok_or(Error::MalformedLine {
                    path: crate::rundir::history_path(run_dir, &summary.prompt_id)
                        .display()
                        .to_string(),
                    line: id.index() + 1,
                    message: format!("manifest lineage id {id} missing from history"),
                })
            })
            .collect::<Result<_>>()?;

        let scores: Vec<f64> = match &mode {
            RewardMode::Anchored { judge } => {
                let prompt = crate::types::Prompt::new(
                    summary.prompt_id.clone(),
                    summary.prompt_text.clone(),
                )?;
                let texts: Vec<&str> = lineage.iter().map(|c| c.text.as_str()).collect();
                judge.rerank(&prompt, &texts)?
            }
            _ => lineage
                .iter()
                .map(|c| c.reward.ok_or(Error::UnscoredCandidate { id: c.id }))
                .collect::<Result<_>>()?,
        };

        let mut by_generation: std::collections::BTreeMap<u32, Vec<f64>> =
            std::collections::BTreeMap::new();
        for (candidate, score) in lineage.iter().zip(scores) {
            by_generation.entry(candidate.generation).or_default().push(score);
        }
        questions.push(QuestionScores {
            question_id: summary.prompt_id.clone(),
            by_generation,
        });
    }
    if questions.is_empty() {
        return Err(Error::InsufficientData(
            "run directory holds no completed prompts".into(),
        ));
    }
    Ok(questions)
}

/// Build the per-question sample pairs for one generation comparison.
pub fn generation_pairs(
    questions: &[QuestionScores],
    gen_a: u32,
    gen_b: u32,
) -> Result<Vec<(GenerationSample, GenerationSample)>> {
    questions
        .iter()
        .map(|question| {
            let fetch = |generation: u32| -> Result<GenerationSample> {
                let scores = question.by_generation.get(&generation).ok_or_else(|| {
                    Error::MissingGeneration {
                        question: question.question_id.clone(),
                        generation,
                    }
                })?;
                Ok(GenerationSample {
                    question_id: question.question_id.clone(),
                    generation,
                    scores: scores.clone(),
                })
            };
            Ok((fetch(gen_a)?, fetch(gen_b)?))
        })
        .collect()
}

/// Full per-question comparison of two generations of a persisted run.
pub fn compare_generations(
    run_dir: &std::path::Path,
    gen_a: u32,
    gen_b: u32,
    fdr_q: f64,
    sidedness: Sidedness,
) -> Result<(Vec<ComparisonResult>, ComparisonSummary)> {
    let questions = load_generation_scores(run_dir)?;
    let pairs = generation_pairs(&questions, gen_a, gen_b)?;
    compare_generation_samples(&pairs, fdr_q, sidedness)
}
