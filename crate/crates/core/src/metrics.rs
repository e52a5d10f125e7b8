//! Confusion matrices and the classification metrics derived from them.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{self, CiMethod, ConfidenceInterval, StatsError};
use crate::tiers::{self, round_half_away, PerTier, Tier, TierError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{preds} predictions for {truths} truths")]
    LengthMismatch { preds: usize, truths: usize },
    #[error("no items to score")]
    Empty,
    #[error("predicted counts are all zero")]
    EmptyCounts,
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Tier(#[from] TierError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Rows are true tiers, columns predicted tiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 4]; 4],
    pub n: u64,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; 4]; 4]) -> Self {
        let n = counts.iter().flatten().sum();
        Self { counts, n }
    }

    pub fn get(&self, truth: Tier, predicted: Tier) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn trace(&self) -> u64 {
        (0..4).map(|i| self.counts[i][i]).sum()
    }

    pub fn predicted_counts(&self) -> PerTier<u64> {
        std::array::from_fn(|j| self.counts.iter().map(|row| row[j]).sum())
    }

    pub fn truth_counts(&self) -> PerTier<u64> {
        self.counts.map(|row| row.iter().sum())
    }

    /// Each row divided by its total; empty rows stay all zero.
    pub fn row_normalized(&self) -> [[f64; 4]; 4] {
        self.counts.map(|row| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                [0.0; 4]
            } else {
                row.map(|c| c as f64 / total as f64)
            }
        })
    }
}

pub fn confusion(preds: &[Tier], truths: &[Tier]) -> Result<ConfusionMatrix, MetricsError> {
    if preds.len() != truths.len() {
        return Err(MetricsError::LengthMismatch { preds: preds.len(), truths: truths.len() });
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut counts = [[0u64; 4]; 4];
    for (p, t) in preds.iter().zip(truths) {
        counts[t.index()][p.index()] += 1;
    }
    Ok(ConfusionMatrix::from_counts(counts))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_tier: BTreeMap<Tier, TierScores>,
    pub predicted_counts: BTreeMap<Tier, u64>,
    pub above_chance_pp: f64,
    pub headroom: f64,
    pub ci: Option<ConfidenceInterval>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-tier precision, recall and F1 with 0/0 counted as 0.
pub fn tier_scores(cm: &ConfusionMatrix) -> PerTier<TierScores> {
    let pred = cm.predicted_counts();
    let truth = cm.truth_counts();
    std::array::from_fn(|i| {
        let tp = cm.counts[i][i];
        let precision = ratio(tp, pred[i]);
        let recall = ratio(tp, truth[i]);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        TierScores { precision, recall, f1 }
    })
}

pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    tier_scores(cm).iter().map(|s| s.f1).sum::<f64>() / 4.0
}

pub fn summarize(cm: &ConfusionMatrix, chance: f64) -> Result<MetricsReport, MetricsError> {
    if cm.n == 0 {
        return Err(MetricsError::Empty);
    }
    let accuracy = cm.trace() as f64 / cm.n as f64;
    let scores = tier_scores(cm);
    let pred = cm.predicted_counts();
    Ok(MetricsReport {
        n: cm.n,
        accuracy,
        macro_f1: scores.iter().map(|s| s.f1).sum::<f64>() / 4.0,
        per_tier: Tier::ALL.iter().map(|&t| (t, scores[t.index()])).collect(),
        predicted_counts: Tier::ALL.iter().map(|&t| (t, pred[t.index()])).collect(),
        above_chance_pp: (accuracy - chance) * 100.0,
        headroom: tiers::headroom(accuracy, chance)?,
        ci: None,
    })
}

/// Interval settings for [`accuracy_ci`]; `draws` and `seed` only matter for the bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiSpec {
    pub method: CiMethod,
    pub level: f64,
    pub draws: usize,
    pub seed: u64,
}

impl Default for CiSpec {
    fn default() -> Self {
        Self { method: CiMethod::Wilson, level: 0.95, draws: 10_000, seed: 0 }
    }
}

fn paired(preds: &[Tier], truths: &[Tier]) -> Result<(), MetricsError> {
    if preds.len() != truths.len() {
        return Err(MetricsError::LengthMismatch { preds: preds.len(), truths: truths.len() });
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

pub fn accuracy_ci(preds: &[Tier], truths: &[Tier], spec: &CiSpec) -> Result<ConfidenceInterval, MetricsError> {
    paired(preds, truths)?;
    let correct = preds.iter().zip(truths).filter(|(p, t)| p == t).count() as u64;
    if spec.method != CiMethod::Bootstrap {
        return Ok(stats::proportion_ci(correct, preds.len() as u64, spec.level, spec.method)?);
    }
    let flags: Vec<f64> = preds.iter().zip(truths).map(|(p, t)| f64::from(u8::from(p == t))).collect();
    let (low, high) = stats::bootstrap_ci(&flags, |s| s.iter().sum::<f64>() / s.len() as f64, spec.draws, spec.level, spec.seed)?;
    Ok(ConfidenceInterval { low, high, method: CiMethod::Bootstrap, level: spec.level })
}

/// Percentile bootstrap interval for macro-F1 over resampled items.
pub fn macro_f1_ci(preds: &[Tier], truths: &[Tier], draws: usize, level: f64, seed: u64) -> Result<ConfidenceInterval, MetricsError> {
    paired(preds, truths)?;
    let pairs: Vec<(Tier, Tier)> = preds.iter().copied().zip(truths.iter().copied()).collect();
    let (low, high) = stats::bootstrap_ci(
        &pairs,
        |s| {
            let (p, t): (Vec<Tier>, Vec<Tier>) = s.iter().copied().unzip();
            confusion(&p, &t).map(|cm| macro_f1(&cm)).unwrap_or(0.0)
        },
        draws,
        level,
        seed,
    )?;
    Ok(ConfidenceInterval { low, high, method: CiMethod::Bootstrap, level })
}

/// Confusion, summary and accuracy interval in one call.
pub fn evaluate(preds: &[Tier], truths: &[Tier], chance: f64, ci: Option<&CiSpec>) -> Result<MetricsReport, MetricsError> {
    let cm = confusion(preds, truths)?;
    let mut report = summarize(&cm, chance)?;
    if let Some(spec) = ci {
        report.ci = Some(accuracy_ci(preds, truths, spec)?);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ErrorProfile {
    pub exact: u64,
    pub off_by_1: u64,
    pub off_by_2plus: u64,
    /// Predicted a worse tier than the truth.
    pub under: u64,
    /// Predicted a better tier than the truth.
    pub over: u64,
}

pub fn error_profile(preds: &[Tier], truths: &[Tier]) -> Result<ErrorProfile, MetricsError> {
    if preds.len() != truths.len() {
        return Err(MetricsError::LengthMismatch { preds: preds.len(), truths: truths.len() });
    }
    let mut e = ErrorProfile::default();
    for (p, t) in preds.iter().zip(truths) {
        match p.ordinal_distance(*t) {
            0 => e.exact += 1,
            1 => e.off_by_1 += 1,
            _ => e.off_by_2plus += 1,
        }
        if p.code() > t.code() {
            e.under += 1;
        } else if p.code() < t.code() {
            e.over += 1;
        }
    }
    Ok(e)
}

/// Shannon entropy of the predicted-label distribution over `ln 4`.
pub fn prediction_entropy(predicted_counts: &PerTier<u64>) -> Result<f64, MetricsError> {
    let total: u64 = predicted_counts.iter().sum();
    if total == 0 {
        return Err(MetricsError::EmptyCounts);
    }
    let h: f64 = predicted_counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    Ok(h / 4f64.ln())
}

pub const CSV_HEADER: [&str; 17] = [
    "Model",
    "Model Key",
    "N",
    "Accuracy (%)",
    "Macro F1",
    "95% CI Lower (%)",
    "95% CI Upper (%)",
    "Above Chance (pp)",
    "Headroom Skill (%)",
    "Acc exceptional (%)",
    "Acc strong (%)",
    "Acc fair (%)",
    "Acc limited (%)",
    "Pred exceptional (n)",
    "Pred strong (n)",
    "Pred fair (n)",
    "Pred limited (n)",
];

/// One results-table row; percentages to one decimal, macro-F1 to three.
pub fn csv_row(model: &str, model_key: &str, report: &MetricsReport) -> Vec<String> {
    let pct = |x: f64| format!("{:.1}", round_half_away(x * 100.0, 1));
    let (lo, hi) = report
        .ci
        .map_or((String::new(), String::new()), |ci| (pct(ci.low), pct(ci.high)));
    let mut row = vec![
        model.to_string(),
        model_key.to_string(),
        report.n.to_string(),
        pct(report.accuracy),
        format!("{:.3}", round_half_away(report.macro_f1, 3)),
        lo,
        hi,
        format!("{:.1}", round_half_away(report.above_chance_pp, 1)),
        pct(report.headroom),
    ];
    row.extend(Tier::ALL.iter().map(|t| pct(report.per_tier[t].recall)));
    row.extend(Tier::ALL.iter().map(|t| report.predicted_counts[t].to_string()));
    row
}

pub fn write_csv<W: Write>(out: W, rows: &[(String, String, MetricsReport)]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for (model, key, report) in rows {
        w.write_record(csv_row(model, key, report))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
