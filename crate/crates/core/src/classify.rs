//! Turning raw evaluator output into tier predictions.
//!
//! Three input shapes are handled: label log-probabilities (softmax over the
//! four tier labels, argmax with the fixed tie order), free-text completions
//! (strict whole-string matching after cleanup), and repeated samples of one
//! pitch (per-pitch correct fraction plus a strict-plurality majority).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{majority_vote, Vote};
use crate::tiers::{PerTier, Tier};

/// Tolerance on the sum of a distribution.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("no tier label log-probabilities supplied")]
    EmptyLogprobs,
    #[error("log-probability for {tier} is not a finite number or -inf: {value}")]
    InvalidLogprob { tier: Tier, value: f64 },
    #[error("probability for {tier} is outside [0, 1]: {value}")]
    ProbabilityOutOfRange { tier: Tier, value: f64 },
    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("no runs supplied")]
    NoRuns,
}

/// Label log-probabilities as returned by an endpoint; absent tiers count as -inf.
pub type LabelLogprobs = BTreeMap<Tier, f64>;

/// Probability vector over the four tiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<Tier, f64>", into = "BTreeMap<Tier, f64>")]
pub struct LabelDistribution {
    probs: PerTier<f64>,
}

impl LabelDistribution {
    pub fn new(probs: PerTier<f64>) -> Result<Self, ClassifyError> {
        for (i, &p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(ClassifyError::ProbabilityOutOfRange {
                    tier: Tier::from_index(i),
                    value: p,
                });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(ClassifyError::NotNormalized(sum));
        }
        Ok(Self { probs })
    }

    pub fn uniform() -> Self {
        Self { probs: [0.25; 4] }
    }

    pub fn one_hot(tier: Tier) -> Self {
        let mut probs = [0.0; 4];
        probs[tier.index()] = 1.0;
        Self { probs }
    }

    /// Scale nonnegative weights to sum to one.
    pub fn from_weights(weights: PerTier<f64>) -> Result<Self, ClassifyError> {
        let sum: f64 = weights.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(ClassifyError::NotNormalized(sum));
        }
        Self::new(weights.map(|w| w / sum))
    }

    pub fn probs(&self) -> &PerTier<f64> {
        &self.probs
    }

    pub fn get(&self, tier: Tier) -> f64 {
        self.probs[tier.index()]
    }

    /// Most probable tier; exact ties go to the earliest tier in code order.
    /// The flag reports whether such a tie occurred.
    pub fn argmax(&self) -> (Tier, bool) {
        let mut best = 0;
        for i in 1..4 {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        let ties = self.probs.iter().filter(|&&p| p == self.probs[best]).count();
        (Tier::from_index(best), ties > 1)
    }

    pub fn max_probability(&self) -> f64 {
        self.probs[self.argmax().0.index()]
    }
}

impl TryFrom<BTreeMap<Tier, f64>> for LabelDistribution {
    type Error = ClassifyError;

    fn try_from(map: BTreeMap<Tier, f64>) -> Result<Self, Self::Error> {
        let mut probs = [0.0; 4];
        for (t, p) in map {
            probs[t.index()] = p;
        }
        Self::new(probs)
    }
}

impl From<LabelDistribution> for BTreeMap<Tier, f64> {
    fn from(d: LabelDistribution) -> Self {
        Tier::ALL.iter().map(|&t| (t, d.get(t))).collect()
    }
}

/// One evaluator's call on one pitch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub pitch_id: String,
    pub label: Tier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<LabelDistribution>,
    pub confidence: f64,
    pub tie_broken: bool,
}

impl Prediction {
    pub fn from_distribution(pitch_id: impl Into<String>, distribution: LabelDistribution) -> Self {
        let (label, tie_broken) = distribution.argmax();
        Self {
            pitch_id: pitch_id.into(),
            label,
            confidence: distribution.max_probability(),
            distribution: Some(distribution),
            tie_broken,
        }
    }
}

/// Softmax over the supplied tier log-probabilities, then argmax.
pub fn classify_logprob(
    pitch_id: &str,
    label_logprobs: &LabelLogprobs,
) -> Result<Prediction, ClassifyError> {
    Ok(Prediction::from_distribution(pitch_id, softmax_labels(label_logprobs)?))
}

/// Softmax restricted to the four tiers; a missing tier gets probability zero.
pub fn softmax_labels(label_logprobs: &LabelLogprobs) -> Result<LabelDistribution, ClassifyError> {
    let mut logits = [f64::NEG_INFINITY; 4];
    for (&tier, &lp) in label_logprobs {
        if lp.is_nan() || lp == f64::INFINITY {
            return Err(ClassifyError::InvalidLogprob { tier, value: lp });
        }
        logits[tier.index()] = lp;
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(ClassifyError::EmptyLogprobs);
    }
    let weights = logits.map(|l| if l == f64::NEG_INFINITY { 0.0 } else { (l - max).exp() });
    LabelDistribution::from_weights(weights)
}

/// Outcome of parsing one free-text completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParsedLabel {
    Resolved(Tier),
    Unresolved,
}

impl ParsedLabel {
    pub fn tier(self) -> Option<Tier> {
        match self {
            ParsedLabel::Resolved(t) => Some(t),
            ParsedLabel::Unresolved => None,
        }
    }
}

/// Strip whitespace, punctuation and markdown symbols, lowercase, and require
/// the remainder to be exactly one tier name.
pub fn parse_label_text(raw: &str) -> ParsedLabel {
    let cleaned: String = raw
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect();
    Tier::ALL
        .iter()
        .find(|t| t.name() == cleaned)
        .map_or(ParsedLabel::Unresolved, |&t| ParsedLabel::Resolved(t))
}

/// Summary of repeated samples on one pitch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub pitch_id: String,
    pub n_runs: usize,
    pub n_correct: usize,
    pub majority: Option<Tier>,
    pub tied: bool,
}

impl RunAggregate {
    pub fn fraction_correct(&self) -> f64 {
        self.n_correct as f64 / self.n_runs as f64
    }
}

/// Unresolved runs stay in the denominator but never vote. A pitch whose runs
/// are all unresolved has no majority and is reported as tied.
pub fn aggregate_runs(
    pitch_id: &str,
    parsed_runs: &[Option<Tier>],
    truth: Tier,
) -> Result<RunAggregate, ClassifyError> {
    if parsed_runs.is_empty() {
        return Err(ClassifyError::NoRuns);
    }
    let n_correct = parsed_runs.iter().filter(|r| **r == Some(truth)).count();
    let resolved: Vec<Tier> = parsed_runs.iter().flatten().copied().collect();
    let majority = if resolved.is_empty() {
        None
    } else {
        match majority_vote(&resolved) {
            Vote::Winner(t) => Some(t),
            Vote::Tie => None,
        }
    };
    Ok(RunAggregate {
        pitch_id: pitch_id.to_string(),
        n_runs: parsed_runs.len(),
        n_correct,
        tied: majority.is_none(),
        majority,
    })
}

/// Mean over pitches of the per-pitch fraction of correct runs.
pub fn pitch_mean_accuracy(aggregates: &[RunAggregate]) -> f64 {
    if aggregates.is_empty() {
        return 0.0;
    }
    aggregates.iter().map(RunAggregate::fraction_correct).sum::<f64>() / aggregates.len() as f64
}

/// Correct runs over all runs, pooled across pitches.
pub fn run_pooled_accuracy(aggregates: &[RunAggregate]) -> f64 {
    let runs: usize = aggregates.iter().map(|a| a.n_runs).sum();
    let correct: usize = aggregates.iter().map(|a| a.n_correct).sum();
    if runs == 0 {
        0.0
    } else {
        correct as f64 / runs as f64
    }
}

/// Majority-vote accuracy over non-tied pitches, with the effective N.
pub fn majority_accuracy(
    aggregates: &[RunAggregate],
    truths: &BTreeMap<String, Tier>,
) -> (Option<f64>, usize) {
    let mut n = 0;
    let mut correct = 0;
    for agg in aggregates {
        if let (Some(m), Some(&t)) = (agg.majority, truths.get(&agg.pitch_id)) {
            n += 1;
            correct += usize::from(m == t);
        }
    }
    ((n > 0).then(|| correct as f64 / n as f64), n)
}
