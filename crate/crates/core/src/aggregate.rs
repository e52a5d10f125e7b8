//! Combining judgments across models or raters.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{ClassifyError, LabelDistribution, Prediction};
use crate::tiers::Tier;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregateError {
    #[error("an ensemble needs at least two members, got {0}")]
    TooFewMembers(usize),
    #[error("{weights} weights for {members} members")]
    LengthMismatch { members: usize, weights: usize },
    #[error("ensemble weights must be nonnegative and sum to 1")]
    BadWeights,
    #[error("consensus policy {kind} is missing parameter {param}")]
    PolicyParamMissing { kind: ConsensusKind, param: &'static str },
    #[error("invalid consensus policy: {0}")]
    InvalidPolicy(String),
    #[error("pitch {0} has no labels")]
    NoLabels(String),
    #[error("pitch {0} has no ground-truth tier")]
    MissingTruth(String),
    #[error(transparent)]
    Distribution(#[from] ClassifyError),
}

/// Result of a strict-plurality vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vote {
    Winner(Tier),
    Tie,
}

fn tier_counts(labels: &[Tier]) -> [usize; 4] {
    let mut counts = [0; 4];
    for t in labels {
        counts[t.index()] += 1;
    }
    counts
}

/// Modal tier and its count, or `None` when the top count is shared.
fn unique_mode(labels: &[Tier]) -> Option<(Tier, usize)> {
    let counts = tier_counts(labels);
    let top = *counts.iter().max()?;
    if top == 0 || counts.iter().filter(|&&c| c == top).count() > 1 {
        return None;
    }
    let idx = counts.iter().position(|&c| c == top)?;
    Some((Tier::from_index(idx), top))
}

/// Strict plurality; a shared top count is a tie, never broken at random.
pub fn majority_vote(labels: &[Tier]) -> Vote {
    match unique_mode(labels) {
        Some((t, _)) => Vote::Winner(t),
        None => Vote::Tie,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub member_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<OrderedWeight>>,
}

/// Weight wrapper so specs can be ordered and compared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrderedWeight(pub f64);

impl Eq for OrderedWeight {}

impl PartialOrd for OrderedWeight {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedWeight {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl EnsembleSpec {
    pub fn uniform<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            member_ids: ids.into_iter().map(Into::into).collect(),
            weights: None,
        }
    }

    pub fn validate(&self) -> Result<(), AggregateError> {
        if self.member_ids.len() < 2 {
            return Err(AggregateError::TooFewMembers(self.member_ids.len()));
        }
        if let Some(w) = &self.weights {
            check_weights(w.iter().map(|w| w.0), self.member_ids.len())?;
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        self.member_ids.join("+")
    }

    fn weight_values(&self) -> Option<Vec<f64>> {
        self.weights.as_ref().map(|w| w.iter().map(|x| x.0).collect())
    }
}

fn check_weights(weights: impl ExactSizeIterator<Item = f64>, members: usize) -> Result<(), AggregateError> {
    if weights.len() != members {
        return Err(AggregateError::LengthMismatch {
            members,
            weights: weights.len(),
        });
    }
    let w: Vec<f64> = weights.collect();
    if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(AggregateError::BadWeights);
    }
    Ok(())
}

/// Mean (or weighted mean) of member distributions, then argmax with the fixed tie order.
pub fn ensemble_average(
    pitch_id: &str,
    distributions: &[LabelDistribution],
    weights: Option<&[f64]>,
) -> Result<Prediction, AggregateError> {
    if distributions.len() < 2 {
        return Err(AggregateError::TooFewMembers(distributions.len()));
    }
    let n = distributions.len();
    let uniform = vec![1.0 / n as f64; n];
    let weights = match weights {
        Some(w) => {
            check_weights(w.iter().copied(), n)?;
            w
        }
        None => &uniform[..],
    };
    let mut mean = [0.0; 4];
    for (d, w) in distributions.iter().zip(weights) {
        for (acc, p) in mean.iter_mut().zip(d.probs()) {
            *acc += w * p;
        }
    }
    let sum: f64 = mean.iter().sum();
    let dist = LabelDistribution::new(mean.map(|p| p / sum))?;
    Ok(Prediction::from_distribution(pitch_id, dist))
}

/// Ensemble per-pitch distributions of several evaluators. Pitches missing
/// from any member are skipped and returned separately.
pub fn ensemble_predictions(
    spec: &EnsembleSpec,
    members: &BTreeMap<String, BTreeMap<String, LabelDistribution>>,
) -> Result<(Vec<Prediction>, Vec<String>), AggregateError> {
    spec.validate()?;
    let tables: Vec<&BTreeMap<String, LabelDistribution>> = spec
        .member_ids
        .iter()
        .map(|id| members.get(id).ok_or_else(|| AggregateError::InvalidPolicy(format!("unknown member {id}"))))
        .collect::<Result<_, _>>()?;
    let weights = spec.weight_values();
    let mut all_pitches: Vec<&String> = tables.iter().flat_map(|t| t.keys()).collect();
    all_pitches.sort();
    all_pitches.dedup();
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for pitch in all_pitches {
        let dists: Option<Vec<LabelDistribution>> = tables.iter().map(|t| t.get(pitch).copied()).collect();
        match dists {
            Some(d) => out.push(ensemble_average(pitch, &d, weights.as_deref())?),
            None => skipped.push(pitch.clone()),
        }
    }
    Ok((out, skipped))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusKind {
    KOfN,
    VoteShare,
    UnanimityMinRaters,
}

impl fmt::Display for ConsensusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConsensusKind::KOfN => "k_of_n",
            ConsensusKind::VoteShare => "vote_share",
            ConsensusKind::UnanimityMinRaters => "unanimity_min_raters",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusPolicy {
    pub kind: ConsensusKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub share: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_raters: Option<usize>,
}

impl ConsensusPolicy {
    pub fn k_of_n(k: usize, n: usize) -> Self {
        Self { kind: ConsensusKind::KOfN, k: Some(k), n: Some(n), share: None, min_raters: None }
    }

    pub fn vote_share(share: f64) -> Self {
        Self { kind: ConsensusKind::VoteShare, k: None, n: None, share: Some(share), min_raters: None }
    }

    pub fn unanimity(min_raters: usize) -> Self {
        Self {
            kind: ConsensusKind::UnanimityMinRaters,
            k: None,
            n: None,
            share: None,
            min_raters: Some(min_raters),
        }
    }

    pub fn validate(&self) -> Result<(), AggregateError> {
        let missing = |param| AggregateError::PolicyParamMissing { kind: self.kind, param };
        match self.kind {
            ConsensusKind::KOfN => {
                let k = self.k.ok_or_else(|| missing("k"))?;
                let n = self.n.ok_or_else(|| missing("n"))?;
                if k == 0 || k > n {
                    return Err(AggregateError::InvalidPolicy(format!("need 1 <= k <= n, got {k} of {n}")));
                }
            }
            ConsensusKind::VoteShare => {
                let s = self.share.ok_or_else(|| missing("share"))?;
                if !(0.0..=1.0).contains(&s) {
                    return Err(AggregateError::InvalidPolicy(format!("share {s} outside [0, 1]")));
                }
            }
            ConsensusKind::UnanimityMinRaters => {
                let m = self.min_raters.ok_or_else(|| missing("min_raters"))?;
                if m == 0 {
                    return Err(AggregateError::InvalidPolicy("min_raters must be >= 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Short name used in tables, e.g. `4of4`, `share>=0.5`, `unanimous>=2`.
    pub fn name(&self) -> String {
        match self.kind {
            ConsensusKind::KOfN => format!("{}of{}", self.k.unwrap_or(0), self.n.unwrap_or(0)),
            ConsensusKind::VoteShare => format!("share>={}", self.share.unwrap_or(0.0)),
            ConsensusKind::UnanimityMinRaters => format!("unanimous>={}", self.min_raters.unwrap_or(0)),
        }
    }

    /// The covered pitch's prediction, or `None` if the policy excludes it.
    fn admit(&self, labels: &[Tier]) -> Option<Tier> {
        let (mode, count) = unique_mode(labels)?;
        let admitted = match self.kind {
            ConsensusKind::KOfN => count >= self.k?,
            ConsensusKind::VoteShare => count as f64 / labels.len() as f64 >= self.share?,
            ConsensusKind::UnanimityMinRaters => labels.len() >= self.min_raters? && count == labels.len(),
        };
        admitted.then_some(mode)
    }
}

impl FromStr for ConsensusPolicy {
    type Err = AggregateError;

    /// Accepts `KofN` (e.g. `3of4`), `share:X` and `unanimous:M`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || AggregateError::InvalidPolicy(s.to_string());
        let policy = if let Some(rest) = s.strip_prefix("share:") {
            ConsensusPolicy::vote_share(rest.parse().map_err(|_| bad())?)
        } else if let Some(rest) = s.strip_prefix("unanimous:") {
            ConsensusPolicy::unanimity(rest.parse().map_err(|_| bad())?)
        } else if let Some((k, n)) = s.split_once("of") {
            ConsensusPolicy::k_of_n(k.parse().map_err(|_| bad())?, n.parse().map_err(|_| bad())?)
        } else {
            return Err(bad());
        };
        policy.validate()?;
        Ok(policy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub policy: ConsensusPolicy,
    pub covered_pitch_ids: Vec<String>,
    pub coverage: f64,
    /// `None` when nothing is covered.
    pub accuracy: Option<f64>,
    /// Accuracy among covered pitches, grouped by their true tier.
    pub per_tier_accuracy: BTreeMap<Tier, f64>,
}

/// Select the pitches on which the policy trusts the aggregate and score them.
/// The prediction for a covered pitch is its unique modal label.
pub fn consensus_filter(
    per_pitch_labels: &BTreeMap<String, Vec<Tier>>,
    truths: &BTreeMap<String, Tier>,
    policy: &ConsensusPolicy,
) -> Result<ConsensusReport, AggregateError> {
    policy.validate()?;
    let mut covered = Vec::new();
    let mut correct = 0usize;
    let mut tier_tally = [(0usize, 0usize); 4];
    for (pitch, labels) in per_pitch_labels {
        if labels.is_empty() {
            return Err(AggregateError::NoLabels(pitch.clone()));
        }
        let truth = *truths
            .get(pitch)
            .ok_or_else(|| AggregateError::MissingTruth(pitch.clone()))?;
        if let Some(pred) = policy.admit(labels) {
            covered.push(pitch.clone());
            let hit = usize::from(pred == truth);
            correct += hit;
            tier_tally[truth.index()].0 += hit;
            tier_tally[truth.index()].1 += 1;
        }
    }
    let total = per_pitch_labels.len();
    let n_cov = covered.len();
    Ok(ConsensusReport {
        policy: policy.clone(),
        coverage: if total == 0 { 0.0 } else { n_cov as f64 / total as f64 },
        accuracy: (n_cov > 0).then(|| correct as f64 / n_cov as f64),
        per_tier_accuracy: Tier::ALL
            .iter()
            .filter(|t| tier_tally[t.index()].1 > 0)
            .map(|&t| {
                let (c, n) = tier_tally[t.index()];
                (t, c as f64 / n as f64)
            })
            .collect(),
        covered_pitch_ids: covered,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEnsemble {
    pub spec: EnsembleSpec,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Accuracy descending, then macro-F1 descending, then member ids ascending.
pub fn rank_ensembles(mut candidates: Vec<RankedEnsemble>) -> Vec<RankedEnsemble> {
    candidates.sort_by(|a, b| {
        b.accuracy
            .total_cmp(&a.accuracy)
            .then_with(|| b.macro_f1.total_cmp(&a.macro_f1))
            .then_with(|| a.spec.member_ids.cmp(&b.spec.member_ids))
    });
    candidates
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Tier::*;

    fn dist(p: [f64; 4]) -> LabelDistribution {
        LabelDistribution::new(p).unwrap()
    }

    #[test]
    fn votes() {
        assert_eq!(majority_vote(&[Exceptional, Exceptional, Strong]), Vote::Winner(Exceptional));
        assert_eq!(majority_vote(&[Exceptional, Strong]), Vote::Tie);
        assert_eq!(majority_vote(&[Fair, Fair, Limited, Limited, Fair]), Vote::Winner(Fair));
        assert_eq!(majority_vote(&[]), Vote::Tie);
    }

    #[test]
    fn averaging() {
        let a = dist([0.6, 0.2, 0.1, 0.1]);
        let b = dist([0.2, 0.5, 0.2, 0.1]);
        let p = ensemble_average("p", &[a, b], None).unwrap();
        let d = p.distribution.unwrap();
        // hand-averaged: (0.40, 0.35, 0.15, 0.10)
        for (got, want) in d.probs().iter().zip([0.40, 0.35, 0.15, 0.10]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(p.label, Exceptional);
        assert!(!p.tie_broken);

        let sym = ensemble_average(
            "p",
            &[dist([0.4, 0.3, 0.2, 0.1]), dist([0.1, 0.2, 0.3, 0.4])],
            None,
        )
        .unwrap();
        assert_eq!(sym.label, Exceptional);
        assert!(sym.tie_broken);

        let same = ensemble_average("p", &[a, a], None).unwrap();
        assert_eq!(same.label, Exceptional);
        for (x, y) in same.distribution.unwrap().probs().iter().zip(a.probs()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_and_errors() {
        let a = dist([1.0, 0.0, 0.0, 0.0]);
        let b = dist([0.0, 1.0, 0.0, 0.0]);
        let p = ensemble_average("p", &[a, b], Some(&[0.25, 0.75])).unwrap();
        assert_eq!(p.label, Strong);
        assert_eq!(
            ensemble_average("p", &[a, b], Some(&[1.0])).unwrap_err(),
            AggregateError::LengthMismatch { members: 2, weights: 1 }
        );
        assert_eq!(
            ensemble_average("p", &[a], None).unwrap_err(),
            AggregateError::TooFewMembers(1)
        );
        assert_eq!(
            ensemble_average("p", &[a, b], Some(&[0.7, 0.7])).unwrap_err(),
            AggregateError::BadWeights
        );
    }

    fn truths(pairs: &[(&str, Tier)]) -> BTreeMap<String, Tier> {
        pairs.iter().map(|(p, t)| (p.to_string(), *t)).collect()
    }

    #[test]
    fn four_of_four() {
        let labels: BTreeMap<String, Vec<Tier>> = [
            ("a".to_string(), vec![Strong; 4]),
            ("b".to_string(), vec![Fair; 4]),
            ("c".to_string(), vec![Strong, Strong, Fair, Fair]),
        ]
        .into_iter()
        .collect();
        let t = truths(&[("a", Strong), ("b", Limited), ("c", Strong)]);
        let r = consensus_filter(&labels, &t, &ConsensusPolicy::k_of_n(4, 4)).unwrap();
        assert_eq!(r.covered_pitch_ids, vec!["a", "b"]);
        assert!((r.coverage - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.accuracy, Some(0.5));
        assert_eq!(r.per_tier_accuracy.get(&Strong), Some(&1.0));
        assert_eq!(r.per_tier_accuracy.get(&Limited), Some(&0.0));
    }

    #[test]
    fn unanimity_needs_enough_raters() {
        let labels: BTreeMap<String, Vec<Tier>> = [
            ("solo".to_string(), vec![Strong]),
            ("pair".to_string(), vec![Fair, Fair]),
            ("split".to_string(), vec![Fair, Strong]),
        ]
        .into_iter()
        .collect();
        let t = truths(&[("solo", Strong), ("pair", Fair), ("split", Fair)]);
        let r = consensus_filter(&labels, &t, &ConsensusPolicy::unanimity(2)).unwrap();
        assert_eq!(r.covered_pitch_ids, vec!["pair"]);
    }

    #[test]
    fn vote_share_is_inclusive() {
        let labels: BTreeMap<String, Vec<Tier>> =
            [("x".to_string(), vec![Exceptional, Exceptional, Strong, Fair])].into_iter().collect();
        let t = truths(&[("x", Exceptional)]);
        let r = consensus_filter(&labels, &t, &ConsensusPolicy::vote_share(0.5)).unwrap();
        assert_eq!(r.covered_pitch_ids, vec!["x"]);
        assert_eq!(r.accuracy, Some(1.0));
        // exact halves with a shared mode stay out
        let tied: BTreeMap<String, Vec<Tier>> =
            [("x".to_string(), vec![Exceptional, Exceptional, Strong, Strong])].into_iter().collect();
        let r = consensus_filter(&tied, &t, &ConsensusPolicy::vote_share(0.5)).unwrap();
        assert!(r.covered_pitch_ids.is_empty());
        assert_eq!(r.accuracy, None);
    }

    #[test]
    fn policy_parsing_and_validation() {
        assert_eq!("4of4".parse::<ConsensusPolicy>().unwrap(), ConsensusPolicy::k_of_n(4, 4));
        assert_eq!("share:0.6".parse::<ConsensusPolicy>().unwrap(), ConsensusPolicy::vote_share(0.6));
        assert_eq!("unanimous:2".parse::<ConsensusPolicy>().unwrap(), ConsensusPolicy::unanimity(2));
        assert!("5of4".parse::<ConsensusPolicy>().is_err());
        let missing = ConsensusPolicy { kind: ConsensusKind::KOfN, k: Some(2), n: None, share: None, min_raters: None };
        assert!(matches!(
            missing.validate(),
            Err(AggregateError::PolicyParamMissing { param: "n", .. })
        ));
        let json = serde_json::to_value(ConsensusPolicy::k_of_n(3, 4)).unwrap();
        assert_eq!(json, serde_json::json!({"kind": "k_of_n", "k": 3, "n": 4}));
    }

    #[test]
    fn ranking() {
        let names = [
            ("gpt-4.1-nano", "qwen3-30b", 0.608),
            ("gpt-4.1", "qwen3-30b", 0.600),
            ("gpt-4.1", "qwen3-4b", 0.600),
            ("gpt-4.1-nano", "qwen3-4b", 0.600),
            ("gpt-4.1-nano", "gpt-4.1", 0.592),
            ("qwen3-30b", "qwen3-4b", 0.592),
        ];
        let cands: Vec<RankedEnsemble> = names
            .iter()
            .map(|(a, b, acc)| RankedEnsemble {
                spec: EnsembleSpec::uniform([*a, *b]),
                accuracy: *acc,
                macro_f1: 0.5,
            })
            .collect();
        let ranked = rank_ensembles(cands);
        assert_eq!(ranked[0].spec.member_ids, vec!["gpt-4.1-nano", "qwen3-30b"]);
        // fully tied at 0.600: member-id order decides
        assert_eq!(ranked[1].spec.member_ids, vec!["gpt-4.1", "qwen3-30b"]);
        assert_eq!(ranked[2].spec.member_ids, vec!["gpt-4.1", "qwen3-4b"]);

        let f1 = rank_ensembles(vec![
            RankedEnsemble { spec: EnsembleSpec::uniform(["a", "b"]), accuracy: 0.6, macro_f1: 0.58 },
            RankedEnsemble { spec: EnsembleSpec::uniform(["c", "d"]), accuracy: 0.6, macro_f1: 0.61 },
        ]);
        assert_eq!(f1[0].macro_f1, 0.61);
    }

    fn arb_dist() -> impl Strategy<Value = LabelDistribution> {
        proptest::array::uniform4(0.01f64..1.0)
            .prop_map(|w| LabelDistribution::from_weights(w).unwrap())
    }

    fn arb_tier() -> impl Strategy<Value = Tier> {
        (0usize..4).prop_map(Tier::from_index)
    }

    proptest! {
        #[test]
        fn ensemble_is_permutation_invariant(ds in proptest::collection::vec(arb_dist(), 2..6), seed in any::<u64>()) {
            let mut shuffled = ds.clone();
            let n = shuffled.len();
            shuffled.rotate_left((seed as usize) % n);
            shuffled.reverse();
            let a = ensemble_average("p", &ds, None).unwrap();
            let b = ensemble_average("p", &shuffled, None).unwrap();
            prop_assert_eq!(a.label, b.label);
            for t in Tier::ALL {
                prop_assert!((a.distribution.unwrap().get(t) - b.distribution.unwrap().get(t)).abs() < 1e-12);
            }
        }

        #[test]
        fn self_ensemble_is_identity(d in arb_dist(), k in 2usize..8) {
            let p = ensemble_average("p", &vec![d; k], None).unwrap();
            for t in Tier::ALL {
                prop_assert!((p.distribution.unwrap().get(t) - d.get(t)).abs() < 1e-12);
            }
        }

        #[test]
        fn k_of_n_coverage_monotone_and_partition(
            panels in proptest::collection::vec((proptest::collection::vec(arb_tier(), 4), arb_tier()), 1..30)
        ) {
            let labels: BTreeMap<String, Vec<Tier>> =
                panels.iter().enumerate().map(|(i, (l, _))| (format!("p{i:03}"), l.clone())).collect();
            let truth: BTreeMap<String, Tier> =
                panels.iter().enumerate().map(|(i, (_, t))| (format!("p{i:03}"), *t)).collect();
            let mut prev = f64::INFINITY;
            for k in 1..=4 {
                let r = consensus_filter(&labels, &truth, &ConsensusPolicy::k_of_n(k, 4)).unwrap();
                prop_assert!(r.coverage <= prev);
                prev = r.coverage;

                // covered + uncovered correct counts reproduce the full-set count
                // under the plurality prediction (ties count as wrong)
                let covered: std::collections::BTreeSet<&String> = r.covered_pitch_ids.iter().collect();
                let hit = |p: &String| matches!(majority_vote(&labels[p]), Vote::Winner(t) if t == truth[p]);
                let covered_correct = r.accuracy.unwrap_or(0.0) * covered.len() as f64;
                let uncovered_correct = labels.keys().filter(|p| !covered.contains(p) && hit(p)).count();
                let total_correct = labels.keys().filter(|p| hit(p)).count();
                prop_assert!((covered_correct + uncovered_correct as f64 - total_correct as f64).abs() < 1e-9);
            }
        }
    }
}
