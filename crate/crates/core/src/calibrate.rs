//! Confidence calibration: ECE, Brier score, confidence gap and selective prediction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{LabelDistribution, Prediction};
use crate::stats::{self, Sidedness, StatsError};
use crate::tiers::Tier;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("no confidence available for {0}")]
    MissingConfidence(String),
    #[error("likert rating {0} outside 1..=5")]
    LikertOutOfRange(u8),
    #[error("confidence {0} outside [0, 1]")]
    ConfidenceOutOfRange(f64),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no items")]
    Empty,
    #[error("bin count must be positive")]
    NoBins,
    #[error("confidence gap needs both correct and incorrect items")]
    DegenerateSplit,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Anything a confidence in [0, 1] can be read from.
pub trait HasConfidence {
    fn confidence(&self) -> Result<f64, CalibrationError>;
}

impl HasConfidence for Prediction {
    /// Max probability when a distribution is attached, else the stored confidence.
    fn confidence(&self) -> Result<f64, CalibrationError> {
        let c = self.distribution.map_or(self.confidence, |d| d.max_probability());
        if c.is_nan() {
            return Err(CalibrationError::MissingConfidence(self.pitch_id.clone()));
        }
        Ok(c)
    }
}

pub fn confidence_of<T: HasConfidence + ?Sized>(item: &T) -> Result<f64, CalibrationError> {
    item.confidence()
}

/// Map a 1..5 Likert confidence onto [0, 1].
pub fn likert_to_unit(likert: u8) -> Result<f64, CalibrationError> {
    if !(1..=5).contains(&likert) {
        return Err(CalibrationError::LikertOutOfRange(likert));
    }
    Ok(f64::from(likert - 1) / 4.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
    pub mean_conf: Option<f64>,
    pub accuracy: Option<f64>,
}

fn check_pair(left: usize, right: usize) -> Result<(), CalibrationError> {
    if left != right {
        return Err(CalibrationError::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(CalibrationError::Empty);
    }
    Ok(())
}

/// Equal-width bin of a confidence; upper edges are inclusive, so 0.1 lands in the first of ten.
fn bin_index(c: f64, n_bins: usize) -> usize {
    (0..n_bins)
        .find(|&i| c <= (i + 1) as f64 / n_bins as f64)
        .unwrap_or(n_bins - 1)
}

fn check_confidences(confidences: &[f64]) -> Result<(), CalibrationError> {
    match confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        Some(&c) => Err(CalibrationError::ConfidenceOutOfRange(c)),
        None => Ok(()),
    }
}

/// Expected calibration error over `n_bins` equal-width bins, with the bins themselves.
pub fn ece(confidences: &[f64], correct: &[bool], n_bins: usize) -> Result<(f64, Vec<CalibrationBin>), CalibrationError> {
    check_pair(confidences.len(), correct.len())?;
    if n_bins == 0 {
        return Err(CalibrationError::NoBins);
    }
    check_confidences(confidences)?;
    let mut sums = vec![(0usize, 0.0f64, 0usize); n_bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let b = &mut sums[bin_index(c, n_bins)];
        b.0 += 1;
        b.1 += c;
        b.2 += usize::from(ok);
    }
    let n = confidences.len() as f64;
    let mut total = 0.0;
    let bins = sums
        .iter()
        .enumerate()
        .map(|(i, &(count, conf, hits))| {
            let (mean_conf, accuracy) = if count == 0 {
                (None, None)
            } else {
                let (mc, acc) = (conf / count as f64, hits as f64 / count as f64);
                total += count as f64 / n * (acc - mc).abs();
                (Some(mc), Some(acc))
            };
            CalibrationBin {
                low: i as f64 / n_bins as f64,
                high: (i + 1) as f64 / n_bins as f64,
                count,
                mean_conf,
                accuracy,
            }
        })
        .collect();
    Ok((total, bins))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrierDecomposition {
    pub reliability: f64,
    pub resolution: f64,
    pub uncertainty: f64,
}

/// Multiclass Brier score, mean over items of the squared distance to the one-hot truth.
pub fn brier(distributions: &[LabelDistribution], truths: &[Tier]) -> Result<f64, CalibrationError> {
    check_pair(distributions.len(), truths.len())?;
    let total: f64 = distributions
        .iter()
        .zip(truths)
        .map(|(d, t)| {
            Tier::ALL
                .iter()
                .map(|k| (d.get(*k) - f64::from(u8::from(k == t))).powi(2))
                .sum::<f64>()
        })
        .sum();
    Ok(total / distributions.len() as f64)
}

/// Brier decomposition over bins of the max probability.
///
/// Within a bin the outcome mean `ō_b` stands in for the forecast, and the
/// reliability term keeps the cross term so that
/// `brier = reliability - resolution + uncertainty` holds exactly.
pub fn brier_decomposition(
    distributions: &[LabelDistribution],
    truths: &[Tier],
    n_bins: usize,
) -> Result<BrierDecomposition, CalibrationError> {
    check_pair(distributions.len(), truths.len())?;
    if n_bins == 0 {
        return Err(CalibrationError::NoBins);
    }
    let n = distributions.len() as f64;
    let onehot = |t: Tier| -> [f64; 4] { std::array::from_fn(|k| f64::from(u8::from(k == t.index()))) };
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (i, d) in distributions.iter().enumerate() {
        members[bin_index(d.max_probability(), n_bins)].push(i);
    }
    let mut overall = [0.0; 4];
    for t in truths {
        overall[t.index()] += 1.0 / n;
    }
    let uncertainty: f64 = overall.iter().map(|o| o * (1.0 - o)).sum();
    let (mut reliability, mut resolution) = (0.0, 0.0);
    for idx in members.iter().filter(|m| !m.is_empty()) {
        let nb = idx.len() as f64;
        let mut obar = [0.0; 4];
        for &i in idx {
            obar[truths[i].index()] += 1.0 / nb;
        }
        resolution += nb * (0..4).map(|k| (obar[k] - overall[k]).powi(2)).sum::<f64>();
        for &i in idx {
            let p = distributions[i].probs();
            let o = onehot(truths[i]);
            reliability += (0..4)
                .map(|k| (p[k] - obar[k]).powi(2) - 2.0 * (p[k] - obar[k]) * (o[k] - obar[k]))
                .sum::<f64>();
        }
    }
    Ok(BrierDecomposition {
        reliability: reliability / n,
        resolution: resolution / n,
        uncertainty,
    })
}

/// Mean confidence when correct minus mean confidence when wrong, with a
/// one-sided Mann-Whitney p for "correct answers carry higher confidence".
pub fn confidence_gap(confidences: &[f64], correct: &[bool]) -> Result<(f64, f64), CalibrationError> {
    check_pair(confidences.len(), correct.len())?;
    let pick = |want: bool| -> Vec<f64> {
        confidences.iter().zip(correct).filter(|(_, ok)| **ok == want).map(|(c, _)| *c).collect()
    };
    let (hit, miss) = (pick(true), pick(false));
    if hit.is_empty() || miss.is_empty() {
        return Err(CalibrationError::DegenerateSplit);
    }
    let gap = stats::mean(&hit) - stats::mean(&miss);
    let p = stats::mann_whitney(&hit, &miss, Sidedness::Greater)?.p;
    Ok((gap, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub pitch_id: String,
    pub confidence: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectivePoint {
    pub coverage: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveCurve {
    pub points: Vec<SelectivePoint>,
    /// Pitch ids from most to least confident.
    pub order: Vec<String>,
}

impl SelectiveCurve {
    /// Accuracy of the most confident `coverage` fraction (rounded up to whole items).
    pub fn accuracy_at(&self, coverage: f64) -> Option<f64> {
        let n = self.points.len();
        let k = ((coverage * n as f64) - 1e-9).ceil().max(1.0) as usize;
        self.points.get(k.min(n).checked_sub(1)?).map(|p| p.accuracy)
    }
}

/// Accuracy of the top-k most confident items for every k. Equal confidences
/// are ordered by pitch id.
pub fn selective_curve(items: &[ScoredItem]) -> Result<SelectiveCurve, CalibrationError> {
    if items.is_empty() {
        return Err(CalibrationError::Empty);
    }
    let mut sorted: Vec<&ScoredItem> = items.iter().collect();
    sorted.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then_with(|| a.pitch_id.cmp(&b.pitch_id)));
    let n = sorted.len() as f64;
    let mut hits = 0usize;
    let points = sorted
        .iter()
        .enumerate()
        .map(|(k, item)| {
            hits += usize::from(item.correct);
            SelectivePoint {
                coverage: (k + 1) as f64 / n,
                accuracy: hits as f64 / (k + 1) as f64,
            }
        })
        .collect();
    Ok(SelectiveCurve {
        points,
        order: sorted.iter().map(|i| i.pitch_id.clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n: usize,
    pub n_bins: usize,
    pub ece: f64,
    pub brier: Option<f64>,
    pub brier_decomposition: Option<BrierDecomposition>,
    pub confidence_gap: Option<f64>,
    pub gap_p_one_sided: Option<f64>,
    pub bins: Vec<CalibrationBin>,
}

/// Full report. Brier terms need distributions, which human raters lack.
pub fn calibration_report(
    confidences: &[f64],
    correct: &[bool],
    distributions: Option<(&[LabelDistribution], &[Tier])>,
    n_bins: usize,
) -> Result<CalibrationReport, CalibrationError> {
    let (ece_value, bins) = ece(confidences, correct, n_bins)?;
    let (brier_score, decomposition) = match distributions {
        Some((d, t)) => (Some(brier(d, t)?), Some(brier_decomposition(d, t, n_bins)?)),
        None => (None, None),
    };
    let gap = match confidence_gap(confidences, correct) {
        Ok(g) => Some(g),
        Err(CalibrationError::DegenerateSplit) => None,
        Err(e) => return Err(e),
    };
    Ok(CalibrationReport {
        n: confidences.len(),
        n_bins,
        ece: ece_value,
        brier: brier_score,
        brier_decomposition: decomposition,
        confidence_gap: gap.map(|g| g.0),
        gap_p_one_sided: gap.map(|g| g.1),
        bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, unit};
    use proptest::prelude::*;

    #[test]
    fn confidence_sources() {
        assert_eq!(likert_to_unit(5).unwrap(), 1.0);
        assert_eq!(likert_to_unit(1).unwrap(), 0.0);
        assert!(likert_to_unit(6).is_err());
        let d = LabelDistribution::new([0.40, 0.35, 0.15, 0.10]).unwrap();
        let p = Prediction::from_distribution("p", d);
        assert_eq!(confidence_of(&p).unwrap(), 0.40);
    }

    #[test]
    fn ece_examples() {
        let conf = vec![0.8; 100];
        let correct: Vec<bool> = (0..100).map(|i| i < 75).collect();
        let (e, bins) = ece(&conf, &correct, 10).unwrap();
        // 0.8 - 0.75 is not exactly 0.05 in binary
        assert!((e - 0.05).abs() < 1e-12);
        assert_eq!(bins.iter().filter(|b| b.count > 0).count(), 1);
        assert_eq!(bins[7].count, 100);
        let (e, _) = ece(&[1.0; 10], &[true; 10], 10).unwrap();
        assert_eq!(e, 0.0);
        assert!(matches!(ece(&[0.5], &[], 10), Err(CalibrationError::LengthMismatch { .. })));
        assert!(matches!(ece(&[1.5], &[true], 10), Err(CalibrationError::ConfidenceOutOfRange(_))));
    }

    #[test]
    fn ece_bin_edges_are_right_inclusive() {
        let (_, bins) = ece(&[0.0, 0.1, 0.1000001, 1.0], &[true; 4], 10).unwrap();
        assert_eq!(bins[0].count, 2);
        assert_eq!(bins[1].count, 1);
        assert_eq!(bins[9].count, 1);
        let total: f64 = bins.iter().map(|b| b.high - b.low).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ece_calibrated_simulation() {
        let mut rng = seeded(10_000);
        let (mut conf, mut correct) = (Vec::new(), Vec::new());
        for _ in 0..10_000 {
            let c = unit(&mut rng);
            conf.push(c);
            correct.push(unit(&mut rng) < c);
        }
        assert!(ece(&conf, &correct, 10).unwrap().0 < 0.02);
    }

    #[test]
    fn brier_examples() {
        use Tier::*;
        assert_eq!(brier(&[LabelDistribution::one_hot(Strong)], &[Strong]).unwrap(), 0.0);
        assert_eq!(brier(&[LabelDistribution::one_hot(Strong)], &[Fair]).unwrap(), 2.0);
        for t in Tier::ALL {
            assert_eq!(brier(&[LabelDistribution::uniform()], &[t]).unwrap(), 0.75);
        }
    }

    #[test]
    fn gap_examples() {
        let conf = [0.9, 0.9, 0.9, 0.7, 0.7];
        let ok = [true, true, true, false, false];
        let (g, p) = confidence_gap(&conf, &ok).unwrap();
        assert!((g - 0.2).abs() < 1e-12);
        assert!(p < 0.5);
        let (g, p) = confidence_gap(&[0.6; 6], &[true, false, true, false, true, false]).unwrap();
        assert_eq!((g, p), (0.0, 0.5));
        assert_eq!(confidence_gap(&[0.6; 2], &[true; 2]), Err(CalibrationError::DegenerateSplit));
    }

    #[test]
    fn gap_p_matches_rank_enumeration() {
        let conf = [0.93, 0.81, 0.77, 0.52, 0.64, 0.58, 0.71, 0.49];
        let ok = [true, true, true, true, false, false, false, false];
        let (_, p) = confidence_gap(&conf, &ok).unwrap();
        // ranks of the correct group: 8, 7, 6, 2 -> sum 23; count 4-subsets of 1..8 with sum >= 23
        let mut hits = 0;
        let mut total = 0;
        for mask in 0u32..256 {
            if mask.count_ones() == 4 {
                total += 1;
                let s: u32 = (0..8).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).sum();
                if s >= 23 {
                    hits += 1;
                }
            }
        }
        assert!((p - f64::from(hits) / f64::from(total)).abs() < 1e-12);
    }

    #[test]
    fn selective_examples() {
        let items: Vec<ScoredItem> = [(0.9, true), (0.8, true), (0.7, false), (0.6, true), (0.5, false)]
            .iter()
            .enumerate()
            .map(|(i, &(c, ok))| ScoredItem { pitch_id: format!("p{i}"), confidence: c, correct: ok })
            .collect();
        let curve = selective_curve(&items).unwrap();
        let acc: Vec<f64> = curve.points.iter().map(|p| p.accuracy).collect();
        let want = [1.0, 1.0, 2.0 / 3.0, 0.75, 0.6];
        for (a, b) in acc.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(curve.points.last().unwrap().coverage, 1.0);

        let tied: Vec<ScoredItem> = ["b", "a", "c"]
            .iter()
            .map(|id| ScoredItem { pitch_id: id.to_string(), confidence: 0.5, correct: true })
            .collect();
        assert_eq!(selective_curve(&tied).unwrap().order, vec!["a", "b", "c"]);
    }

    #[test]
    fn selective_top_decile() {
        // 120 items: the 12 most confident all correct, the rest mixed
        let items: Vec<ScoredItem> = (0..120)
            .map(|i| ScoredItem {
                pitch_id: format!("p{i:03}"),
                confidence: 1.0 - i as f64 / 120.0,
                correct: i < 12 || i % 2 == 0,
            })
            .collect();
        let curve = selective_curve(&items).unwrap();
        assert_eq!(curve.accuracy_at(0.10), Some(1.0));
    }

    fn arb_items() -> impl Strategy<Value = Vec<(LabelDistribution, Tier)>> {
        proptest::collection::vec(
            (proptest::array::uniform4(0.0f64..1.0), 0usize..4).prop_filter_map("positive", |(w, t)| {
                LabelDistribution::from_weights(w).ok().map(|d| (d, Tier::from_index(t)))
            }),
            1..60,
        )
    }

    proptest! {
        #[test]
        fn decomposition_identity(items in arb_items(), n_bins in 1usize..15) {
            let (d, t): (Vec<_>, Vec<_>) = items.into_iter().unzip();
            let b = brier(&d, &t).unwrap();
            let dec = brier_decomposition(&d, &t, n_bins).unwrap();
            prop_assert!((b - (dec.reliability - dec.resolution + dec.uncertainty)).abs() < 1e-9);
        }

        #[test]
        fn uniform_brier(truths in proptest::collection::vec(0usize..4, 1..50)) {
            let t: Vec<Tier> = truths.into_iter().map(Tier::from_index).collect();
            let d = vec![LabelDistribution::uniform(); t.len()];
            prop_assert_eq!(brier(&d, &t).unwrap(), 0.75);
        }

        #[test]
        fn selective_final_point_is_full_accuracy(flags in proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 1..80)) {
            let items: Vec<ScoredItem> = flags.iter().enumerate()
                .map(|(i, &(c, ok))| ScoredItem { pitch_id: format!("{i}"), confidence: c, correct: ok })
                .collect();
            let curve = selective_curve(&items).unwrap();
            let full = flags.iter().filter(|f| f.1).count() as f64 / flags.len() as f64;
            prop_assert!((curve.points.last().unwrap().accuracy - full).abs() < 1e-12);
            for w in curve.points.windows(2) {
                prop_assert!(w[1].coverage > w[0].coverage);
            }
        }

        #[test]
        fn ece_zero_when_bins_match(k in 1usize..20) {
            // every item at confidence 0.5 with exactly half correct
            let conf = vec![0.5; 2 * k];
            let ok: Vec<bool> = (0..2 * k).map(|i| i % 2 == 0).collect();
            prop_assert_eq!(ece(&conf, &ok, 10).unwrap().0, 0.0);
        }
    }
}
