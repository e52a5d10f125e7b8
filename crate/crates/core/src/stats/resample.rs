//! Bootstrap intervals and matched-panel Monte Carlo subsampling.
//!
//! Draw `i` always uses substream `i` of the seed, so the parallel loops below
//! return exactly what a serial loop would.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::aggregate::{majority_vote, Vote};
use crate::rng::{index_below, sample_without_replacement, substream};
use crate::tiers::Tier;

/// Linear-interpolation percentile (`q` in [0, 1]) of sorted values.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn percentile_interval(mut values: Vec<f64>, level: f64) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (percentile(&values, tail), percentile(&values, 1.0 - tail))
}

fn check_level(level: f64) -> Result<(), StatsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::InvalidArgument(format!("level {level} must lie in (0, 1)")));
    }
    Ok(())
}

/// Statistic values over `draws` resamples (with replacement) of the indices `0..n`.
pub fn bootstrap_indices<F>(n: usize, draws: usize, seed: u64, statistic: F) -> Result<Vec<f64>, StatsError>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    if n == 0 {
        return Err(StatsError::InsufficientData("bootstrap needs data".into()));
    }
    if draws == 0 {
        return Err(StatsError::InvalidArgument("draws must be positive".into()));
    }
    Ok((0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let idx: Vec<usize> = (0..n).map(|_| index_below(&mut rng, n)).collect();
            statistic(&idx)
        })
        .collect())
}

/// Percentile bootstrap interval of `statistic` over `data`.
pub fn bootstrap_ci<T, F>(data: &[T], statistic: F, draws: usize, level: f64, seed: u64) -> Result<(f64, f64), StatsError>
where
    T: Clone + Sync,
    F: Fn(&[T]) -> f64 + Sync,
{
    check_level(level)?;
    let values = bootstrap_indices(data.len(), draws, seed, |idx| {
        let sample: Vec<T> = idx.iter().map(|&i| data[i].clone()).collect();
        statistic(&sample)
    })?;
    Ok(percentile_interval(values, level))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawOutcome {
    /// `None` when every pitch tied in this draw.
    pub accuracy: Option<f64>,
    pub effective_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleReport {
    pub draws: usize,
    pub target_raters_per_pitch: f64,
    pub mean_accuracy: f64,
    pub ci: (f64, f64),
    pub level: f64,
    pub mean_effective_n: f64,
    /// Draws in which every pitch tied; left out of the mean and interval.
    pub excluded_draws: usize,
    #[serde(skip)]
    pub per_draw: Vec<DrawOutcome>,
}

/// The rater indices chosen for each pitch in draw `draw`.
pub fn draw_panels(
    ratings: &BTreeMap<String, Vec<(String, Tier)>>,
    panel_size: usize,
    seed: u64,
    draw: u64,
) -> BTreeMap<&str, Vec<usize>> {
    let mut rng = substream(seed, draw);
    ratings
        .iter()
        .map(|(pitch, raters)| {
            let k = panel_size.min(raters.len());
            (pitch.as_str(), sample_without_replacement(&mut rng, raters.len(), k))
        })
        .collect()
}

/// Majority-vote accuracy of one set of panels, tied pitches excluded.
pub fn score_panels(
    ratings: &BTreeMap<String, Vec<(String, Tier)>>,
    truths: &BTreeMap<String, Tier>,
    panels: &BTreeMap<&str, Vec<usize>>,
) -> DrawOutcome {
    let (mut correct, mut counted) = (0usize, 0usize);
    for (pitch, chosen) in panels {
        let labels: Vec<Tier> = chosen.iter().map(|&i| ratings[*pitch][i].1).collect();
        if let Vote::Winner(t) = majority_vote(&labels) {
            counted += 1;
            correct += usize::from(t == truths[*pitch]);
        }
    }
    DrawOutcome {
        accuracy: (counted > 0).then(|| correct as f64 / counted as f64),
        effective_n: counted,
    }
}

/// Accuracy of majority votes from randomly drawn panels of `target_raters_per_pitch`
/// raters (fewer where a pitch has fewer), with tied pitches excluded per draw.
pub fn matched_n_subsample(
    ratings: &BTreeMap<String, Vec<(String, Tier)>>,
    truths: &BTreeMap<String, Tier>,
    target_raters_per_pitch: f64,
    draws: usize,
    level: f64,
    seed: u64,
) -> Result<SubsampleReport, StatsError> {
    check_level(level)?;
    if target_raters_per_pitch.is_nan() || target_raters_per_pitch < 1.0 {
        return Err(StatsError::InvalidArgument(format!(
            "target panel size {target_raters_per_pitch} must be at least 1"
        )));
    }
    if draws == 0 {
        return Err(StatsError::InvalidArgument("draws must be positive".into()));
    }
    for (pitch, raters) in ratings {
        if raters.is_empty() {
            return Err(StatsError::EmptyPitch(pitch.clone()));
        }
        if !truths.contains_key(pitch) {
            return Err(StatsError::MissingTruth(pitch.clone()));
        }
    }
    let panel_size = target_raters_per_pitch.round() as usize;
    let per_draw: Vec<DrawOutcome> = (0..draws as u64)
        .into_par_iter()
        .map(|d| score_panels(ratings, truths, &draw_panels(ratings, panel_size, seed, d)))
        .collect();
    let accs: Vec<f64> = per_draw.iter().filter_map(|o| o.accuracy).collect();
    if accs.is_empty() {
        return Err(StatsError::InsufficientData("every draw tied on every pitch".into()));
    }
    Ok(SubsampleReport {
        draws,
        target_raters_per_pitch,
        mean_accuracy: super::mean(&accs),
        excluded_draws: draws - accs.len(),
        ci: percentile_interval(accs, level),
        level,
        mean_effective_n: per_draw.iter().map(|o| o.effective_n as f64).sum::<f64>() / draws as f64,
        per_draw,
    })
}
