//! Inter-rater agreement: Fleiss' kappa, Cohen's kappa, Krippendorff's alpha.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{check_lengths, StatsError};
use crate::tiers::Tier;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleissKappa {
    pub kappa: f64,
    pub items_used: usize,
    /// Items dropped for having fewer than two ratings.
    pub items_excluded: usize,
}

/// Fleiss' kappa with per-item rater counts `n_i`.
pub fn fleiss_kappa(ratings: &BTreeMap<String, Vec<Tier>>) -> Result<FleissKappa, StatsError> {
    let items: Vec<Vec<usize>> = ratings
        .values()
        .map(|v| v.iter().map(|t| t.index()).collect())
        .collect();
    fleiss_kappa_codes(&items, 4)
}

/// Fleiss' kappa over category indices `0..n_categories`.
pub fn fleiss_kappa_codes(items: &[Vec<usize>], n_categories: usize) -> Result<FleissKappa, StatsError> {
    let used: Vec<&Vec<usize>> = items.iter().filter(|v| v.len() >= 2).collect();
    let excluded = items.len() - used.len();
    if used.len() < 2 {
        return Err(StatsError::InsufficientRatings(used.len()));
    }
    let mut totals = vec![0usize; n_categories];
    let mut p_bar = 0.0;
    for item in &used {
        let mut counts = vec![0usize; n_categories];
        for &c in item.iter() {
            counts[c] += 1;
            totals[c] += 1;
        }
        let n_i = item.len() as f64;
        let agree: usize = counts.iter().map(|&c| c * c.saturating_sub(1)).sum();
        p_bar += agree as f64 / (n_i * (n_i - 1.0));
    }
    p_bar /= used.len() as f64;
    let grand: usize = totals.iter().sum();
    let p_e: f64 = totals.iter().map(|&c| (c as f64 / grand as f64).powi(2)).sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Err(StatsError::DegenerateMarginals);
    }
    Ok(FleissKappa {
        kappa: (p_bar - p_e) / (1.0 - p_e),
        items_used: used.len(),
        items_excluded: excluded,
    })
}

/// Cohen's kappa with chance agreement from the empirical marginals.
pub fn cohen_kappa(a: &[Tier], b: &[Tier]) -> Result<f64, StatsError> {
    check_lengths(a.len(), b.len())?;
    if a.len() < 2 {
        return Err(StatsError::InsufficientData("cohen's kappa needs at least two items".into()));
    }
    let n = a.len() as f64;
    let mut ma = [0.0; 4];
    let mut mb = [0.0; 4];
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        ma[x.index()] += 1.0 / n;
        mb[y.index()] += 1.0 / n;
        agree += usize::from(x == y);
    }
    kappa_from_agreement(agree as f64 / n, &ma, &mb)
}

/// Kappa from an observed agreement rate and the two raters' marginal rates.
pub fn kappa_from_agreement(p_o: f64, marginals_a: &[f64], marginals_b: &[f64]) -> Result<f64, StatsError> {
    check_lengths(marginals_a.len(), marginals_b.len())?;
    let p_e: f64 = marginals_a.iter().zip(marginals_b).map(|(x, y)| x * y).sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Err(StatsError::DegenerateMarginals);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementLevel {
    Nominal,
    Ordinal,
    Interval,
}

/// Krippendorff's alpha for ordinal tier ratings. Raters absent on a pitch are simply missing.
pub fn krippendorff_alpha_ordinal(ratings: &BTreeMap<String, Vec<Tier>>) -> Result<f64, StatsError> {
    let units: Vec<Vec<i64>> = ratings
        .values()
        .map(|v| v.iter().map(|t| i64::from(t.code())).collect())
        .collect();
    krippendorff_alpha(&units, MeasurementLevel::Ordinal)
}

/// Krippendorff's alpha over integer-valued units via the coincidence matrix.
/// Units with fewer than two values are not pairable and are ignored.
pub fn krippendorff_alpha(units: &[Vec<i64>], level: MeasurementLevel) -> Result<f64, StatsError> {
    let values: Vec<i64> = units
        .iter()
        .filter(|u| u.len() >= 2)
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let idx: BTreeMap<i64, usize> = values.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let v = values.len();
    let mut o = vec![vec![0.0; v]; v];
    for unit in units.iter().filter(|u| u.len() >= 2) {
        let m = unit.len() as f64;
        for (i, a) in unit.iter().enumerate() {
            for (j, b) in unit.iter().enumerate() {
                if i != j {
                    o[idx[a]][idx[b]] += 1.0 / (m - 1.0);
                }
            }
        }
    }
    let n_c: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = n_c.iter().sum();
    if n < 2.0 {
        return Err(StatsError::InsufficientData("alpha needs at least two pairable values".into()));
    }
    let delta = |c: usize, k: usize| -> f64 {
        match level {
            MeasurementLevel::Nominal => f64::from(u8::from(c != k)),
            MeasurementLevel::Interval => ((values[c] - values[k]) as f64).powi(2),
            MeasurementLevel::Ordinal => {
                let (lo, hi) = (c.min(k), c.max(k));
                let s: f64 = n_c[lo..=hi].iter().sum();
                (s - (n_c[c] + n_c[k]) / 2.0).powi(2)
            }
        }
    };
    let mut d_o = 0.0;
    let mut d_e = 0.0;
    for c in 0..v {
        for k in 0..v {
            let d = delta(c, k);
            d_o += o[c][k] * d;
            d_e += n_c[c] * n_c[k] * d;
        }
    }
    if d_e == 0.0 {
        return Err(StatsError::NoVariation);
    }
    Ok(1.0 - (n - 1.0) * d_o / d_e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub fleiss_kappa: Option<f64>,
    pub krippendorff_alpha: Option<f64>,
    /// Keyed `"a|b"` with `a < b`.
    pub pairwise_cohen: BTreeMap<String, f64>,
    pub mean_ordinal_distance: BTreeMap<String, f64>,
}

/// Agreement among evaluators given each evaluator's pitch → tier labels.
/// Coefficients that are undefined on the data are reported as `None` or omitted.
pub fn agreement_report(evaluators: &BTreeMap<String, BTreeMap<String, Tier>>) -> AgreementReport {
    let mut by_pitch: BTreeMap<String, Vec<Tier>> = BTreeMap::new();
    for labels in evaluators.values() {
        for (pitch, &t) in labels {
            by_pitch.entry(pitch.clone()).or_default().push(t);
        }
    }
    let mut pairwise_cohen = BTreeMap::new();
    let mut mean_ordinal_distance = BTreeMap::new();
    let ids: Vec<&String> = evaluators.keys().collect();
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            let (la, lb): (Vec<Tier>, Vec<Tier>) = evaluators[*a]
                .iter()
                .filter_map(|(p, &ta)| evaluators[*b].get(p).map(|&tb| (ta, tb)))
                .unzip();
            let key = format!("{a}|{b}");
            if la.is_empty() {
                continue;
            }
            let dist = la.iter().zip(&lb).map(|(x, y)| f64::from(x.ordinal_distance(*y))).sum::<f64>()
                / la.len() as f64;
            mean_ordinal_distance.insert(key.clone(), dist);
            match cohen_kappa(&la, &lb) {
                Ok(k) => {
                    pairwise_cohen.insert(key, k);
                }
                Err(e) => log::warn!("cohen's kappa for {key} skipped: {e}"),
            }
        }
    }
    AgreementReport {
        fleiss_kappa: fleiss_kappa(&by_pitch).ok().map(|f| f.kappa),
        krippendorff_alpha: krippendorff_alpha_ordinal(&by_pitch).ok(),
        pairwise_cohen,
        mean_ordinal_distance,
    }
}
