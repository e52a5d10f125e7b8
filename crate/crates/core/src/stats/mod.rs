//! Agreement coefficients, hypothesis tests, intervals and resampling.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod agreement;
pub mod hypothesis;
pub mod intervals;
pub mod rank;
pub mod resample;

pub use agreement::{
    agreement_report, cohen_kappa, fleiss_kappa, fleiss_kappa_codes, kappa_from_agreement, krippendorff_alpha,
    krippendorff_alpha_ordinal, AgreementReport, FleissKappa, MeasurementLevel,
};
pub use hypothesis::{binomial_test, holm, mcnemar, mcnemar_counts, McNemarMode};
pub use intervals::{
    clopper_pearson_ci, normal_ci, proportion_ci, wilson_ci, CiMethod, ConfidenceInterval,
};
pub use rank::{
    average_ranks, cochran_q, kruskal_wallis, mann_whitney, rank_tests, spearman, spearman_perm,
    t_one_sample, RankTestInput,
};
pub use resample::{
    bootstrap_ci, bootstrap_indices, draw_panels, matched_n_subsample, percentile, score_panels, DrawOutcome,
    SubsampleReport,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least two items with two or more ratings, found {0}")]
    InsufficientRatings(usize),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("chance agreement is 1, kappa is undefined")]
    DegenerateMarginals,
    #[error("all ratings identical, alpha is undefined")]
    NoVariation,
    #[error("pitch {0} has no ratings")]
    EmptyPitch(String),
    #[error("pitch {0} has no ground-truth tier")]
    MissingTruth(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    TwoSided,
    /// Alternative: the first sample (or the observed count) is larger.
    Greater,
    Less,
}

impl fmt::Display for Sidedness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sidedness::TwoSided => "two_sided",
            Sidedness::Greater => "greater",
            Sidedness::Less => "less",
        })
    }
}

impl std::str::FromStr for Sidedness {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "two_sided" | "two" => Ok(Sidedness::TwoSided),
            "greater" => Ok(Sidedness::Greater),
            "less" => Ok(Sidedness::Less),
            other => Err(StatsError::InvalidArgument(format!("unknown sidedness {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub statistic: Option<f64>,
    pub p: f64,
    pub sidedness: Sidedness,
    pub n: usize,
    #[serde(default)]
    pub details: BTreeMap<String, f64>,
}

impl TestResult {
    pub(crate) fn new(name: impl Into<String>, statistic: Option<f64>, p: f64, sidedness: Sidedness, n: usize) -> Self {
        Self {
            name: name.into(),
            statistic,
            p: p.clamp(0.0, 1.0),
            sidedness,
            n,
            details: BTreeMap::new(),
        }
    }

    pub(crate) fn with(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }
}

pub(crate) fn check_lengths(left: usize, right: usize) -> Result<(), StatsError> {
    if left != right {
        return Err(StatsError::LengthMismatch { left, right });
    }
    Ok(())
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
