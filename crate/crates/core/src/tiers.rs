//! The four-tier label space and the arithmetic shared by every analysis.
//!
//! Tier codes run best to worst: `1 = exceptional`, `2 = strong`, `3 = fair`,
//! `4 = limited`. Ordinal distance is measured on these codes, and whenever an
//! exact tie has to be broken the ascending code order decides.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TierError {
    #[error("unknown {origin} label {raw:?}")]
    UnknownLabel { raw: String, origin: LabelSource },
    #[error("tier code {0} is outside 1..=4")]
    BadCode(i64),
    #[error("chance rate {0} must lie in [0, 1)")]
    ChanceOutOfRange(f64),
    #[error("accuracy {0} must lie in [0, 1]")]
    AccuracyOutOfRange(f64),
}

/// Ordinal research-quality tier.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Exceptional = 1,
    Strong = 2,
    Fair = 3,
    Limited = 4,
}

impl Tier {
    /// All tiers in tie-break order.
    pub const ALL: [Tier; 4] = [Tier::Exceptional, Tier::Strong, Tier::Fair, Tier::Limited];

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Zero-based position, handy for indexing `[T; 4]` arrays.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_index(i: usize) -> Tier {
        Tier::ALL[i]
    }

    pub fn from_code(code: i64) -> Result<Tier, TierError> {
        match code {
            1 => Ok(Tier::Exceptional),
            2 => Ok(Tier::Strong),
            3 => Ok(Tier::Fair),
            4 => Ok(Tier::Limited),
            other => Err(TierError::BadCode(other)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tier::Exceptional => "exceptional",
            Tier::Strong => "strong",
            Tier::Fair => "fair",
            Tier::Limited => "limited",
        }
    }

    pub fn ordinal_distance(self, other: Tier) -> u8 {
        self.code().abs_diff(other.code())
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tier {
    type Err = TierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        normalize_label(s, LabelSource::Model)
    }
}

/// Where a raw label string came from. Each source has its own vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Model,
    HumanSurvey,
    Metadata,
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelSource::Model => "model",
            LabelSource::HumanSurvey => "human_survey",
            LabelSource::Metadata => "metadata",
        })
    }
}

/// Map a raw label onto the unified tier space.
///
/// Survey and metadata shorthand (`Top`, `Top-`, `Good`, `Fair`) maps to codes
/// 1..4, so the shorthand `Fair` is the *lowest* tier. Model labels are the
/// unified tier names, matched case-insensitively.
pub fn normalize_label(raw: &str, source: LabelSource) -> Result<Tier, TierError> {
    let key = raw.trim().to_lowercase();
    let tier = match source {
        LabelSource::Model => match key.as_str() {
            "exceptional" => Some(Tier::Exceptional),
            "strong" => Some(Tier::Strong),
            "fair" => Some(Tier::Fair),
            "limited" => Some(Tier::Limited),
            _ => None,
        },
        LabelSource::HumanSurvey | LabelSource::Metadata => match key.as_str() {
            "top" => Some(Tier::Exceptional),
            "top-" => Some(Tier::Strong),
            "good" => Some(Tier::Fair),
            "fair" => Some(Tier::Limited),
            _ => None,
        },
    };
    tier.ok_or_else(|| TierError::UnknownLabel {
        raw: raw.to_string(),
        origin: source,
    })
}

/// Fraction of the improvable range above chance that an accuracy captures.
/// Negative below chance.
pub fn headroom(accuracy: f64, chance: f64) -> Result<f64, TierError> {
    if !(0.0..1.0).contains(&chance) {
        return Err(TierError::ChanceOutOfRange(chance));
    }
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(TierError::AccuracyOutOfRange(accuracy));
    }
    Ok((accuracy - chance) / (1.0 - chance))
}

pub fn ordinal_distance(a: Tier, b: Tier) -> u8 {
    a.ordinal_distance(b)
}

/// Render a fraction as a percentage with one decimal, rounding half away from zero.
pub fn format_percent(fraction: f64) -> String {
    format!("{:.1}", round_half_away(fraction * 100.0, 1))
}

/// Round to `decimals` places, halves away from zero.
pub fn round_half_away(value: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    // the small nudge keeps values like 47.75 (stored as 47.74999..) on the intended side
    let scaled = value * scale;
    let nudged = scaled + scaled.signum() * 1e-9;
    nudged.round() / scale
}

/// Fixed-length vector indexed by tier.
pub type PerTier<T> = [T; 4];
