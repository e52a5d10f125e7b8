//! Confidence intervals for a binomial proportion.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, Normal};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Normal,
    Wilson,
    ClopperPearson,
    Bootstrap,
}

impl fmt::Display for CiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CiMethod::Normal => "normal",
            CiMethod::Wilson => "wilson",
            CiMethod::ClopperPearson => "clopper_pearson",
            CiMethod::Bootstrap => "bootstrap",
        })
    }
}

impl FromStr for CiMethod {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "normal" => Ok(CiMethod::Normal),
            "wilson" => Ok(CiMethod::Wilson),
            "clopper_pearson" | "exact" => Ok(CiMethod::ClopperPearson),
            "bootstrap" => Ok(CiMethod::Bootstrap),
            other => Err(StatsError::InvalidArgument(format!("unknown interval method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub low: f64,
    pub high: f64,
    pub method: CiMethod,
    pub level: f64,
}

fn check(k: u64, n: u64, level: f64) -> Result<(), StatsError> {
    if n == 0 {
        return Err(StatsError::InsufficientData("interval needs n >= 1".into()));
    }
    if k > n {
        return Err(StatsError::InvalidArgument(format!("k = {k} exceeds n = {n}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::InvalidArgument(format!("level {level} must lie in (0, 1)")));
    }
    Ok(())
}

fn z_for(level: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - (1.0 - level) / 2.0)
}

/// Wilson score interval.
pub fn wilson_ci(k: u64, n: u64, level: f64) -> Result<(f64, f64), StatsError> {
    check(k, n, level)?;
    let z = z_for(level);
    let nf = n as f64;
    let p = k as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt();
    let low = if k == 0 { 0.0 } else { center - half };
    let high = if k == n { 1.0 } else { center + half };
    Ok((low, high))
}

/// Wald interval, clipped to [0, 1].
pub fn normal_ci(k: u64, n: u64, level: f64) -> Result<(f64, f64), StatsError> {
    check(k, n, level)?;
    let p = k as f64 / n as f64;
    let half = z_for(level) * (p * (1.0 - p) / n as f64).sqrt();
    Ok(((p - half).max(0.0), (p + half).min(1.0)))
}

/// Exact interval from beta quantiles.
pub fn clopper_pearson_ci(k: u64, n: u64, level: f64) -> Result<(f64, f64), StatsError> {
    check(k, n, level)?;
    let alpha = 1.0 - level;
    let (kf, nf) = (k as f64, n as f64);
    let low = if k == 0 {
        0.0
    } else {
        Beta::new(kf, nf - kf + 1.0).expect("valid beta").inverse_cdf(alpha / 2.0)
    };
    let high = if k == n {
        1.0
    } else {
        Beta::new(kf + 1.0, nf - kf).expect("valid beta").inverse_cdf(1.0 - alpha / 2.0)
    };
    Ok((low, high))
}

/// Closed-form interval for `k` successes out of `n`. Bootstrap needs the data and is rejected here.
pub fn proportion_ci(k: u64, n: u64, level: f64, method: CiMethod) -> Result<ConfidenceInterval, StatsError> {
    let (low, high) = match method {
        CiMethod::Normal => normal_ci(k, n, level)?,
        CiMethod::Wilson => wilson_ci(k, n, level)?,
        CiMethod::ClopperPearson => clopper_pearson_ci(k, n, level)?,
        CiMethod::Bootstrap => {
            return Err(StatsError::InvalidArgument(
                "bootstrap intervals are computed from resampled data".into(),
            ))
        }
    };
    Ok(ConfidenceInterval { low, high, method, level })
}
