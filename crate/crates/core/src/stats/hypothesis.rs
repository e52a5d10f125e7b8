//! Paired and binomial tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete};

use super::{check_lengths, Sidedness, StatsError, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McNemarMode {
    Exact,
    ContinuityCorrected,
}

/// McNemar's test on paired correctness flags.
/// `b` counts items only `a` got right, `c` items only `b` got right.
pub fn mcnemar(correct_a: &[bool], correct_b: &[bool], mode: McNemarMode) -> Result<TestResult, StatsError> {
    check_lengths(correct_a.len(), correct_b.len())?;
    let b = correct_a.iter().zip(correct_b).filter(|(x, y)| **x && !**y).count() as u64;
    let c = correct_a.iter().zip(correct_b).filter(|(x, y)| !**x && **y).count() as u64;
    let mut r = mcnemar_counts(b, c, mode);
    r.n = correct_a.len();
    Ok(r)
}

pub fn mcnemar_counts(b: u64, c: u64, mode: McNemarMode) -> TestResult {
    let name = match mode {
        McNemarMode::Exact => "mcnemar_exact",
        McNemarMode::ContinuityCorrected => "mcnemar_cc",
    };
    let total = b + c;
    let base = |stat, p| {
        TestResult::new(name, stat, p, Sidedness::TwoSided, total as usize)
            .with("b", b as f64)
            .with("c", c as f64)
    };
    if total == 0 {
        return base(None, 1.0);
    }
    match mode {
        McNemarMode::Exact => {
            let k = b.min(c);
            let tail: f64 = (0..=k).map(|i| binom_pmf(i, total, 0.5)).sum();
            base(Some(k as f64), (2.0 * tail).min(1.0))
        }
        McNemarMode::ContinuityCorrected => {
            let diff = (b as f64 - c as f64).abs() - 1.0;
            let stat = diff.max(0.0).powi(2) / total as f64;
            base(Some(stat), chi2_sf(stat, 1.0))
        }
    }
}

pub(crate) fn chi2_sf(x: f64, df: f64) -> f64 {
    ChiSquared::new(df).expect("positive degrees of freedom").sf(x)
}

fn binom_pmf(k: u64, n: u64, p: f64) -> f64 {
    Binomial::new(p, n).expect("valid binomial").pmf(k)
}

/// Exact binomial test by direct tail summation.
///
/// Two-sided p sums the probabilities of every outcome no more likely than the
/// observed one (with a 1e-7 relative slack for rounding).
pub fn binomial_test(k: u64, n: u64, p0: f64, sided: Sidedness) -> Result<TestResult, StatsError> {
    if k > n {
        return Err(StatsError::InvalidArgument(format!("k = {k} exceeds n = {n}")));
    }
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(StatsError::InvalidArgument(format!("p0 = {p0} must lie in (0, 1)")));
    }
    let pmf: Vec<f64> = (0..=n).map(|i| binom_pmf(i, n, p0)).collect();
    let k = k as usize;
    let p = match sided {
        Sidedness::Greater => pmf[k..].iter().sum(),
        Sidedness::Less => pmf[..=k].iter().sum(),
        Sidedness::TwoSided => {
            let cut = pmf[k] * (1.0 + 1e-7);
            pmf.iter().filter(|&&q| q <= cut).sum()
        }
    };
    Ok(TestResult::new("binomial", Some(k as f64), p, sided, n as usize).with("p0", p0))
}

/// Holm step-down adjusted p-values, returned in input order.
pub fn holm(pvalues: &[f64]) -> Vec<f64> {
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let mut adjusted = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * pvalues[i]).min(1.0));
        adjusted[i] = running;
    }
    adjusted
}
