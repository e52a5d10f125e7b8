//! Rank-based and location tests. Ties always receive average ranks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::hypothesis::chi2_sf;
use super::{check_lengths, mean, Sidedness, StatsError, TestResult};
use crate::rng::{sample_without_replacement, substream};

/// Samples this small with no ties use the exact Mann-Whitney null distribution.
const MWU_EXACT_MAX_TOTAL: usize = 30;

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of the groups of tied values.
fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        groups.push(j);
        i += j;
    }
    groups
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_lengths(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(StatsError::InsufficientData("spearman needs two or more pairs".into()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| StatsError::InsufficientData("spearman needs variation in both inputs".into()))
}

/// Spearman's rho with a two-sided permutation p-value, `(1 + hits) / (1 + draws)`.
pub fn spearman_perm(x: &[f64], y: &[f64], draws: usize, seed: u64) -> Result<TestResult, StatsError> {
    let rho = spearman(x, y)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let hits: usize = (0..draws as u64)
        .into_par_iter()
        .map(|d| {
            let perm = sample_without_replacement(&mut substream(seed, d), ry.len(), ry.len());
            let shuffled: Vec<f64> = perm.iter().map(|&i| ry[i]).collect();
            let r = pearson(&rx, &shuffled).unwrap_or(0.0);
            usize::from(r.abs() >= rho.abs() - 1e-12)
        })
        .sum();
    let p = (1 + hits) as f64 / (1 + draws) as f64;
    Ok(TestResult::new("spearman_permutation", Some(rho), p, Sidedness::TwoSided, x.len())
        .with("draws", draws as f64))
}

/// Number of orderings giving each value of U for sample sizes `n1`, `n2` (no ties).
fn mwu_counts(n1: usize, n2: usize) -> Vec<f64> {
    // f[i][j][u]: ways for i items of sample 1 and j of sample 2 to reach U = u
    let max_u = n1 * n2;
    let mut prev: Vec<Vec<f64>> = vec![vec![0.0; max_u + 1]; n2 + 1];
    for row in prev.iter_mut() {
        row[0] = 1.0;
    }
    for _ in 0..n1 {
        let mut cur: Vec<Vec<f64>> = vec![vec![0.0; max_u + 1]; n2 + 1];
        cur[0][0] = 1.0;
        for j in 1..=n2 {
            for u in 0..=max_u {
                // largest element from sample 1 beats all j of sample 2
                let from1 = if u >= j { prev[j][u - j] } else { 0.0 };
                cur[j][u] = from1 + cur[j - 1][u];
            }
        }
        prev = cur;
    }
    prev[n2].clone()
}

/// Mann-Whitney U for `x` against `y`. `Greater` tests whether `x` tends to be larger.
///
/// Small tie-free samples use the exact null distribution; otherwise the
/// tie-corrected normal approximation with continuity correction. With zero
/// variance (every value tied) one-sided p is 0.5 and two-sided p is 1.
pub fn mann_whitney(x: &[f64], y: &[f64], sided: Sidedness) -> Result<TestResult, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::InsufficientData("mann-whitney needs two non-empty samples".into()));
    }
    let (n1, n2) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = average_ranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let ties = tie_groups(&pooled);
    let has_ties = ties.iter().any(|&t| t > 1);
    let n = (n1 + n2) as f64;

    let (p, method) = if !has_ties && n1 + n2 <= MWU_EXACT_MAX_TOTAL {
        let counts = mwu_counts(n1, n2);
        let total: f64 = counts.iter().sum();
        let u_int = u.round() as usize;
        let upper: f64 = counts[u_int..].iter().sum::<f64>() / total;
        let lower: f64 = counts[..=u_int].iter().sum::<f64>() / total;
        let p = match sided {
            Sidedness::Greater => upper,
            Sidedness::Less => lower,
            Sidedness::TwoSided => (2.0 * upper.min(lower)).min(1.0),
        };
        (p, 0.0)
    } else {
        let mu = (n1 * n2) as f64 / 2.0;
        let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
        let var = (n1 * n2) as f64 / 12.0 * ((n + 1.0) - tie_term);
        let p = if var <= 0.0 {
            match sided {
                Sidedness::TwoSided => 1.0,
                _ => 0.5,
            }
        } else {
            let sd = var.sqrt();
            let z = Normal::standard();
            match sided {
                Sidedness::Greater => z.sf((u - mu - 0.5) / sd),
                Sidedness::Less => z.cdf((u - mu + 0.5) / sd),
                Sidedness::TwoSided => (2.0 * z.sf(((u - mu).abs() - 0.5) / sd)).min(1.0),
            }
        };
        (p, 1.0)
    };
    Ok(TestResult::new("mann_whitney", Some(u), p, sided, n1 + n2)
        .with("n1", n1 as f64)
        .with("n2", n2 as f64)
        .with("normal_approximation", method))
}

pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<TestResult, StatsError> {
    if groups.len() < 2 || groups.iter().any(|g| g.is_empty()) {
        return Err(StatsError::InsufficientData("kruskal-wallis needs two or more non-empty groups".into()));
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let ranks = average_ranks(&pooled);
    let mut offset = 0;
    let mut h = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        h += r * r / g.len() as f64;
        offset += g.len();
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);
    let correction = 1.0
        - tie_groups(&pooled).iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * n * n - n);
    let df = (groups.len() - 1) as f64;
    let (h, p) = if correction <= 0.0 { (0.0, 1.0) } else { (h / correction, chi2_sf(h / correction, df)) };
    Ok(TestResult::new("kruskal_wallis", Some(h), p, Sidedness::TwoSided, pooled.len()).with("df", df))
}

/// Cochran's Q; rows are items, columns are the compared evaluators.
pub fn cochran_q(matrix: &[Vec<bool>]) -> Result<TestResult, StatsError> {
    let k = matrix.first().map_or(0, Vec::len);
    if matrix.is_empty() || k < 2 {
        return Err(StatsError::InsufficientData("cochran's q needs items and two or more columns".into()));
    }
    if let Some(bad) = matrix.iter().find(|r| r.len() != k) {
        return Err(StatsError::LengthMismatch { left: k, right: bad.len() });
    }
    let col: Vec<f64> = (0..k).map(|j| matrix.iter().filter(|r| r[j]).count() as f64).collect();
    let row: Vec<f64> = matrix.iter().map(|r| r.iter().filter(|&&v| v).count() as f64).collect();
    let total: f64 = row.iter().sum();
    let kf = k as f64;
    let num = (kf - 1.0) * (kf * col.iter().map(|c| c * c).sum::<f64>() - total * total);
    let den = kf * total - row.iter().map(|r| r * r).sum::<f64>();
    let df = kf - 1.0;
    let (q, p) = if den == 0.0 { (0.0, 1.0) } else { (num / den, chi2_sf(num / den, df)) };
    Ok(TestResult::new("cochran_q", Some(q), p, Sidedness::TwoSided, matrix.len()).with("df", df))
}

/// Two-sided one-sample t test against `reference`.
pub fn t_one_sample(x: &[f64], reference: f64) -> Result<TestResult, StatsError> {
    if x.len() < 2 {
        return Err(StatsError::InsufficientData("t test needs two or more values".into()));
    }
    let n = x.len() as f64;
    let m = mean(x);
    let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd == 0.0 {
        return Err(StatsError::InsufficientData("t test needs nonzero variance".into()));
    }
    let t = (m - reference) / (sd / n.sqrt());
    let df = n - 1.0;
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid t distribution");
    let p = 2.0 * dist.sf(t.abs());
    Ok(TestResult::new("t_one_sample", Some(t), p, Sidedness::TwoSided, x.len())
        .with("mean", m)
        .with("sd", sd)
        .with("df", df)
        .with("reference", reference))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RankTestInput {
    SpearmanPerm { x: Vec<f64>, y: Vec<f64>, draws: usize, seed: u64 },
    MannWhitney { x: Vec<f64>, y: Vec<f64>, sided: Sidedness },
    KruskalWallis { groups: Vec<Vec<f64>> },
    CochranQ { matrix: Vec<Vec<bool>> },
    TOneSample { x: Vec<f64>, reference: f64 },
}

pub fn rank_tests(input: &RankTestInput) -> Result<TestResult, StatsError> {
    match input {
        RankTestInput::SpearmanPerm { x, y, draws, seed } => spearman_perm(x, y, *draws, *seed),
        RankTestInput::MannWhitney { x, y, sided } => mann_whitney(x, y, *sided),
        RankTestInput::KruskalWallis { groups } => kruskal_wallis(groups),
        RankTestInput::CochranQ { matrix } => cochran_q(matrix),
        RankTestInput::TOneSample { x, reference } => t_one_sample(x, *reference),
    }
}
