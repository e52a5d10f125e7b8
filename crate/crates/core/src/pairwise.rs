//! Stratified head-to-head pairs and their scoring.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{self, BenchmarkSet, IngestError};
use crate::rng::{index_below, sample_without_replacement, seeded};
use crate::stats::{mcnemar_counts, McNemarMode, TestResult};
use crate::tiers::Tier;

#[derive(Debug, Error)]
pub enum PairwiseError {
    #[error("distance {distance}: {requested} pairs requested, {available} available")]
    InsufficientPairs { distance: u8, requested: usize, available: usize },
    #[error("tier distance {0} is not in 1..=3")]
    BadDistance(u8),
    #[error("pair {pair_id}: chosen pitch {pitch_id} is not in the pair")]
    ForeignPitchId { pair_id: String, pitch_id: String },
    #[error("unknown pair id {0}")]
    UnknownPairId(String),
    #[error("unknown pair type {0:?}")]
    BadPairType(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Unordered tier combination, named `lowtier_hightier` (e.g. `fair_strong`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairType {
    pub low: Tier,
    pub high: Tier,
}

impl PairType {
    pub fn new(a: Tier, b: Tier) -> Option<Self> {
        match a.code().cmp(&b.code()) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(Self { low: a, high: b }),
            std::cmp::Ordering::Less => Some(Self { low: b, high: a }),
        }
    }

    pub fn distance(self) -> u8 {
        self.low.ordinal_distance(self.high)
    }

    /// The pair types at a tier distance, best tiers first.
    pub fn at_distance(d: u8) -> Vec<PairType> {
        Tier::ALL
            .iter()
            .filter_map(|&high| {
                let low = Tier::from_code(i64::from(high.code() + d)).ok()?;
                Some(PairType { low, high })
            })
            .collect()
    }
}

impl fmt::Display for PairType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.low, self.high)
    }
}

impl FromStr for PairType {
    type Err = PairwiseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PairwiseError::BadPairType(s.to_string());
        let (l, h) = s.split_once('_').ok_or_else(bad)?;
        let (low, high) = (l.parse::<Tier>().map_err(|_| bad())?, h.parse::<Tier>().map_err(|_| bad())?);
        match PairType::new(low, high) {
            Some(t) if t.low == low => Ok(t),
            _ => Err(bad()),
        }
    }
}

impl Serialize for PairType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PairType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresentedOrder {
    LowFirst,
    HighFirst,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairItem {
    pub id: String,
    pub pitch_low: String,
    pub pitch_high: String,
    pub distance: u8,
    pub pair_type: PairType,
    pub presented_order: PresentedOrder,
}

impl PairItem {
    /// Pitch ids in the order shown to the evaluator.
    pub fn presented(&self) -> (&str, &str) {
        match self.presented_order {
            PresentedOrder::LowFirst => (&self.pitch_low, &self.pitch_high),
            PresentedOrder::HighFirst => (&self.pitch_high, &self.pitch_low),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSet {
    pub seed: u64,
    pub pairs: Vec<PairItem>,
}

impl PairSet {
    pub fn get(&self, id: &str) -> Option<&PairItem> {
        self.pairs.iter().find(|p| p.id == id)
    }

    pub fn save(&self, path: &Path) -> Result<(), PairwiseError> {
        Ok(ingest::write_jsonl(path, &self.pairs)?)
    }

    pub fn load(path: &Path) -> Result<Self, PairwiseError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            pairs.push(serde_json::from_str(line).map_err(|e| IngestError::Schema {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(Self { seed: 0, pairs })
    }
}

pub fn default_strata() -> BTreeMap<u8, usize> {
    [(1, 150), (2, 100), (3, 50)].into_iter().collect()
}

/// Split `count` across types as evenly as capacity allows; leftover units go to
/// types with spare capacity, chosen by seeded draw.
fn allocate<R: Rng>(rng: &mut R, count: usize, capacity: &[usize]) -> Vec<usize> {
    let k = capacity.len();
    let base = count / k;
    let mut alloc: Vec<usize> = capacity.iter().map(|&c| c.min(base)).collect();
    let mut leftover = count - alloc.iter().sum::<usize>();
    while leftover > 0 {
        // at most one extra per type per round keeps the split even
        let mut open: Vec<usize> = (0..k).filter(|&i| alloc[i] < capacity[i]).collect();
        let min_alloc = open.iter().map(|&i| alloc[i]).min().unwrap_or(0);
        open.retain(|&i| alloc[i] == min_alloc);
        let take = leftover.min(open.len());
        for pick in sample_without_replacement(rng, open.len(), take) {
            alloc[open[pick]] += 1;
        }
        leftover -= take;
    }
    alloc
}

/// Seeded stratified pair set. Pairs within a stratum are spread as evenly as
/// possible over its pair types; presentation order is a seeded coin flip.
pub fn build_pairs(
    benchmark: &BenchmarkSet,
    seed: u64,
    strata: &BTreeMap<u8, usize>,
) -> Result<PairSet, PairwiseError> {
    let mut by_tier: [Vec<&str>; 4] = Default::default();
    for p in &benchmark.pitches {
        by_tier[p.truth.index()].push(&p.id);
    }
    for ids in by_tier.iter_mut() {
        ids.sort_unstable();
    }
    let mut rng = seeded(seed);
    let mut pairs = Vec::new();
    for (&d, &count) in strata {
        if !(1..=3).contains(&d) {
            return Err(PairwiseError::BadDistance(d));
        }
        let types = PairType::at_distance(d);
        let capacity: Vec<usize> =
            types.iter().map(|t| by_tier[t.low.index()].len() * by_tier[t.high.index()].len()).collect();
        let available: usize = capacity.iter().sum();
        if count > available {
            return Err(PairwiseError::InsufficientPairs { distance: d, requested: count, available });
        }
        let alloc = allocate(&mut rng, count, &capacity);
        for ((t, &n), &cap) in types.iter().zip(&alloc).zip(&capacity) {
            let lows = &by_tier[t.low.index()];
            let highs = &by_tier[t.high.index()];
            let mut picked = sample_without_replacement(&mut rng, cap, n);
            picked.sort_unstable();
            for flat in picked {
                pairs.push((lows[flat / highs.len()], highs[flat % highs.len()], *t));
            }
        }
    }
    let items = pairs
        .into_iter()
        .enumerate()
        .map(|(i, (low, high, t))| PairItem {
            id: format!("pair-{:04}", i + 1),
            pitch_low: low.to_string(),
            pitch_high: high.to_string(),
            distance: t.distance(),
            pair_type: t,
            presented_order: if index_below(&mut rng, 2) == 0 { PresentedOrder::LowFirst } else { PresentedOrder::HighFirst },
        })
        .collect();
    Ok(PairSet { seed, pairs: items })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }

    fn add(&mut self, ok: bool) {
        self.total += 1;
        self.correct += usize::from(ok);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairScore {
    pub per_distance: BTreeMap<u8, Tally>,
    pub per_type: BTreeMap<String, Tally>,
    pub overall: Tally,
}

/// Per-pair correctness; a missing choice is incorrect.
fn correctness(choices: &BTreeMap<String, String>, pairs: &PairSet) -> Result<Vec<bool>, PairwiseError> {
    for id in choices.keys() {
        if pairs.get(id).is_none() {
            return Err(PairwiseError::UnknownPairId(id.clone()));
        }
    }
    pairs
        .pairs
        .iter()
        .map(|p| match choices.get(&p.id) {
            None => Ok(false),
            Some(c) if *c == p.pitch_high => Ok(true),
            Some(c) if *c == p.pitch_low => Ok(false),
            Some(c) => Err(PairwiseError::ForeignPitchId { pair_id: p.id.clone(), pitch_id: c.clone() }),
        })
        .collect()
}

/// Scores choices against the pair set. Choosing `pitch_high` is correct.
pub fn score_pairs(choices: &BTreeMap<String, String>, pairs: &PairSet) -> Result<PairScore, PairwiseError> {
    let flags = correctness(choices, pairs)?;
    let mut score = PairScore { per_distance: BTreeMap::new(), per_type: BTreeMap::new(), overall: Tally::default() };
    for (p, ok) in pairs.pairs.iter().zip(flags) {
        score.per_distance.entry(p.distance).or_default().add(ok);
        score.per_type.entry(p.pair_type.to_string()).or_default().add(ok);
        score.overall.add(ok);
    }
    Ok(score)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discordance {
    pub a_only: usize,
    pub b_only: usize,
    pub both: usize,
    pub neither: usize,
    pub mcnemar: TestResult,
}

pub fn discordance(
    choices_a: &BTreeMap<String, String>,
    choices_b: &BTreeMap<String, String>,
    pairs: &PairSet,
) -> Result<Discordance, PairwiseError> {
    let a = correctness(choices_a, pairs)?;
    let b = correctness(choices_b, pairs)?;
    let count = |f: fn(bool, bool) -> bool| a.iter().zip(&b).filter(|(x, y)| f(**x, **y)).count();
    let a_only = count(|x, y| x && !y);
    let b_only = count(|x, y| !x && y);
    let mut mcnemar = mcnemar_counts(a_only as u64, b_only as u64, McNemarMode::Exact);
    mcnemar.n = pairs.pairs.len();
    Ok(Discordance {
        a_only,
        b_only,
        both: count(|x, y| x && y),
        neither: count(|x, y| !x && !y),
        mcnemar,
    })
}

#[derive(Debug, Deserialize, Serialize)]
struct ChoiceLine {
    pair_id: String,
    chosen: String,
}

/// Choice files hold one `{"pair_id", "chosen"}` object per line.
pub fn load_choices(path: &Path) -> Result<BTreeMap<String, String>, PairwiseError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let c: ChoiceLine = serde_json::from_str(line).map_err(|e| IngestError::Schema {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.insert(c.pair_id, c.chosen);
    }
    Ok(out)
}

pub fn save_choices(path: &Path, choices: &BTreeMap<String, String>) -> Result<(), PairwiseError> {
    let lines: Vec<ChoiceLine> =
        choices.iter().map(|(p, c)| ChoiceLine { pair_id: p.clone(), chosen: c.clone() }).collect();
    Ok(ingest::write_jsonl(path, &lines)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Pitch;
    use crate::journals::Field;
    use proptest::prelude::*;

    pub(crate) fn balanced(per_tier: usize) -> BenchmarkSet {
        let pitches = Tier::ALL
            .iter()
            .flat_map(|&t| {
                (0..per_tier).map(move |i| Pitch {
                    id: format!("{}-{i:02}", t.name()),
                    field: Field::Management,
                    text_full: "q".into(),
                    text_short: None,
                    truth: t,
                    journal: None,
                    research_domain: None,
                })
            })
            .collect();
        BenchmarkSet::new("bench", pitches)
    }

    fn all_high(pairs: &PairSet) -> BTreeMap<String, String> {
        pairs.pairs.iter().map(|p| (p.id.clone(), p.pitch_high.clone())).collect()
    }

    #[test]
    fn type_names() {
        let d1: Vec<String> = PairType::at_distance(1).iter().map(ToString::to_string).collect();
        assert_eq!(d1, ["strong_exceptional", "fair_strong", "limited_fair"]);
        assert_eq!(PairType::at_distance(3)[0].to_string(), "limited_exceptional");
        assert_eq!("fair_strong".parse::<PairType>().unwrap().distance(), 1);
        assert!("strong_fair".parse::<PairType>().is_err());
    }

    #[test]
    fn default_build() {
        let b = balanced(30);
        let set = build_pairs(&b, 32, &default_strata()).unwrap();
        assert_eq!(set.pairs.len(), 300);
        let mut per_d = BTreeMap::new();
        let mut per_t: BTreeMap<String, usize> = BTreeMap::new();
        for p in &set.pairs {
            *per_d.entry(p.distance).or_insert(0) += 1;
            *per_t.entry(p.pair_type.to_string()).or_default() += 1;
        }
        assert_eq!(per_d, default_strata());
        assert_eq!(per_t["fair_strong"], 50);
        assert_eq!(per_t["limited_strong"], 50);
        assert_eq!(per_t["limited_exceptional"], 50);
        let truths = b.truths();
        for p in &set.pairs {
            assert_eq!(PairType::new(truths[&p.pitch_low], truths[&p.pitch_high]), Some(p.pair_type));
        }
        let again = build_pairs(&b, 32, &default_strata()).unwrap();
        assert_eq!(serde_json::to_string(&set).unwrap(), serde_json::to_string(&again).unwrap());
        let mut dedup: Vec<(&str, &str)> = set.pairs.iter().map(|p| (p.pitch_low.as_str(), p.pitch_high.as_str())).collect();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 300);
    }

    #[test]
    fn insufficient_pairs() {
        let b = balanced(30);
        let strata = [(3u8, 901usize)].into_iter().collect();
        assert!(matches!(
            build_pairs(&b, 1, &strata),
            Err(PairwiseError::InsufficientPairs { distance: 3, requested: 901, available: 900 })
        ));
        let full = [(3u8, 900usize)].into_iter().collect();
        assert_eq!(build_pairs(&b, 1, &full).unwrap().pairs.len(), 900);
    }

    #[test]
    fn uneven_remainder_is_spread() {
        let b = balanced(10);
        let strata = [(1u8, 151usize)].into_iter().collect();
        let set = build_pairs(&b, 3, &strata).unwrap();
        let mut per_t: BTreeMap<String, usize> = BTreeMap::new();
        for p in &set.pairs {
            *per_t.entry(p.pair_type.to_string()).or_default() += 1;
        }
        let mut counts: Vec<usize> = per_t.values().copied().collect();
        counts.sort();
        assert_eq!(counts, vec![50, 50, 51]);
    }

    #[test]
    fn scoring() {
        let set = build_pairs(&balanced(30), 5, &default_strata()).unwrap();
        let s = score_pairs(&all_high(&set), &set).unwrap();
        assert_eq!(s.overall, Tally { correct: 300, total: 300 });

        // 118 of 150 at distance 1 and 253 of 300 overall
        let mut choices = all_high(&set);
        let d1: Vec<&PairItem> = set.pairs.iter().filter(|p| p.distance == 1).collect();
        for p in d1.iter().take(32) {
            choices.insert(p.id.clone(), p.pitch_low.clone());
        }
        let rest: Vec<&PairItem> = set.pairs.iter().filter(|p| p.distance > 1).collect();
        for p in rest.iter().take(15) {
            choices.remove(&p.id);
        }
        let s = score_pairs(&choices, &set).unwrap();
        assert_eq!(s.per_distance[&1], Tally { correct: 118, total: 150 });
        assert!((s.per_distance[&1].accuracy().unwrap() * 100.0 - 78.67).abs() < 0.005);
        assert_eq!(s.overall, Tally { correct: 253, total: 300 });
        assert!((s.overall.accuracy().unwrap() * 100.0 - 84.33).abs() < 0.005);

        let mut foreign = BTreeMap::new();
        foreign.insert(set.pairs[0].id.clone(), "nope".to_string());
        assert!(matches!(score_pairs(&foreign, &set), Err(PairwiseError::ForeignPitchId { .. })));
        let mut unknown = BTreeMap::new();
        unknown.insert("pair-9999".to_string(), "x".to_string());
        assert!(matches!(score_pairs(&unknown, &set), Err(PairwiseError::UnknownPairId(_))));
    }

    #[test]
    fn discordance_counts() {
        let set = build_pairs(&balanced(5), 9, &[(1u8, 20usize)].into_iter().collect()).unwrap();
        let same = all_high(&set);
        let d = discordance(&same, &same, &set).unwrap();
        assert_eq!((d.a_only, d.b_only, d.both), (0, 0, 20));
        assert_eq!(d.mcnemar.p, 1.0);

        // a right on every pair; b right on pairs 0, 3, 6, ...
        let b: BTreeMap<String, String> = set
            .pairs
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.clone(), if i % 3 == 0 { p.pitch_high.clone() } else { p.pitch_low.clone() }))
            .collect();
        let d = discordance(&same, &b, &set).unwrap();
        assert_eq!((d.a_only, d.b_only, d.both, d.neither), (13, 0, 7, 0));
        assert!((d.mcnemar.p - 2.0 * 0.5f64.powi(13)).abs() < 1e-15);
    }

    #[test]
    fn jsonl_round_trip() {
        let set = build_pairs(&balanced(6), 2, &[(1u8, 12usize), (2, 6)].into_iter().collect()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        set.save(&path).unwrap();
        assert_eq!(PairSet::load(&path).unwrap().pairs, set.pairs);
        let choices = all_high(&set);
        let cpath = dir.path().join("choices.jsonl");
        save_choices(&cpath, &choices).unwrap();
        assert_eq!(load_choices(&cpath).unwrap(), choices);
    }

    proptest! {
        #[test]
        fn order_never_affects_scoring(seed in any::<u64>(), flips in proptest::collection::vec(any::<bool>(), 40)) {
            let mut set = build_pairs(&balanced(8), seed, &[(1u8, 20usize), (2, 12), (3, 8)].into_iter().collect()).unwrap();
            let choices: BTreeMap<String, String> = set.pairs.iter().zip(&flips)
                .map(|(p, &f)| (p.id.clone(), if f { p.pitch_high.clone() } else { p.pitch_low.clone() }))
                .collect();
            let before = score_pairs(&choices, &set).unwrap();
            for p in set.pairs.iter_mut() {
                p.presented_order = match p.presented_order {
                    PresentedOrder::LowFirst => PresentedOrder::HighFirst,
                    PresentedOrder::HighFirst => PresentedOrder::LowFirst,
                };
            }
            prop_assert_eq!(score_pairs(&choices, &set).unwrap(), before.clone());
            let sum: usize = before.per_distance.values().map(|t| t.total).sum();
            prop_assert_eq!(sum, before.overall.total);
        }
    }
}
