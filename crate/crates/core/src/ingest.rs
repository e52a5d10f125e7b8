//! JSON Lines readers and writers for pitches, predictions and human ratings.
//!
//! One record per line. Blank lines are skipped; every error names its line.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::{likert_to_unit, CalibrationError, HasConfidence};
use crate::classify::{
    aggregate_runs, parse_label_text, softmax_labels, LabelDistribution, LabelLogprobs, Prediction, RunAggregate,
};
use crate::journals::Field;
use crate::rng::{sample_without_replacement, substream};
use crate::tiers::{normalize_label, LabelSource, Tier};

/// Average seconds per pitch below which a junior rater is dropped when filtering.
pub const DEFAULT_MIN_MEAN_SECONDS: f64 = 60.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Schema { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: duplicate pitch id {id:?}")]
    DuplicatePitchId { path: PathBuf, line: usize, id: String },
    #[error("{0}: no records")]
    EmptyFile(PathBuf),
    #[error("{path}:{line}: {field} = {value} is outside 1..=5")]
    OutOfRangeLikert { path: PathBuf, line: usize, field: &'static str, value: i64 },
    #[error("tier {tier} has {available} pitches, {needed} needed")]
    InsufficientTier { tier: Tier, available: usize, needed: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pitch {
    pub id: String,
    pub field: Field,
    pub text_full: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_short: Option<String>,
    pub truth: Tier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub journal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub research_domain: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSet {
    pub id: String,
    pub pitches: Vec<Pitch>,
    /// Pitches per tier when every tier has the same count.
    pub per_tier_count: Option<usize>,
    pub chance: f64,
}

impl BenchmarkSet {
    pub fn new(id: impl Into<String>, pitches: Vec<Pitch>) -> Self {
        let mut counts = [0usize; 4];
        for p in &pitches {
            counts[p.truth.index()] += 1;
        }
        let per_tier_count = counts.iter().all(|&c| c == counts[0]).then_some(counts[0]);
        Self { id: id.into(), pitches, per_tier_count, chance: 0.25 }
    }

    pub fn len(&self) -> usize {
        self.pitches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pitches.is_empty()
    }

    pub fn truths(&self) -> BTreeMap<String, Tier> {
        self.pitches.iter().map(|p| (p.id.clone(), p.truth)).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Pitch> {
        self.pitches.iter().find(|p| p.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionKind {
    Logprob,
    Sampled,
    LabelOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub raw_text: String,
    pub parsed: Option<Tier>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRecord {
    pub evaluator_id: String,
    pub pitch_id: String,
    pub kind: PredictionKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distribution: Option<LabelDistribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<Vec<RunRecord>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<Tier>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl PredictionRecord {
    /// Single-label view; `None` for sampled records.
    pub fn prediction(&self) -> Option<Prediction> {
        match self.kind {
            PredictionKind::Logprob => self.distribution.map(|d| Prediction::from_distribution(&self.pitch_id, d)),
            PredictionKind::LabelOnly => self.label.map(|label| Prediction {
                pitch_id: self.pitch_id.clone(),
                label,
                distribution: None,
                confidence: self.confidence.unwrap_or(f64::NAN),
                tie_broken: false,
            }),
            PredictionKind::Sampled => None,
        }
    }

    /// Per-pitch run summary for sampled records.
    pub fn run_aggregate(&self, truth: Tier) -> Option<RunAggregate> {
        let runs: Vec<Option<Tier>> = self.runs.as_ref()?.iter().map(|r| r.parsed).collect();
        aggregate_runs(&self.pitch_id, &runs, truth).ok()
    }
}

/// Wire form: a logprob record may carry `label_logprobs` instead of a distribution.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrediction {
    evaluator_id: String,
    pitch_id: String,
    kind: PredictionKind,
    #[serde(default)]
    distribution: Option<LabelDistribution>,
    #[serde(default)]
    label_logprobs: Option<LabelLogprobs>,
    #[serde(default)]
    runs: Option<Vec<RawRun>>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    confidence: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct RawRun {
    raw_text: String,
    #[serde(default)]
    parsed: Option<Option<Tier>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Panel {
    Expert,
    Junior,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RaterRecord {
    pub rater_id: String,
    pub panel: Panel,
    pub pitch_id: String,
    pub tier: Tier,
    pub confidence: u8,
    pub familiarity: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior_exposure: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds_spent: Option<f64>,
}

impl HasConfidence for RaterRecord {
    fn confidence(&self) -> Result<f64, CalibrationError> {
        likert_to_unit(self.confidence)
    }
}

/// Wire form: `tier` holds a canonical tier name, `label` the survey shorthand.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRating {
    rater_id: String,
    panel: Panel,
    pitch_id: String,
    #[serde(default)]
    tier: Option<String>,
    #[serde(default)]
    label: Option<String>,
    confidence: i64,
    familiarity: i64,
    #[serde(default)]
    prior_exposure: Option<bool>,
    #[serde(default)]
    seconds_spent: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPitch {
    id: String,
    field: Field,
    text_full: String,
    #[serde(default)]
    text_short: Option<String>,
    truth: String,
    #[serde(default)]
    journal: Option<String>,
    #[serde(default)]
    research_domain: Option<String>,
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| IngestError::Io { path: path.to_path_buf(), source })
}

/// Parse every non-blank line, handing `(line_number, record)` to `f`.
fn read_jsonl<T, F>(path: &Path, mut f: F) -> Result<usize, IngestError>
where
    T: DeserializeOwned,
    F: FnMut(usize, T) -> Result<(), IngestError>,
{
    let mut count = 0;
    for (i, line) in open(path)?.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| IngestError::Schema {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        f(line_no, record)?;
        count += 1;
    }
    Ok(count)
}

/// Write records as JSON Lines.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), IngestError> {
    let io = |source| IngestError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn schema(path: &Path, line: usize, message: impl Into<String>) -> IngestError {
    IngestError::Schema { path: path.to_path_buf(), line, message: message.into() }
}

pub fn load_benchmark(path: &Path) -> Result<BenchmarkSet, IngestError> {
    let mut pitches = Vec::new();
    let mut seen = BTreeSet::new();
    read_jsonl(path, |line, raw: RawPitch| {
        let truth = normalize_label(&raw.truth, LabelSource::Model).map_err(|e| schema(path, line, e.to_string()))?;
        if raw.text_full.trim().is_empty() {
            return Err(schema(path, line, "text_full is empty"));
        }
        if !seen.insert(raw.id.clone()) {
            return Err(IngestError::DuplicatePitchId { path: path.to_path_buf(), line, id: raw.id });
        }
        pitches.push(Pitch {
            id: raw.id,
            field: raw.field,
            text_full: raw.text_full,
            text_short: raw.text_short,
            truth,
            journal: raw.journal,
            research_domain: raw.research_domain,
        });
        Ok(())
    })?;
    if pitches.is_empty() {
        return Err(IngestError::EmptyFile(path.to_path_buf()));
    }
    let id = path.file_stem().map_or_else(|| "benchmark".to_string(), |s| s.to_string_lossy().into_owned());
    Ok(BenchmarkSet::new(id, pitches))
}

fn convert_prediction(path: &Path, line: usize, raw: RawPrediction) -> Result<PredictionRecord, IngestError> {
    let err = |m: String| schema(path, line, m);
    if raw.distribution.is_some() && raw.label_logprobs.is_some() {
        return Err(err("give either distribution or label_logprobs, not both".into()));
    }
    let distribution = match raw.label_logprobs {
        Some(lp) => Some(softmax_labels(&lp).map_err(|e| err(e.to_string()))?),
        None => raw.distribution,
    };
    let label = raw
        .label
        .as_deref()
        .map(|l| normalize_label(l, LabelSource::Model))
        .transpose()
        .map_err(|e| err(e.to_string()))?;
    let runs: Option<Vec<RunRecord>> = raw.runs.map(|runs| {
        runs.into_iter()
            .map(|r| RunRecord {
                parsed: r.parsed.unwrap_or_else(|| parse_label_text(&r.raw_text).tier()),
                raw_text: r.raw_text,
            })
            .collect()
    });
    let populated = [distribution.is_some(), runs.is_some(), label.is_some()];
    let expected = match raw.kind {
        PredictionKind::Logprob => [true, false, false],
        PredictionKind::Sampled => [false, true, false],
        PredictionKind::LabelOnly => [false, false, true],
    };
    if populated != expected {
        return Err(err(format!(
            "{:?} record must populate exactly one of distribution/runs/label matching its kind",
            raw.kind
        )));
    }
    if runs.as_ref().is_some_and(Vec::is_empty) {
        return Err(err("sampled record has no runs".into()));
    }
    if let Some(c) = raw.confidence {
        if !(0.0..=1.0).contains(&c) {
            return Err(err(format!("confidence {c} outside [0, 1]")));
        }
    }
    Ok(PredictionRecord {
        evaluator_id: raw.evaluator_id,
        pitch_id: raw.pitch_id,
        kind: raw.kind,
        distribution,
        runs,
        label,
        confidence: raw.confidence,
    })
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>, IngestError> {
    let mut out = Vec::new();
    read_jsonl(path, |line, raw: serde_json::Value| {
        // collection headers carry run metadata, not predictions
        if raw.get("_header").is_some() {
            return Ok(());
        }
        let raw: RawPrediction = serde_json::from_value(raw).map_err(|e| schema(path, line, e.to_string()))?;
        out.push(convert_prediction(path, line, raw)?);
        Ok(())
    })?;
    if out.is_empty() {
        return Err(IngestError::EmptyFile(path.to_path_buf()));
    }
    Ok(out)
}

/// `(evaluator_id, pitch_id)` pairs whose pitch is not in the benchmark.
pub fn unknown_pitches(records: &[PredictionRecord], benchmark: &BenchmarkSet) -> Vec<(String, String)> {
    let known: BTreeSet<&str> = benchmark.pitches.iter().map(|p| p.id.as_str()).collect();
    records
        .iter()
        .filter(|r| !known.contains(r.pitch_id.as_str()))
        .map(|r| (r.evaluator_id.clone(), r.pitch_id.clone()))
        .collect()
}

/// Records grouped by evaluator, keeping only pitches in the benchmark. Dropped
/// records are logged with their count.
pub fn by_evaluator<'a>(
    records: &'a [PredictionRecord],
    benchmark: &BenchmarkSet,
) -> BTreeMap<String, Vec<&'a PredictionRecord>> {
    let known: BTreeSet<&str> = benchmark.pitches.iter().map(|p| p.id.as_str()).collect();
    let mut out: BTreeMap<String, Vec<&PredictionRecord>> = BTreeMap::new();
    let mut dropped = 0;
    for r in records {
        if known.contains(r.pitch_id.as_str()) {
            out.entry(r.evaluator_id.clone()).or_default().push(r);
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} prediction records reference pitches outside benchmark {}", benchmark.id);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingFilter {
    /// Junior raters averaging fewer seconds per pitch than this are excluded.
    pub min_mean_seconds: f64,
}

impl Default for RatingFilter {
    fn default() -> Self {
        Self { min_mean_seconds: DEFAULT_MIN_MEAN_SECONDS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatingsLoad {
    pub records: Vec<RaterRecord>,
    pub excluded_raters: Vec<String>,
}

pub fn load_ratings(path: &Path, filter: Option<&RatingFilter>) -> Result<RatingsLoad, IngestError> {
    let mut records = Vec::new();
    read_jsonl(path, |line, raw: RawRating| {
        let tier = match (&raw.tier, &raw.label) {
            (Some(t), None) => normalize_label(t, LabelSource::Model),
            (None, Some(l)) => normalize_label(l, LabelSource::HumanSurvey),
            _ => return Err(schema(path, line, "give exactly one of tier (canonical name) or label (survey shorthand)")),
        }
        .map_err(|e| schema(path, line, e.to_string()))?;
        let likert = |field: &'static str, value: i64| -> Result<u8, IngestError> {
            if (1..=5).contains(&value) {
                Ok(value as u8)
            } else {
                Err(IngestError::OutOfRangeLikert { path: path.to_path_buf(), line, field, value })
            }
        };
        records.push(RaterRecord {
            confidence: likert("confidence", raw.confidence)?,
            familiarity: likert("familiarity", raw.familiarity)?,
            rater_id: raw.rater_id,
            panel: raw.panel,
            pitch_id: raw.pitch_id,
            tier,
            prior_exposure: raw.prior_exposure,
            seconds_spent: raw.seconds_spent,
        });
        Ok(())
    })?;
    if records.is_empty() {
        return Err(IngestError::EmptyFile(path.to_path_buf()));
    }
    let excluded_raters = match filter {
        Some(f) => fast_junior_raters(&records, f.min_mean_seconds),
        None => Vec::new(),
    };
    if !excluded_raters.is_empty() {
        log::info!("excluded {} junior raters below the time threshold", excluded_raters.len());
        records.retain(|r| !excluded_raters.contains(&r.rater_id));
    }
    Ok(RatingsLoad { records, excluded_raters })
}

/// Junior raters whose mean recorded time per pitch is under the threshold.
/// Raters with no timings are kept.
fn fast_junior_raters(records: &[RaterRecord], min_mean_seconds: f64) -> Vec<String> {
    let mut times: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.panel == Panel::Junior) {
        if let Some(s) = r.seconds_spent {
            let e = times.entry(&r.rater_id).or_default();
            e.0 += s;
            e.1 += 1;
        }
    }
    times
        .into_iter()
        .filter(|(_, (total, n))| total / (*n as f64) < min_mean_seconds)
        .map(|(id, _)| id.to_string())
        .collect()
}

/// Pitch → the tiers assigned by one panel.
pub fn panel_labels(records: &[RaterRecord], panel: Panel) -> BTreeMap<String, Vec<(String, Tier)>> {
    let mut out: BTreeMap<String, Vec<(String, Tier)>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.panel == panel) {
        out.entry(r.pitch_id.clone()).or_default().push((r.rater_id.clone(), r.tier));
    }
    out
}

/// Seeded balanced draw of `per_tier` pitches from each tier. The pool is
/// sorted by id first, so its order does not matter.
pub fn assemble_balanced(
    id: &str,
    pool: &[Pitch],
    per_tier: usize,
    seed: u64,
) -> Result<BenchmarkSet, IngestError> {
    let mut sorted: Vec<&Pitch> = pool.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut chosen = Vec::new();
    for tier in Tier::ALL {
        let members: Vec<&Pitch> = sorted.iter().copied().filter(|p| p.truth == tier).collect();
        if members.len() < per_tier {
            return Err(IngestError::InsufficientTier { tier, available: members.len(), needed: per_tier });
        }
        let mut rng = substream(seed, tier.index() as u64);
        chosen.extend(
            sample_without_replacement(&mut rng, members.len(), per_tier)
                .into_iter()
                .map(|i| members[i].clone()),
        );
    }
    chosen.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(BenchmarkSet::new(id, chosen))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    fn pitch_line(id: &str, truth: &str) -> String {
        format!(r#"{{"id":"{id}","field":"management","text_full":"A question about {id}.","truth":"{truth}"}}"#)
    }

    #[test]
    fn benchmark_loading() {
        let tiers = ["exceptional", "strong", "fair", "limited"];
        let lines: Vec<String> = (0..8).map(|i| pitch_line(&format!("p{i}"), tiers[i % 4])).collect();
        let f = file(&lines.iter().map(String::as_str).collect::<Vec<_>>());
        let b = load_benchmark(f.path()).unwrap();
        assert_eq!(b.len(), 8);
        assert_eq!(b.per_tier_count, Some(2));
        assert_eq!(b.chance, 0.25);

        let dup = file(&[&pitch_line("a", "fair"), &pitch_line("a", "strong")]);
        assert!(matches!(load_benchmark(dup.path()), Err(IngestError::DuplicatePitchId { line: 2, .. })));
        let bad = file(&[&pitch_line("a", "great")]);
        assert!(matches!(load_benchmark(bad.path()), Err(IngestError::Schema { line: 1, .. })));
        let empty = file(&[""]);
        assert!(matches!(load_benchmark(empty.path()), Err(IngestError::EmptyFile(_))));
    }

    #[test]
    fn prediction_kinds() {
        let f = file(&[
            r#"{"evaluator_id":"m","pitch_id":"p1","kind":"logprob","label_logprobs":{"exceptional":-1.0,"strong":-2.0,"fair":-3.0,"limited":-4.0}}"#,
            r#"{"evaluator_id":"m","pitch_id":"p2","kind":"sampled","runs":[{"raw_text":"Strong"},{"raw_text":"**fair**"},{"raw_text":"strong"},{"raw_text":"hmm"},{"raw_text":"strong"},{"raw_text":"strong"},{"raw_text":"fair"},{"raw_text":"strong"}]}"#,
            r#"{"evaluator_id":"h","pitch_id":"p3","kind":"label_only","label":"Limited","confidence":0.5}"#,
        ]);
        let recs = load_predictions(f.path()).unwrap();
        assert_eq!(recs[0].prediction().unwrap().label, Tier::Exceptional);
        assert!((recs[0].distribution.unwrap().get(Tier::Exceptional) - 0.6439).abs() < 1e-4);
        let runs = recs[1].runs.as_ref().unwrap();
        assert_eq!(runs.len(), 8);
        assert_eq!(runs[3].parsed, None);
        let agg = recs[1].run_aggregate(Tier::Strong).unwrap();
        assert_eq!((agg.n_correct, agg.majority), (5, Some(Tier::Strong)));
        assert_eq!(recs[2].label, Some(Tier::Limited));

        let both = file(&[
            r#"{"evaluator_id":"m","pitch_id":"p1","kind":"logprob","distribution":{"exceptional":1.0,"strong":0.0,"fair":0.0,"limited":0.0},"label":"strong"}"#,
        ]);
        assert!(matches!(load_predictions(both.path()), Err(IngestError::Schema { .. })));
    }

    #[test]
    fn ratings_and_filter() {
        let f = file(&[
            r#"{"rater_id":"j1","panel":"junior","pitch_id":"p1","label":"Top-","confidence":3,"familiarity":2,"seconds_spent":30}"#,
            r#"{"rater_id":"j1","panel":"junior","pitch_id":"p2","label":"Fair","confidence":3,"familiarity":2,"seconds_spent":40}"#,
            r#"{"rater_id":"j2","panel":"junior","pitch_id":"p1","tier":"fair","confidence":4,"familiarity":2,"seconds_spent":200}"#,
            r#"{"rater_id":"e1","panel":"expert","pitch_id":"p1","label":"Top","confidence":5,"familiarity":5,"seconds_spent":10}"#,
        ]);
        let all = load_ratings(f.path(), None).unwrap();
        assert_eq!(all.records.len(), 4);
        assert_eq!(all.records[0].tier, Tier::Strong);
        assert_eq!(all.records[1].tier, Tier::Limited);
        assert_eq!(all.records[2].tier, Tier::Fair);
        let filtered = load_ratings(f.path(), Some(&RatingFilter::default())).unwrap();
        assert_eq!(filtered.excluded_raters, vec!["j1"]);
        assert_eq!(filtered.records.len(), 2);

        let bad = file(&[r#"{"rater_id":"x","panel":"expert","pitch_id":"p","label":"Top","confidence":6,"familiarity":1}"#]);
        assert!(matches!(
            load_ratings(bad.path(), None),
            Err(IngestError::OutOfRangeLikert { field: "confidence", value: 6, .. })
        ));
    }

    fn pool(counts: [usize; 4]) -> Vec<Pitch> {
        let mut out = Vec::new();
        for (t, &n) in counts.iter().enumerate() {
            for i in 0..n {
                out.push(Pitch {
                    id: format!("{t}-{i:03}"),
                    field: Field::Economics,
                    text_full: "q".into(),
                    text_short: None,
                    truth: Tier::from_index(t),
                    journal: None,
                    research_domain: None,
                });
            }
        }
        out
    }

    #[test]
    fn balanced_assembly() {
        let p = pool([40; 4]);
        let b = assemble_balanced("b", &p, 30, 7).unwrap();
        assert_eq!(b.len(), 120);
        assert_eq!(b.per_tier_count, Some(30));
        let mut reversed = p.clone();
        reversed.reverse();
        let again = assemble_balanced("b", &reversed, 30, 7).unwrap();
        assert_eq!(b, again);
        assert!(matches!(
            assemble_balanced("b", &pool([10, 40, 40, 40]), 30, 7),
            Err(IngestError::InsufficientTier { tier: Tier::Exceptional, .. })
        ));
    }

    #[test]
    fn round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let pitches = pool([2; 4]);
        let path = dir.path().join("pitches.jsonl");
        write_jsonl(&path, &pitches).unwrap();
        assert_eq!(load_benchmark(&path).unwrap().pitches, pitches);

        let preds = vec![
            PredictionRecord {
                evaluator_id: "m".into(),
                pitch_id: "0-000".into(),
                kind: PredictionKind::Logprob,
                distribution: Some(LabelDistribution::from_weights([0.1, 0.2, 0.3, 0.4]).unwrap()),
                runs: None,
                label: None,
                confidence: None,
            },
            PredictionRecord {
                evaluator_id: "m".into(),
                pitch_id: "0-001".into(),
                kind: PredictionKind::Sampled,
                distribution: None,
                runs: Some(vec![
                    RunRecord { raw_text: "fair".into(), parsed: Some(Tier::Fair) },
                    RunRecord { raw_text: "??".into(), parsed: None },
                ]),
                label: None,
                confidence: None,
            },
        ];
        let path = dir.path().join("preds.jsonl");
        write_jsonl(&path, &preds).unwrap();
        let loaded = load_predictions(&path).unwrap();
        assert_eq!(loaded, preds);
        write_jsonl(&path, &loaded).unwrap();
        assert_eq!(load_predictions(&path).unwrap(), preds);

        let ratings = vec![RaterRecord {
            rater_id: "r".into(),
            panel: Panel::Expert,
            pitch_id: "p".into(),
            tier: Tier::Limited,
            confidence: 4,
            familiarity: 3,
            prior_exposure: Some(false),
            seconds_spent: Some(93.5),
        }];
        let path = dir.path().join("ratings.jsonl");
        write_jsonl(&path, &ratings).unwrap();
        assert_eq!(load_ratings(&path, None).unwrap().records, ratings);
    }
}
