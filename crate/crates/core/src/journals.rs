//! Venue-to-tier lookup tables.
//!
//! Tables are keyed by the journal's full name after [`normalize_journal_name`];
//! ISSN/eISSN is consulted only when the name is not found. The bundled table
//! covers the 19 management and 38 economics source journals.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tiers::{LabelSource, Tier};

const BUNDLED_TABLE: &str = include_str!("../assets/journal_tiers.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Management,
    Economics,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::Management => "management",
            Field::Economics => "economics",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "management" => Ok(Field::Management),
            "economics" => Ok(Field::Economics),
            other => Err(format!("unknown field {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("unknown {field} journal {name:?}; nearest: {candidates:?}")]
    UnknownJournal {
        name: String,
        field: Field,
        candidates: Vec<String>,
    },
    #[error("journal table line {line}: {message}")]
    Schema { line: u64, message: String },
    #[error("journal {name:?} mapped to both {first} and {second}")]
    Conflict { name: String, first: Tier, second: Tier },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Deserialize)]
struct Row {
    field: String,
    journal_full_name: String,
    tier: String,
    #[serde(default)]
    issn: String,
    #[serde(default)]
    eissn: String,
}

/// Lowercase, collapse internal whitespace, strip leading/trailing punctuation.
pub fn normalize_journal_name(name: &str) -> String {
    let collapsed = name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_string()
}

fn normalize_issn(issn: &str) -> String {
    issn.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_uppercase()
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct JournalTierMap {
    by_field: BTreeMap<Field, FieldTable>,
}

#[derive(Debug, Clone, Default, Serialize)]
struct FieldTable {
    entries: BTreeMap<String, Tier>,
    display: BTreeMap<String, String>,
    secondary_keys: BTreeMap<String, Tier>,
}

impl JournalTierMap {
    /// The table shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_reader(BUNDLED_TABLE.as_bytes()).expect("bundled journal table is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, JournalError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, JournalError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let mut map = JournalTierMap::default();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let line = i as u64 + 2;
            let row = row?;
            let field = Field::from_str(&row.field)
                .map_err(|message| JournalError::Schema { line, message })?;
            let tier = parse_tier_cell(&row.tier).ok_or_else(|| JournalError::Schema {
                line,
                message: format!("bad tier {:?}", row.tier),
            })?;
            let key = normalize_journal_name(&row.journal_full_name);
            if key.is_empty() {
                return Err(JournalError::Schema {
                    line,
                    message: "empty journal name".into(),
                });
            }
            let table = map.by_field.entry(field).or_default();
            if let Some(&prev) = table.entries.get(&key) {
                if prev != tier {
                    return Err(JournalError::Conflict {
                        name: row.journal_full_name,
                        first: prev,
                        second: tier,
                    });
                }
            }
            table.entries.insert(key.clone(), tier);
            table.display.insert(key, row.journal_full_name.trim().to_string());
            for issn in [&row.issn, &row.eissn] {
                let k = normalize_issn(issn);
                if !k.is_empty() {
                    table.secondary_keys.insert(k, tier);
                }
            }
        }
        Ok(map)
    }

    pub fn len(&self, field: Field) -> usize {
        self.by_field.get(&field).map_or(0, |t| t.entries.len())
    }

    pub fn is_empty(&self) -> bool {
        self.by_field.values().all(|t| t.entries.is_empty())
    }

    /// Journals of `field` in display form, ordered by tier then name.
    pub fn journals(&self, field: Field) -> Vec<(String, Tier)> {
        let Some(table) = self.by_field.get(&field) else {
            return Vec::new();
        };
        let mut out: Vec<(String, Tier)> = table
            .entries
            .iter()
            .map(|(k, &t)| (table.display[k].clone(), t))
            .collect();
        out.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    pub fn tier_for_journal(&self, name: &str, field: Field) -> Result<Tier, JournalError> {
        self.lookup(name, None, field)
    }

    /// Name lookup with an ISSN/eISSN fallback.
    pub fn lookup(&self, name: &str, issn: Option<&str>, field: Field) -> Result<Tier, JournalError> {
        let table = self.by_field.get(&field);
        let key = normalize_journal_name(name);
        if let Some(&tier) = table.and_then(|t| t.entries.get(&key)) {
            return Ok(tier);
        }
        if let (Some(t), Some(issn)) = (table, issn) {
            if let Some(&tier) = t.secondary_keys.get(&normalize_issn(issn)) {
                return Ok(tier);
            }
        }
        Err(JournalError::UnknownJournal {
            name: name.to_string(),
            field,
            candidates: table.map(|t| nearest(&key, t)).unwrap_or_default(),
        })
    }
}

fn parse_tier_cell(cell: &str) -> Option<Tier> {
    let cell = cell.trim();
    if let Ok(code) = cell.parse::<i64>() {
        return Tier::from_code(code).ok();
    }
    crate::tiers::normalize_label(cell, LabelSource::Model).ok()
}

fn nearest(key: &str, table: &FieldTable) -> Vec<String> {
    let mut scored: Vec<(usize, &String)> = table
        .entries
        .keys()
        .map(|k| (strsim::levenshtein(key, k), k))
        .collect();
    scored.sort();
    scored
        .into_iter()
        .take(3)
        .map(|(_, k)| table.display[k].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table_sizes() {
        let map = JournalTierMap::bundled();
        assert_eq!(map.len(Field::Management), 19);
        assert_eq!(map.len(Field::Economics), 38);
    }

    #[test]
    fn lookups() {
        let map = JournalTierMap::bundled();
        assert_eq!(
            map.tier_for_journal("Academy of Management Journal", Field::Management).unwrap(),
            Tier::Exceptional
        );
        assert_eq!(
            map.tier_for_journal("Econometrica", Field::Economics).unwrap(),
            Tier::Exceptional
        );
        assert_eq!(
            map.tier_for_journal("Journal of Managerial Psychology", Field::Management).unwrap(),
            Tier::Limited
        );
        assert_eq!(
            map.tier_for_journal("  journal of   the EUROPEAN economic association.", Field::Economics)
                .unwrap(),
            Tier::Strong
        );
    }

    #[test]
    fn unknown_journal_lists_candidates() {
        let map = JournalTierMap::bundled();
        let err = map
            .tier_for_journal("Academy of Managment Journal", Field::Management)
            .unwrap_err();
        match err {
            JournalError::UnknownJournal { candidates, .. } => {
                assert_eq!(candidates[0], "Academy of Management Journal");
            }
            other => panic!("unexpected {other}"),
        }
        // no cross-field leakage
        assert!(map.tier_for_journal("Econometrica", Field::Management).is_err());
    }

    #[test]
    fn issn_fallback_only_after_name() {
        let csv = "field,journal_full_name,tier,issn,eissn\n\
                   economics,Example Review,2,1234-5678,8765-4321\n";
        let map = JournalTierMap::from_reader(csv.as_bytes()).unwrap();
        assert_eq!(
            map.lookup("Renamed Review", Some("8765-4321"), Field::Economics).unwrap(),
            Tier::Strong
        );
        assert!(map.lookup("Renamed Review", None, Field::Economics).is_err());
    }

    #[test]
    fn conflicting_rows_rejected() {
        let csv = "field,journal_full_name,tier,issn,eissn\n\
                   management,X Journal,1,,\n\
                   management,x journal,2,,\n";
        assert!(matches!(
            JournalTierMap::from_reader(csv.as_bytes()),
            Err(JournalError::Conflict { .. })
        ));
    }

    #[test]
    fn name_normalization() {
        assert_eq!(normalize_journal_name("  Human\tRelations. "), "human relations");
        assert_eq!(
            normalize_journal_name("Group & Organization Management"),
            "group & organization management"
        );
    }
}
