//! Evaluation prompts bundled with the crate.

pub const EXPERT: &str = include_str!("../assets/prompts/expert.txt");
pub const SIMPLIFIED: &str = include_str!("../assets/prompts/simplified.txt");
pub const JOURNAL_ANCHORED: &str = include_str!("../assets/prompts/journal_anchored.txt");
pub const ECONOMICS: &str = include_str!("../assets/prompts/economics.txt");
/// Pitch extraction prompt, shipped for reference; nothing here calls it.
pub const EXTRACTION: &str = include_str!("../assets/prompts/extraction.txt");

pub const NAMES: [&str; 5] = ["expert", "simplified", "journal_anchored", "economics", "extraction"];

pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "expert" => Some(EXPERT),
        "simplified" => Some(SIMPLIFIED),
        "journal_anchored" => Some(JOURNAL_ANCHORED),
        "economics" => Some(ECONOMICS),
        "extraction" => Some(EXTRACTION),
        _ => None,
    }
}
