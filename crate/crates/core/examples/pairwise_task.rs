//! Stratified pair construction, scoring and discordance between two judges.

use std::collections::BTreeMap;

use tierbench::ingest::{BenchmarkSet, Pitch};
use tierbench::journals::Field;
use tierbench::pairwise::{build_pairs, default_strata, discordance, score_pairs};
use tierbench::Tier;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pitches = Tier::ALL
        .iter()
        .flat_map(|&t| {
            (0..30).map(move |i| Pitch {
                id: format!("{}-{i:02}", t.name()),
                field: Field::Management,
                text_full: format!("idea {i}"),
                text_short: None,
                truth: t,
                journal: None,
                research_domain: None,
            })
        })
        .collect();
    let bench = BenchmarkSet::new("demo", pitches);
    let pairs = build_pairs(&bench, 42, &default_strata())?;
    println!("{} pairs, first {:?}", pairs.pairs.len(), pairs.pairs[0]);

    // judge a always finds the higher tier at distance 2 or more; b misses every fifth pair
    let pick = |ok: bool, p: &tierbench::pairwise::PairItem| if ok { p.pitch_high.clone() } else { p.pitch_low.clone() };
    let a: BTreeMap<String, String> =
        pairs.pairs.iter().enumerate().map(|(i, p)| (p.id.clone(), pick(p.distance > 1 || i % 3 != 0, p))).collect();
    let b: BTreeMap<String, String> = pairs.pairs.iter().enumerate().map(|(i, p)| (p.id.clone(), pick(i % 5 != 0, p))).collect();
    let score = score_pairs(&a, &pairs)?;
    for (d, t) in &score.per_distance {
        println!("distance {d}: {}/{}", t.correct, t.total);
    }
    let d = discordance(&a, &b, &pairs)?;
    println!("a only {}, b only {}, exact McNemar p {:.4}", d.a_only, d.b_only, d.mcnemar.p);
    Ok(())
}
