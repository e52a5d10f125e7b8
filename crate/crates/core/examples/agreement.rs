//! Agreement among evaluators: Fleiss, Krippendorff and pairwise Cohen.

use std::collections::BTreeMap;

use tierbench::stats::{agreement_report, kappa_from_agreement};
use tierbench::Tier;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let labels = |codes: &[u8]| -> BTreeMap<String, Tier> {
        codes.iter().enumerate().map(|(i, &c)| (format!("p{i}"), Tier::from_code(i64::from(c)).unwrap())).collect()
    };
    let evaluators: BTreeMap<String, BTreeMap<String, Tier>> = [
        ("a".to_string(), labels(&[1, 2, 3, 4, 2, 3, 3, 1, 4, 2])),
        ("b".to_string(), labels(&[1, 2, 3, 3, 2, 3, 4, 2, 4, 2])),
        ("c".to_string(), labels(&[2, 2, 3, 4, 1, 3, 3, 1, 4, 3])),
    ]
    .into_iter()
    .collect();
    let report = agreement_report(&evaluators);
    println!("{}", serde_json::to_string_pretty(&report)?);

    // kappa from a published agreement rate and the two marginal distributions
    let k = kappa_from_agreement(0.708, &[0.300, 0.200, 0.317, 0.183], &[0.342, 0.225, 0.258, 0.175])?;
    println!("kappa from marginals {k:.3}");
    Ok(())
}
