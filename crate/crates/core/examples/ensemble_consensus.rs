//! Probability-averaging ensembles and consensus-filtered coverage.

use std::collections::BTreeMap;

use rand::Rng;
use tierbench::aggregate::{consensus_filter, ensemble_predictions, ConsensusPolicy, EnsembleSpec};
use tierbench::classify::LabelDistribution;
use tierbench::rng::seeded;
use tierbench::Tier;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = seeded(21);
    let truths: BTreeMap<String, Tier> = (0..60).map(|i| (format!("p{i:02}"), Tier::from_index(i % 4))).collect();
    let mut members: BTreeMap<String, BTreeMap<String, LabelDistribution>> = BTreeMap::new();
    for m in ["m1", "m2", "m3", "m4"] {
        let table = truths
            .iter()
            .map(|(p, t)| {
                let mut w: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
                w[t.index()] += 0.6;
                (p.clone(), LabelDistribution::from_weights(w).unwrap())
            })
            .collect();
        members.insert(m.to_string(), table);
    }
    let accuracy = |preds: &[tierbench::classify::Prediction]| {
        preds.iter().filter(|p| truths[&p.pitch_id] == p.label).count() as f64 / preds.len() as f64
    };
    for ids in [vec!["m1"], vec!["m1", "m2"], vec!["m1", "m2", "m3", "m4"]] {
        let acc = if ids.len() == 1 {
            let preds: Vec<_> = members[ids[0]]
                .iter()
                .map(|(p, d)| tierbench::classify::Prediction::from_distribution(p.as_str(), *d))
                .collect();
            accuracy(&preds)
        } else {
            accuracy(&ensemble_predictions(&EnsembleSpec::uniform(ids.iter().copied()), &members)?.0)
        };
        println!("{ids:?}: accuracy {acc:.3}");
    }

    let per_pitch: BTreeMap<String, Vec<Tier>> = truths
        .keys()
        .map(|p| (p.clone(), members.values().map(|m| m[p].argmax().0).collect()))
        .collect();
    for policy in ["4of4", "3of4", "share:0.5"] {
        let r = consensus_filter(&per_pitch, &truths, &policy.parse::<ConsensusPolicy>()?)?;
        println!("{policy}: coverage {:.2}, accuracy {:?}", r.coverage, r.accuracy);
    }
    Ok(())
}
