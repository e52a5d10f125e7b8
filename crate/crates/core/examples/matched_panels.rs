//! Majority-vote accuracy of randomly drawn rater panels, plus a bootstrap interval.

use std::collections::BTreeMap;

use rand::Rng;
use tierbench::rng::seeded;
use tierbench::stats::{bootstrap_ci, matched_n_subsample};
use tierbench::Tier;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = seeded(8);
    let mut ratings: BTreeMap<String, Vec<(String, Tier)>> = BTreeMap::new();
    let mut truths = BTreeMap::new();
    for p in 0..40 {
        let truth = Tier::from_index(p % 4);
        truths.insert(format!("p{p}"), truth);
        let raters = rng.random_range(3..8);
        let panel = (0..raters)
            .map(|r| {
                let label = if rng.random_bool(0.45) { truth } else { Tier::from_index(rng.random_range(0..4)) };
                (format!("r{r}"), label)
            })
            .collect();
        ratings.insert(format!("p{p}"), panel);
    }
    for target in [1.0, 3.0, 5.0] {
        let r = matched_n_subsample(&ratings, &truths, target, 2000, 0.95, 1)?;
        println!(
            "{target} raters/pitch: accuracy {:.3} [{:.3}, {:.3}], mean non-tied N {:.1}",
            r.mean_accuracy, r.ci.0, r.ci.1, r.mean_effective_n
        );
    }
    let single: Vec<f64> = ratings.iter().map(|(p, rs)| f64::from(u8::from(rs[0].1 == truths[p]))).collect();
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let (lo, hi) = bootstrap_ci(&single, mean, 5000, 0.95, 2)?;
    println!("first rater accuracy {:.3}, bootstrap [{lo:.3}, {hi:.3}]", mean(&single));
    Ok(())
}
