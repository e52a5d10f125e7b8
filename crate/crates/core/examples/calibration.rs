//! ECE, Brier decomposition and the selective-prediction curve.

use rand::Rng;
use tierbench::calibrate::{calibration_report, selective_curve, ScoredItem};
use tierbench::classify::LabelDistribution;
use tierbench::rng::seeded;
use tierbench::Tier;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = seeded(3);
    let mut dists = Vec::new();
    let mut truths = Vec::new();
    for _ in 0..400 {
        let truth = Tier::from_index(rng.random_range(0..4));
        let mut w: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.1..1.0));
        w[truth.index()] += rng.random_range(0.0..1.5);
        dists.push(LabelDistribution::from_weights(w)?);
        truths.push(truth);
    }
    let conf: Vec<f64> = dists.iter().map(|d| d.max_probability()).collect();
    let correct: Vec<bool> = dists.iter().zip(&truths).map(|(d, t)| d.argmax().0 == *t).collect();
    let report = calibration_report(&conf, &correct, Some((&dists, &truths)), 10)?;
    println!("ECE {:.4}  Brier {:.4}", report.ece, report.brier.unwrap_or(f64::NAN));
    if let Some(d) = report.brier_decomposition {
        println!("reliability {:.4} resolution {:.4} uncertainty {:.4}", d.reliability, d.resolution, d.uncertainty);
    }
    let items: Vec<ScoredItem> = conf
        .iter()
        .zip(&correct)
        .enumerate()
        .map(|(i, (&confidence, &correct))| ScoredItem { pitch_id: format!("p{i:03}"), confidence, correct })
        .collect();
    let curve = selective_curve(&items)?;
    for coverage in [0.1, 0.25, 0.5, 1.0] {
        println!("top {:>3.0}% accuracy {:.3}", coverage * 100.0, curve.accuracy_at(coverage).unwrap_or(f64::NAN));
    }
    Ok(())
}
