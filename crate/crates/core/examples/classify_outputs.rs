//! Turning label log-probabilities and sampled completions into predictions.

use tierbench::classify::{aggregate_runs, classify_logprob, majority_accuracy, parse_label_text, pitch_mean_accuracy, LabelLogprobs};
use tierbench::Tier;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lp: LabelLogprobs = [(Tier::Strong, -0.9), (Tier::Fair, -0.9), (Tier::Limited, -3.0)].into_iter().collect();
    let p = classify_logprob("pitch-1", &lp)?;
    println!("label {:?} confidence {:.3} tie broken {}", p.label, p.confidence, p.tie_broken);

    let texts = ["Fair", "**Strong**", "tier: fair", "I would say limited", "Fair.", "unclear", "Strong", "Fair"];
    let parsed: Vec<Option<Tier>> = texts.iter().map(|t| parse_label_text(t).tier()).collect();
    println!("parsed {parsed:?}");
    let agg = aggregate_runs("pitch-1", &parsed, Tier::Fair)?;
    println!("majority {:?}, {} of {} runs correct", agg.majority, agg.n_correct, agg.n_runs);

    let truths = [("pitch-1".to_string(), Tier::Fair)].into_iter().collect();
    let (acc, n) = majority_accuracy(std::slice::from_ref(&agg), &truths);
    println!("pitch-mean {:.3}, majority {acc:?} over {n} non-tied", pitch_mean_accuracy(&[agg]));
    Ok(())
}
