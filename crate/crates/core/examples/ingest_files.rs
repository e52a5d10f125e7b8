//! Loading and validating benchmark, prediction and rating files.

use tierbench::ingest::{assemble_balanced, load_benchmark, load_predictions, load_ratings, panel_labels, Panel, RatingFilter};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let mut bench = String::new();
    let mut ratings = String::new();
    for (i, tier) in ["exceptional", "strong", "fair", "limited"].iter().cycle().take(24).enumerate() {
        bench += &format!("{{\"id\":\"p{i:02}\",\"field\":\"management\",\"text_full\":\"idea {i}\",\"truth\":\"{tier}\"}}\n");
        for r in 0..3 {
            let (panel, secs) = if r == 2 { ("junior", 20) } else { ("expert", 90) };
            ratings += &format!(
                "{{\"rater_id\":\"r{r}\",\"panel\":\"{panel}\",\"pitch_id\":\"p{i:02}\",\"tier\":\"{tier}\",\"confidence\":4,\"familiarity\":3,\"seconds_spent\":{secs}}}\n"
            );
        }
    }
    std::fs::write(dir.path().join("bench.jsonl"), bench)?;
    std::fs::write(dir.path().join("ratings.jsonl"), ratings)?;
    std::fs::write(
        dir.path().join("preds.jsonl"),
        "{\"evaluator_id\":\"m\",\"pitch_id\":\"p00\",\"kind\":\"logprob\",\"label_logprobs\":{\"strong\":-0.4,\"fair\":-1.3}}\n",
    )?;

    let set = load_benchmark(&dir.path().join("bench.jsonl"))?;
    println!("benchmark {} with {} pitches, {:?} per tier", set.id, set.len(), set.per_tier_count);
    let preds = load_predictions(&dir.path().join("preds.jsonl"))?;
    println!("prediction {:?}", preds[0].prediction());
    let load = load_ratings(&dir.path().join("ratings.jsonl"), Some(&RatingFilter::default()))?;
    println!("{} ratings kept, excluded raters {:?}", load.records.len(), load.excluded_raters);
    println!("{} pitches with expert labels", panel_labels(&load.records, Panel::Expert).len());
    let small = assemble_balanced("small", &set.pitches, 2, 7)?;
    println!("balanced draw: {:?}", small.pitches.iter().map(|p| &p.id).collect::<Vec<_>>());

    match load_benchmark(&dir.path().join("ratings.jsonl")) {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("rejected as expected: {e}"),
    }
    Ok(())
}
