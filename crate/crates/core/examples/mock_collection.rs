//! Collecting predictions through the offline transport, with caching and resume.

use tierbench::collect::{collect_benchmark, Cache, Client, CollectMode, CollectOptions, EndpointConfig, MockTransport};
use tierbench::ingest::{BenchmarkSet, Pitch};
use tierbench::journals::Field;
use tierbench::{prompts, Tier};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let prompt = dir.path().join("expert.txt");
    std::fs::write(&prompt, prompts::EXPERT)?;
    let pitches = (0..8)
        .map(|i| Pitch {
            id: format!("p{i}"),
            field: Field::Economics,
            text_full: format!("A study of idea number {i}."),
            text_short: None,
            truth: Tier::from_index(i % 4),
            journal: None,
            research_domain: None,
        })
        .collect();
    let bench = BenchmarkSet::new("mock", pitches);
    let endpoint = EndpointConfig {
        base_url: "http://localhost:0/v1".into(),
        model_name: "offline".into(),
        requests_per_minute: 0,
        ..EndpointConfig::default()
    };
    let tokens = vec![("Fair".to_string(), -0.6), ("Strong".to_string(), -1.2), ("Limited".to_string(), -2.5)];
    for (run, mode) in [CollectMode::Logprob, CollectMode::Sampled, CollectMode::Sampled].into_iter().enumerate() {
        let mock = MockTransport::scripted(tokens.clone());
        let client = Client::new(endpoint.clone(), &mock, Cache::open(&dir.path().join("cache"))?)?;
        // a fresh output file each run, so the third run is served from the cache
        let out = dir.path().join(format!("run{run}.jsonl"));
        let opts = CollectOptions { mode, ..CollectOptions::default() };
        let summary = collect_benchmark(&client, &prompt, &bench, &opts, &out)?;
        println!("{mode:?}: {} records, {} network calls, {:?}", summary.records, mock.call_count(), summary.stats);
    }
    Ok(())
}
