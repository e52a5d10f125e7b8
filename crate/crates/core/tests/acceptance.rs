//! Acceptance criteria, one check per criterion. Runs without the test
//! harness so the per-criterion lines always print.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use serde_json::{json, Map};
use sha2::{Digest, Sha256};

use tierbench::calibrate::{brier, brier_decomposition, ece};
use tierbench::classify::{softmax_labels, LabelDistribution, LabelLogprobs};
use tierbench::collect::{
    self, fetch_logprobs, match_label_token, mock_logprob_response, parse_logprob_response, Cache, Client,
    CollectError, CollectMode, CollectOptions, EndpointConfig, MockTransport, TextField,
};
use tierbench::ingest::{load_benchmark, load_predictions, BenchmarkSet, Pitch};
use tierbench::journals::Field;
use tierbench::metrics::{confusion, evaluate};
use tierbench::pairwise::{build_pairs, default_strata, score_pairs, PairSet};
use tierbench::rlsim::{
    finite_difference_gradient, near_clip_boundary, normalize_advantages, relative_error, rescore, reward,
    toy_loss_and_grad, toy_rollout, ClipParams, RewardSpec, ToyPolicy, MAX_POSITIONS,
};
use tierbench::rng::seeded;
use tierbench::stats::{
    bootstrap_ci, cohen_kappa, draw_panels, fleiss_kappa, fleiss_kappa_codes, kappa_from_agreement,
    krippendorff_alpha, krippendorff_alpha_ordinal, matched_n_subsample, mcnemar_counts, MeasurementLevel,
    McNemarMode,
};
use tierbench::{headroom, Tier};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn close(got: f64, want: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((got - want).abs() <= tol, format!("{what}: got {got}, want {want} ± {tol}"))
}

fn pitch(id: String, truth: Tier) -> Pitch {
    Pitch {
        text_full: format!("pitch {id}"),
        id,
        field: Field::Management,
        text_short: None,
        truth,
        journal: None,
        research_domain: None,
    }
}

fn balanced(per_tier: usize) -> BenchmarkSet {
    let pitches = Tier::ALL
        .iter()
        .flat_map(|&t| (0..per_tier).map(move |i| pitch(format!("{}-{i:03}", t.name()), t)))
        .collect();
    BenchmarkSet::new("balanced", pitches)
}

fn c1_confusion_fixture() -> Check {
    // rows are truths, columns predictions; diagonal and column sums are the fixture
    let grid: [[usize; 4]; 4] = [[6, 10, 14, 0], [3, 18, 9, 0], [2, 13, 15, 0], [3, 8, 19, 0]];
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut bench = String::new();
    let mut preds = String::new();
    for (r, row) in grid.iter().enumerate() {
        let mut k = 0;
        for (c, &n) in row.iter().enumerate() {
            for _ in 0..n {
                let id = format!("t{r}-{k:02}");
                k += 1;
                bench += &format!(
                    "{}\n",
                    json!({"id": id, "field": "management", "text_full": "x", "truth": Tier::from_index(r).name()})
                );
                preds += &format!(
                    "{}\n",
                    json!({"evaluator_id": "m", "pitch_id": id, "kind": "label_only", "label": Tier::from_index(c).name()})
                );
            }
        }
    }
    fs::write(dir.path().join("bench.jsonl"), bench).map_err(|e| e.to_string())?;
    fs::write(dir.path().join("preds.jsonl"), preds).map_err(|e| e.to_string())?;
    let b = load_benchmark(&dir.path().join("bench.jsonl")).map_err(|e| e.to_string())?;
    let recs = load_predictions(&dir.path().join("preds.jsonl")).map_err(|e| e.to_string())?;
    let truths = b.truths();
    let p: Vec<Tier> = recs.iter().map(|r| r.label.expect("label record")).collect();
    let t: Vec<Tier> = recs.iter().map(|r| truths[&r.pitch_id]).collect();
    let report = evaluate(&p, &t, 0.25, None).map_err(|e| e.to_string())?;
    ensure(report.accuracy == 39.0 / 120.0, format!("accuracy {}", report.accuracy))?;
    close(report.macro_f1, 0.268, 0.001, "macro-F1")?;
    let counts: Vec<u64> = Tier::ALL.iter().map(|t| report.predicted_counts[t]).collect();
    ensure(counts == [14, 49, 57, 0], format!("predicted counts {counts:?}"))?;
    ensure(confusion(&p, &t).map_err(|e| e.to_string())?.trace() == 39, "trace")?;
    Ok(format!("accuracy {:.3}%, macro-F1 {:.4}, counts {counts:?}", report.accuracy * 100.0, report.macro_f1))
}

fn c2_headroom() -> Check {
    let cases = [(0.608, 47.8), (0.311, 8.1), (0.416, 22.1)];
    let mut got = Vec::new();
    let mut misses = Vec::new();
    for (acc, reported) in cases {
        let h = headroom(acc, 0.25).map_err(|e| e.to_string())? * 100.0;
        got.push(format!("{acc} -> {h:.3}"));
        if (h - reported).abs() > 0.05 {
            misses.push(format!("{acc}: {h:.3} vs reported {reported}"));
        }
    }
    if misses.is_empty() {
        Ok(got.join(", "))
    } else {
        Err(format!("outside ±0.05 pp: {}", misses.join("; ")))
    }
}

fn c3_cohen_marginals() -> Check {
    let a = [0.300, 0.200, 0.317, 0.183];
    let b = [0.342, 0.225, 0.258, 0.175];
    let pe: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    close(pe, 0.2614, 5e-5, "chance agreement")?;
    let k = kappa_from_agreement(0.708, &a, &b).map_err(|e| e.to_string())?;
    close(k, 0.605, 0.002, "kappa")?;
    Ok(format!("kappa {k:.4}, p_e {pe:.4}"))
}

fn c4_mcnemar() -> Check {
    let mut out = Vec::new();
    for (b, c, stat, p) in [(38, 14, 10.173, 0.001425), (32, 13, 7.200, 0.00729)] {
        let r = mcnemar_counts(b, c, McNemarMode::ContinuityCorrected);
        let s = r.statistic.ok_or("no statistic")?;
        close(s, stat, 0.001, "statistic")?;
        close(r.p, p, 5e-5, "p")?;
        out.push(format!("({b},{c}) chi2 {s:.3} p {:.6}", r.p));
    }
    Ok(out.join(", "))
}

struct GradCase {
    policy: ToyPolicy,
    group: tierbench::rlsim::GroupRollout,
    adv: Vec<f64>,
    clip: ClipParams,
}

fn grad_case(seed: u64) -> GradCase {
    let mut rng = seeded(seed ^ 0xACCE);
    let feats = vec!["x".to_string(), "y".to_string()];
    let positions = rng.random_range(1..=MAX_POSITIONS);
    let mut reference = ToyPolicy::default().with_positions(positions);
    for f in &feats {
        for p in 0..positions {
            reference.set(f, p, std::array::from_fn(|_| rng.random_range(-2.0..2.0)));
        }
    }
    let g = rng.random_range(2..=16);
    let mut group = toy_rollout(&reference, "q", &feats, g, seed, None).expect("rollout");
    group.assign_rewards(Tier::from_index(rng.random_range(0..4)), &RewardSpec::default());
    let mut adv = normalize_advantages(&group.rewards(), 1e-8).expect("advantages");
    if adv.iter().all(|a| *a == 0.0) {
        adv = (0..g).map(|_| rng.random_range(-2.0..2.0)).collect();
    }
    let mut policy = reference;
    for v in policy.logits.values_mut() {
        for x in v.iter_mut() {
            *x += rng.random_range(-0.5..0.5);
        }
    }
    let clip = ClipParams {
        epsilon: rng.random_range(0.05..0.4),
        epsilon_higher: rng.random_range(0.0..0.3),
        sigma_floor: 1e-8,
    };
    GradCase { policy, group, adv, clip }
}

fn c5_gradient_check() -> Check {
    let (mut checked, mut skipped, mut worst, mut seed) = (0, 0, 0.0f64, 0u64);
    let mut sizes = BTreeSet::new();
    let mut widths = BTreeSet::new();
    while checked < 120 {
        seed += 1;
        let c = grad_case(seed);
        if near_clip_boundary(&c.policy, &c.group, &c.clip, 1e-3) {
            skipped += 1;
            continue;
        }
        let (_, analytic) = toy_loss_and_grad(&c.policy, &c.group, &c.adv, &c.clip).map_err(|e| e.to_string())?;
        let numeric =
            finite_difference_gradient(&c.policy, &c.group, &c.adv, &c.clip, 1e-5).map_err(|e| e.to_string())?;
        let err = relative_error(&analytic, &numeric);
        ensure(err < 1e-4, format!("seed {seed}: relative error {err:e}"))?;
        worst = worst.max(err);
        sizes.insert(c.group.outputs.len());
        widths.insert(c.group.outputs[0].tokens.len());
        checked += 1;
    }
    ensure(sizes.contains(&2) && sizes.contains(&16), format!("group sizes covered {sizes:?}"))?;
    ensure(widths.len() == MAX_POSITIONS, format!("token counts covered {widths:?}"))?;
    Ok(format!("{checked} configs, worst relative error {worst:.2e}, {skipped} skipped near a clip edge"))
}

fn c6_advantage_vanishing() -> Check {
    let mut worst = 0.0f64;
    for seed in 0..200 {
        let mut c = grad_case(seed);
        let r = [0.0, 0.3, 1.0][seed as usize % 3];
        for o in &mut c.group.outputs {
            o.reward = r;
        }
        rescore(&c.policy, &mut c.group);
        let adv = normalize_advantages(&c.group.rewards(), 1e-8).map_err(|e| e.to_string())?;
        let (_, grad) = toy_loss_and_grad(&c.policy, &c.group, &adv, &c.clip).map_err(|e| e.to_string())?;
        let m = adv.iter().chain(grad.values().flatten()).fold(0.0f64, |m, x| m.max(x.abs()));
        worst = worst.max(m);
    }
    ensure(worst < 1e-12, format!("max |value| {worst:e}"))?;
    Ok(format!("200 groups, max |advantage or gradient| {worst:e}"))
}

fn c7_reward_cases() -> Check {
    let spec = RewardSpec::default();
    let mut seen = BTreeSet::new();
    for l in Tier::ALL {
        for r in Tier::ALL {
            for t in Tier::ALL {
                let got = reward(l, r, t, &spec);
                let want = match (l == r, (l.code() as i8 - t.code() as i8).abs()) {
                    (false, _) => 0.0,
                    (true, 0) => 1.0,
                    (true, 1) => 0.3,
                    (true, _) => 0.0,
                };
                ensure(got == want, format!("({l:?},{r:?},{t:?}) gave {got}, want {want}"))?;
                seen.insert(got.to_bits());
            }
        }
    }
    ensure(seen.len() == 3, "range is not {0, 0.3, 1}")?;
    Ok("64 triples match the gated distance cases".into())
}

fn c8_pairwise() -> Check {
    let bench = balanced(30);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = build_pairs(&bench, 7, &default_strata()).map_err(|e| e.to_string())?;
    let b = build_pairs(&bench, 7, &default_strata()).map_err(|e| e.to_string())?;
    let (pa, pb) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    a.save(&pa).map_err(|e| e.to_string())?;
    b.save(&pb).map_err(|e| e.to_string())?;
    let bytes = fs::read(&pa).map_err(|e| e.to_string())?;
    ensure(bytes == fs::read(&pb).map_err(|e| e.to_string())?, "two builds differ")?;
    let digest = hex::encode(Sha256::digest(&bytes));
    ensure(digest == PAIRS_SEED7_SHA256, format!("pair file digest {digest}"))?;
    let mut per = BTreeMap::new();
    for p in &a.pairs {
        *per.entry(p.distance).or_insert(0) += 1;
    }
    ensure(per == BTreeMap::from([(1, 150), (2, 100), (3, 50)]), format!("strata {per:?}"))?;

    let set = PairSet::load(&pa).map_err(|e| e.to_string())?;
    // 118 of 150 at distance 1 and 135 of 150 beyond
    let mut wrong_left = BTreeMap::from([(1u8, 32usize), (2, 10), (3, 5)]);
    let choices: BTreeMap<String, String> = set
        .pairs
        .iter()
        .map(|p| {
            let w = wrong_left.get_mut(&p.distance).expect("known distance");
            let pick = if *w > 0 {
                *w -= 1;
                &p.pitch_low
            } else {
                &p.pitch_high
            };
            (p.id.clone(), pick.clone())
        })
        .collect();
    let s = score_pairs(&choices, &set).map_err(|e| e.to_string())?;
    let overall = s.overall.accuracy().ok_or("empty")? * 100.0;
    let d1 = s.per_distance[&1].accuracy().ok_or("empty")? * 100.0;
    ensure(s.overall.correct == 253 && s.per_distance[&1].correct == 118, "tallies")?;
    ensure(format!("{overall:.2}") == "84.33", format!("overall {overall}"))?;
    ensure(format!("{d1:.2}") == "78.67", format!("distance 1 {d1}"))?;
    Ok(format!("strata {per:?}, overall {overall:.2}%, distance-1 {d1:.2}%"))
}

/// SHA-256 of the seed-7 pair file for the balanced 120-pitch fixture.
const PAIRS_SEED7_SHA256: &str = "88a45f1986964c8d85b7a6a64d2244e890edf65ca6cab7739439c08e49313003";

fn c9_calibration() -> Check {
    let uniform = vec![LabelDistribution::uniform(); 12];
    let truths: Vec<Tier> = (0..12).map(|i| Tier::from_index(i % 4)).collect();
    let b = brier(&uniform, &truths).map_err(|e| e.to_string())?;
    ensure(b == 0.75, format!("uniform Brier {b}"))?;

    let (e, _) = ece(&[0.8; 4], &[true, true, true, false], 10).map_err(|e| e.to_string())?;
    close(e, 0.05, 1e-12, "single-bin ECE")?;

    let mut rng = seeded(99);
    let conf: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.25..1.0)).collect();
    let correct: Vec<bool> = conf.iter().map(|&c| rng.random::<f64>() < c).collect();
    let (sim, _) = ece(&conf, &correct, 10).map_err(|e| e.to_string())?;
    ensure(sim < 0.02, format!("calibrated generator ECE {sim}"))?;

    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..60);
        let dists: Vec<LabelDistribution> = (0..n)
            .map(|_| LabelDistribution::from_weights(std::array::from_fn(|_| rng.random_range(0.01..1.0))).unwrap())
            .collect();
        let t: Vec<Tier> = (0..n).map(|_| Tier::from_index(rng.random_range(0..4))).collect();
        let whole = brier(&dists, &t).map_err(|e| e.to_string())?;
        let d = brier_decomposition(&dists, &t, rng.random_range(1..15)).map_err(|e| e.to_string())?;
        worst = worst.max((whole - (d.reliability - d.resolution + d.uncertainty)).abs());
    }
    ensure(worst < 1e-9, format!("decomposition residual {worst:e}"))?;
    Ok(format!("Brier 0.75, ECE {e:.15}, simulated ECE {sim:.4}, decomposition residual {worst:.1e}"))
}

fn fleiss_oracle(items: &[Vec<usize>]) -> f64 {
    let items: Vec<&Vec<usize>> = items.iter().filter(|v| v.len() >= 2).collect();
    let mut p_bar = 0.0;
    let mut all = Vec::new();
    for it in &items {
        let (mut agree, mut pairs) = (0.0, 0.0);
        for i in 0..it.len() {
            for j in 0..it.len() {
                if i != j {
                    pairs += 1.0;
                    agree += f64::from(u8::from(it[i] == it[j]));
                }
            }
        }
        p_bar += agree / pairs;
        all.extend(it.iter().copied());
    }
    p_bar /= items.len() as f64;
    let n = all.len() as f64;
    let p_e: f64 = (0..4).map(|c| (all.iter().filter(|&&x| x == c).count() as f64 / n).powi(2)).sum();
    (p_bar - p_e) / (1.0 - p_e)
}

fn cohen_oracle(a: &[Tier], b: &[Tier]) -> f64 {
    let n = a.len() as f64;
    let p_o = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut p_e = 0.0;
    for x in a {
        for y in b {
            p_e += f64::from(u8::from(x == y));
        }
    }
    p_e /= n * n;
    (p_o - p_e) / (1.0 - p_e)
}

/// Alpha from its pair definition: observed disagreement over within-unit
/// pairs against expected disagreement over all pairs of pairable values.
fn alpha_oracle(units: &[Vec<i64>], level: MeasurementLevel) -> f64 {
    let units: Vec<&Vec<i64>> = units.iter().filter(|u| u.len() >= 2).collect();
    let pool: Vec<i64> = units.iter().flat_map(|u| u.iter().copied()).collect();
    let n = pool.len() as f64;
    let count = |v: i64| pool.iter().filter(|&&x| x == v).count() as f64;
    let delta = |a: i64, b: i64| -> f64 {
        match level {
            MeasurementLevel::Nominal => f64::from(u8::from(a != b)),
            MeasurementLevel::Interval => ((a - b) as f64).powi(2),
            MeasurementLevel::Ordinal => {
                let (lo, hi) = (a.min(b), a.max(b));
                let between: f64 = pool.iter().filter(|&&x| x >= lo && x <= hi).count() as f64;
                (between - (count(a) + count(b)) / 2.0).powi(2)
            }
        }
    };
    let mut d_o = 0.0;
    for u in &units {
        let m = u.len() as f64;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j {
                    d_o += delta(u[i], u[j]) / (m - 1.0);
                }
            }
        }
    }
    d_o /= n;
    let mut d_e = 0.0;
    for i in 0..pool.len() {
        for j in 0..pool.len() {
            if i != j {
                d_e += delta(pool[i], pool[j]);
            }
        }
    }
    d_e /= n * (n - 1.0);
    1.0 - d_o / d_e
}

fn c10_agreement() -> Check {
    let perfect: BTreeMap<String, Vec<Tier>> =
        (0..8).map(|i| (format!("p{i}"), vec![Tier::from_index(i % 4); 3])).collect();
    let k = fleiss_kappa(&perfect).map_err(|e| e.to_string())?.kappa;
    ensure(k == 1.0, format!("perfect agreement kappa {k}"))?;
    let split: BTreeMap<String, Vec<Tier>> =
        (0..2).map(|i| (format!("p{i}"), vec![Tier::Exceptional, Tier::Strong])).collect();
    let k = fleiss_kappa(&split).map_err(|e| e.to_string())?.kappa;
    close(k, -1.0, 1e-12, "split kappa")?;

    // four observers, twelve units, values 1..5, blanks omitted
    let reference: Vec<Vec<i64>> = vec![
        vec![1, 1, 1],
        vec![2, 2, 3, 2],
        vec![3, 3, 3, 3],
        vec![3, 3, 3, 3],
        vec![2, 2, 2, 2],
        vec![1, 2, 3, 4],
        vec![4, 4, 4, 4],
        vec![1, 1, 2, 1],
        vec![2, 2, 2, 2],
        vec![5, 5, 5],
        vec![1, 1],
        vec![3],
    ];
    let mut worked = Vec::new();
    for (level, published) in
        [(MeasurementLevel::Nominal, 0.743), (MeasurementLevel::Ordinal, 0.815), (MeasurementLevel::Interval, 0.849)]
    {
        let got = krippendorff_alpha(&reference, level).map_err(|e| e.to_string())?;
        close(got, alpha_oracle(&reference, level), 1e-6, "reference alpha vs pair oracle")?;
        close(got, published, 5e-4, "reference alpha vs published three-decimal value")?;
        worked.push(format!("{got:.4}"));
    }

    let mut rng = seeded(2024);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n_items = rng.random_range(3..9);
        let items: Vec<Vec<usize>> = (0..n_items)
            .map(|_| {
                let r = rng.random_range(2..6);
                (0..r).map(|_| rng.random_range(0..4)).collect()
            })
            .collect();
        let by_pitch: BTreeMap<String, Vec<Tier>> = items
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("p{i}"), v.iter().map(|&c| Tier::from_index(c)).collect()))
            .collect();
        let units: Vec<Vec<i64>> = items.iter().map(|v| v.iter().map(|&c| c as i64 + 1).collect()).collect();
        if let Ok(f) = fleiss_kappa_codes(&items, 4) {
            worst = worst.max((f.kappa - fleiss_oracle(&items)).abs());
        }
        if let Ok(a) = krippendorff_alpha_ordinal(&by_pitch) {
            worst = worst.max((a - alpha_oracle(&units, MeasurementLevel::Ordinal)).abs());
        }
        let a: Vec<Tier> = items.iter().map(|v| Tier::from_index(v[0])).collect();
        let b: Vec<Tier> = items.iter().map(|v| Tier::from_index(v[1])).collect();
        if let Ok(c) = cohen_kappa(&a, &b) {
            worst = worst.max((c - cohen_oracle(&a, &b)).abs());
        }
    }
    ensure(worst < 1e-9, format!("brute-force gap {worst:e}"))?;
    Ok(format!("reference alpha nominal/ordinal/interval {}, random gap {worst:.1e}", worked.join("/")))
}

fn majority_correct(labels: &[Tier], truth: Tier) -> Option<bool> {
    let mut counts = [0usize; 4];
    for l in labels {
        counts[l.index()] += 1;
    }
    let top = *counts.iter().max()?;
    let winners: Vec<usize> = (0..4).filter(|&i| counts[i] == top).collect();
    (winners.len() == 1).then(|| winners[0] == truth.index())
}

fn combos(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    (k - 1..n)
        .flat_map(|last| {
            combos(last, k - 1).into_iter().map(move |mut c| {
                c.push(last);
                c
            })
        })
        .collect()
}

fn c11_resampling() -> Check {
    use Tier::*;
    let data: Vec<f64> = (0..60).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let b1 = bootstrap_ci(&data, mean, 10_000, 0.95, 5).map_err(|e| e.to_string())?;
    let b2 = bootstrap_ci(&data, mean, 10_000, 0.95, 5).map_err(|e| e.to_string())?;
    ensure(b1.0.to_bits() == b2.0.to_bits() && b1.1.to_bits() == b2.1.to_bits(), "bootstrap not bit-identical")?;

    let rater = |r: &str, t: Tier| (r.to_string(), t);
    let ratings: BTreeMap<String, Vec<(String, Tier)>> = BTreeMap::from([
        ("a".into(), vec![rater("r1", Strong), rater("r2", Strong), rater("r3", Fair), rater("r4", Limited)]),
        ("b".into(), vec![rater("r1", Fair), rater("r2", Exceptional), rater("r5", Fair)]),
        ("c".into(), vec![rater("r3", Limited), rater("r4", Strong), rater("r5", Limited), rater("r6", Strong), rater("r7", Fair)]),
    ]);
    let truths = BTreeMap::from([("a".to_string(), Strong), ("b".to_string(), Fair), ("c".to_string(), Limited)]);
    let seed = 11;
    let r1 = matched_n_subsample(&ratings, &truths, 3.0, 5_000, 0.95, seed).map_err(|e| e.to_string())?;
    let r2 = matched_n_subsample(&ratings, &truths, 3.0, 5_000, 0.95, seed).map_err(|e| e.to_string())?;
    ensure(r1.per_draw == r2.per_draw && r1.mean_accuracy.to_bits() == r2.mean_accuracy.to_bits(), "subsample not bit-identical")?;

    // exhaustive table: each pitch's 3-rater panels and their majority outcome
    let table: BTreeMap<&str, BTreeMap<Vec<usize>, Option<bool>>> = ratings
        .iter()
        .map(|(p, rs)| {
            let outcomes = combos(rs.len(), 3.min(rs.len()))
                .into_iter()
                .map(|c| {
                    let labels: Vec<Tier> = c.iter().map(|&i| rs[i].1).collect();
                    (c, majority_correct(&labels, truths[p]))
                })
                .collect();
            (p.as_str(), outcomes)
        })
        .collect();
    let score = |choice: &[(&str, Vec<usize>)]| -> Option<f64> {
        let votes: Vec<bool> = choice.iter().filter_map(|(p, c)| table[p][c]).collect();
        (!votes.is_empty()).then(|| votes.iter().filter(|v| **v).count() as f64 / votes.len() as f64)
    };
    for (d, outcome) in r1.per_draw.iter().enumerate() {
        let panels = draw_panels(&ratings, 3, seed, d as u64);
        let choice: Vec<(&str, Vec<usize>)> = panels
            .into_iter()
            .map(|(p, mut c)| {
                c.sort_unstable();
                (p, c)
            })
            .collect();
        let want = score(&choice);
        ensure(outcome.accuracy == want, format!("draw {d}: {:?} vs enumeration {want:?}", outcome.accuracy))?;
    }
    let mut exhaustive = Vec::new();
    let ca: Vec<&Vec<usize>> = table["a"].keys().collect();
    let cb: Vec<&Vec<usize>> = table["b"].keys().collect();
    let cc: Vec<&Vec<usize>> = table["c"].keys().collect();
    for a in &ca {
        for b in &cb {
            for c in &cc {
                exhaustive.extend(score(&[("a", (*a).clone()), ("b", (*b).clone()), ("c", (*c).clone())]));
            }
        }
    }
    let exact = exhaustive.iter().sum::<f64>() / exhaustive.len() as f64;
    let sd = (exhaustive.iter().map(|x| (x - exact).powi(2)).sum::<f64>() / exhaustive.len() as f64).sqrt();
    let se = sd / ((r1.draws - r1.excluded_draws) as f64).sqrt();
    close(r1.mean_accuracy, exact, 4.0 * se, "Monte Carlo mean vs exhaustive mean")?;
    Ok(format!(
        "bit-identical reruns, {} draws match enumeration, mean {:.4} vs exhaustive {exact:.4}",
        r1.draws, r1.mean_accuracy
    ))
}

fn mock_endpoint(max_concurrent: usize, rpm: u32) -> EndpointConfig {
    EndpointConfig {
        base_url: "http://mock.invalid/v1".into(),
        model_name: "mock".into(),
        auth_env_var: "TIERBENCH_ACCEPTANCE_UNSET".into(),
        max_concurrent,
        requests_per_minute: rpm,
        retry_max: 1,
        backoff_base_ms: 0,
        ..EndpointConfig::default()
    }
}

fn c12_collection() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let prompt = dir.path().join("prompt.txt");
    fs::write(&prompt, "rate the pitch").map_err(|e| e.to_string())?;
    let bench = balanced(3);
    let tokens = vec![("Fair".to_string(), -0.7), ("Strong".to_string(), -1.1), ("Limited".to_string(), -2.2)];
    let run = |mode: CollectMode, cache: &Path, out: &Path| -> Result<usize, String> {
        let mock = MockTransport::scripted(tokens.clone());
        let client = Client::new(mock_endpoint(4, 0), &mock, Cache::open(cache).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let opts = CollectOptions { mode, ..CollectOptions::default() };
        collect::collect_benchmark(&client, &prompt, &bench, &opts, out).map_err(|e| e.to_string())?;
        Ok(mock.call_count())
    };
    let n = bench.len();
    let lp = run(CollectMode::Logprob, &dir.path().join("c1"), &dir.path().join("lp.jsonl"))?;
    ensure(lp == n, format!("logprob mode made {lp} calls for {n} pitches"))?;
    let sm = run(CollectMode::Sampled, &dir.path().join("c2"), &dir.path().join("sm.jsonl"))?;
    ensure(sm == 8 * n, format!("sampled mode made {sm} calls for {n} pitches"))?;
    let again = run(CollectMode::Sampled, &dir.path().join("c2"), &dir.path().join("sm2.jsonl"))?
        + run(CollectMode::Logprob, &dir.path().join("c1"), &dir.path().join("lp2.jsonl"))?;
    ensure(again == 0, format!("reruns made {again} calls"))?;

    // 1200 per minute is one start per 50 ms
    let mock = MockTransport::scripted(tokens.clone()).with_latency(Duration::from_millis(20));
    let client = Client::new(mock_endpoint(3, 1200), &mock, Cache::open(&dir.path().join("c3")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    collect::fetch_samples(&client, "p", &bench.pitches[0], TextField::Full, 8, &Map::new()).map_err(|e| e.to_string())?;
    ensure(mock.peak_in_flight() <= 3, format!("peak in flight {}", mock.peak_in_flight()))?;
    let mut starts: Vec<Instant> = mock.calls().iter().map(|c| c.start).collect();
    starts.sort();
    for (i, s) in starts.iter().enumerate() {
        let window = starts[i..].iter().take_while(|t| **t - *s < Duration::from_millis(500)).count();
        ensure(window <= 11, format!("{window} starts inside 500 ms"))?;
    }
    let span = *starts.last().ok_or("no calls")? - starts[0];
    ensure(span >= Duration::from_millis(300), format!("8 starts spanned only {span:?}"))?;

    ensure(match_label_token("Str") == Some(Tier::Strong), "Str")?;
    ensure(match_label_token("exceptionally") == Some(Tier::Exceptional), "exceptionally")?;
    ensure(match_label_token("The").is_none() && match_label_token("").is_none(), "non-label tokens")?;
    let parsed = parse_logprob_response(&mock_logprob_response(&[("Strong", -0.3), ("Str", -5.0)]))
        .map_err(|e| e.to_string())?;
    ensure(parsed == LabelLogprobs::from([(Tier::Strong, -0.3)]), format!("dedup {parsed:?}"))?;
    let none = MockTransport::scripted(vec![("The".into(), -0.1), ("A".into(), -1.0)]);
    let client = Client::new(mock_endpoint(1, 0), &none, Cache::open(&dir.path().join("c4")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let r = fetch_logprobs(&client, "p", &bench.pitches[0], TextField::Full);
    ensure(matches!(r, Err(CollectError::NoLabelTokens { .. })), format!("no-label response gave {r:?}"))?;
    Ok(format!("{lp} / {sm} / 0 calls, peak in flight {}, start span {span:?}", mock.peak_in_flight()))
}

fn c13_classification() -> Check {
    let mut rng = seeded(13);
    let mut ties = 0;
    for case in 0..1000 {
        let mut map = LabelLogprobs::new();
        for t in Tier::ALL {
            if rng.random_range(0..4) > 0 {
                map.insert(t, -rng.random_range(0.0..8.0f64));
            }
        }
        if map.is_empty() {
            map.insert(Tier::from_index(case % 4), -1.0);
        }
        if case % 5 == 0 && map.len() >= 2 {
            // force an exact tie on the maximum
            let max = map.values().copied().fold(f64::NEG_INFINITY, f64::max);
            let keys: Vec<Tier> = map.keys().copied().collect();
            map.insert(keys[keys.len() - 1], max);
            map.insert(keys[0], max);
        }
        let d = softmax_labels(&map).map_err(|e| e.to_string())?;
        let z: f64 = map.values().map(|l| l.exp()).sum();
        for t in Tier::ALL {
            let want = map.get(&t).map_or(0.0, |l| l.exp() / z);
            close(d.get(t), want, 1e-12, "softmax")?;
        }
        let max = map.values().copied().fold(f64::NEG_INFINITY, f64::max);
        let winners: Vec<Tier> = Tier::ALL.iter().copied().filter(|t| map.get(t) == Some(&max)).collect();
        let (label, tie) = d.argmax();
        ensure(label == winners[0], format!("case {case}: argmax {label:?}, want {:?}", winners[0]))?;
        ensure(tie == (winners.len() > 1), format!("case {case}: tie flag {tie}"))?;
        ties += usize::from(tie);
        let shift = rng.random_range(-50.0..50.0);
        let shifted: LabelLogprobs = map.iter().map(|(t, l)| (*t, l + shift)).collect();
        let s = softmax_labels(&shifted).map_err(|e| e.to_string())?;
        for t in Tier::ALL {
            close(s.get(t), d.get(t), 1e-12, "shift invariance")?;
        }
        ensure(s.argmax().0 == label, "shift changed the label")?;
    }
    Ok(format!("1000 maps, {ties} with a tied maximum"))
}

struct Criterion {
    id: u8,
    name: &'static str,
    budget: Duration,
    check: fn() -> Check,
}

/// Criteria that cannot be met by a faithful implementation; each still runs
/// and reports FAIL, and the suite asserts that it fails for the stated reason.
const KNOWN_GAPS: &[(u8, &str)] = &[(2, "0.608: 47.733 vs reported 47.8")];

fn main() {
    let criteria = [
        Criterion { id: 1, name: "confusion fixture", budget: Duration::from_secs(1), check: c1_confusion_fixture },
        Criterion { id: 2, name: "headroom triple", budget: Duration::from_secs(1), check: c2_headroom },
        Criterion { id: 3, name: "Cohen kappa from marginals", budget: Duration::from_secs(1), check: c3_cohen_marginals },
        Criterion { id: 4, name: "McNemar reconstruction", budget: Duration::from_secs(1), check: c4_mcnemar },
        Criterion { id: 5, name: "GRPO gradient check", budget: Duration::from_secs(30), check: c5_gradient_check },
        Criterion { id: 6, name: "advantage vanishing", budget: Duration::from_secs(1), check: c6_advantage_vanishing },
        Criterion { id: 7, name: "reward exhaustion", budget: Duration::from_secs(1), check: c7_reward_cases },
        Criterion { id: 8, name: "pairwise determinism and strata", budget: Duration::from_secs(5), check: c8_pairwise },
        Criterion { id: 9, name: "calibration suite", budget: Duration::from_secs(10), check: c9_calibration },
        Criterion { id: 10, name: "agreement suite", budget: Duration::from_secs(10), check: c10_agreement },
        Criterion { id: 11, name: "resampling reproducibility", budget: Duration::from_secs(60), check: c11_resampling },
        Criterion { id: 12, name: "collection protocol", budget: Duration::from_secs(5), check: c12_collection },
        Criterion { id: 13, name: "classification protocol", budget: Duration::from_secs(5), check: c13_classification },
    ];
    let mut unexpected = Vec::new();
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.check)();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.budget => Err(format!("{detail}; took {elapsed:?}, budget {:?}", c.budget)),
            other => other,
        };
        let (verdict, detail) = match &outcome {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        println!("criterion {:>2} {verdict} | {} | {detail} | {elapsed:.2?}", c.id, c.name);
        let gap = KNOWN_GAPS.iter().find(|(id, _)| *id == c.id);
        match (&outcome, gap) {
            (Ok(_), None) => {}
            (Err(d), Some((_, why))) if d.contains(why) => {}
            (Ok(_), Some(_)) => unexpected.push(format!("criterion {} now passes; drop it from KNOWN_GAPS", c.id)),
            (Err(d), _) => unexpected.push(format!("criterion {}: {d}", c.id)),
        }
    }
    if !unexpected.is_empty() {
        eprintln!("{}", unexpected.join("\n"));
        std::process::exit(1);
    }
    println!("acceptance: {} criteria run, {} known gap(s)", criteria.len(), KNOWN_GAPS.len());
}
