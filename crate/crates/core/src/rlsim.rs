//! Group-relative policy optimisation at toy scale.
//!
//! A toy output is a short token sequence over the four tiers. The first token
//! is the label implied by the reasoning and the last is the final label. Each
//! token is drawn from a softmax whose logits are the sum of per-(feature,
//! position) vectors.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{substream, unit};
use crate::tiers::Tier;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("group of {0} outputs; advantage normalisation needs at least 2")]
    GroupTooSmall(usize),
    #[error("output {0} has no tokens")]
    EmptyOutput(usize),
    #[error("{advantages} advantages for a group of {outputs}")]
    AdvantageLengthMismatch { advantages: usize, outputs: usize },
    #[error("output {output} token {token}: probability ratio is not finite")]
    NonFiniteRatio { output: usize, token: usize },
    #[error("sample {sample}: {got} diagnostic outcomes, expected {expected}")]
    WrongDiagnosticCount { sample: usize, expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training log {path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, RlError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardSpec {
    pub exact_reward: f64,
    pub adjacent_reward: f64,
    pub far_reward: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self { exact_reward: 1.0, adjacent_reward: 0.3, far_reward: 0.0 }
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        if self.exact_reward >= self.adjacent_reward && self.adjacent_reward >= self.far_reward {
            Ok(())
        } else {
            Err(RlError::InvalidConfig("rewards must satisfy exact >= adjacent >= far".into()))
        }
    }
}

/// Ordinal reward, zeroed when the final label disagrees with the reasoning.
pub fn reward(label_pred: Tier, reasoning_pred: Tier, truth: Tier, spec: &RewardSpec) -> f64 {
    if label_pred != reasoning_pred {
        return 0.0;
    }
    match label_pred.ordinal_distance(truth) {
        0 => spec.exact_reward,
        1 => spec.adjacent_reward,
        _ => spec.far_reward,
    }
}

/// `(R - mean) / (sd + floor)` with the population standard deviation.
pub fn normalize_advantages(rewards: &[f64], sigma_floor: f64) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(RlError::GroupTooSmall(rewards.len()));
    }
    // summing equal values can leave a rounding residue that the floor would amplify
    if rewards.iter().all(|r| *r == rewards[0]) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let n = rewards.len() as f64;
    let mu = rewards.iter().sum::<f64>() / n;
    let sd = (rewards.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / n).sqrt();
    Ok(rewards.iter().map(|r| (r - mu) / (sd + sigma_floor)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClipParams {
    pub epsilon: f64,
    pub epsilon_higher: f64,
    pub sigma_floor: f64,
}

impl Default for ClipParams {
    fn default() -> Self {
        Self { epsilon: 0.2, epsilon_higher: 0.1, sigma_floor: 1e-8 }
    }
}

impl ClipParams {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon > 0.0 && self.epsilon_higher >= 0.0 && self.sigma_floor > 0.0 {
            Ok(())
        } else {
            Err(RlError::InvalidConfig("need epsilon > 0, epsilon_higher >= 0, sigma_floor > 0".into()))
        }
    }

    pub fn lower(&self) -> f64 {
        1.0 - self.epsilon
    }

    pub fn upper(&self) -> f64 {
        1.0 + self.epsilon + self.epsilon_higher
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutOutput {
    /// Sampled tier index per position.
    pub tokens: Vec<usize>,
    pub policy_logprobs: Vec<f64>,
    pub reference_logprobs: Vec<f64>,
    pub final_label: Tier,
    pub reasoning_label: Tier,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRollout {
    pub prompt_id: String,
    /// Active policy features, hint included.
    pub features: Vec<String>,
    pub outputs: Vec<RolloutOutput>,
}

impl GroupRollout {
    pub fn rewards(&self) -> Vec<f64> {
        self.outputs.iter().map(|o| o.reward).collect()
    }

    pub fn assign_rewards(&mut self, truth: Tier, spec: &RewardSpec) {
        for o in &mut self.outputs {
            o.reward = reward(o.final_label, o.reasoning_label, truth, spec);
        }
    }

    fn check(&self, advantages: &[f64]) -> Result<()> {
        if advantages.len() != self.outputs.len() {
            return Err(RlError::AdvantageLengthMismatch {
                advantages: advantages.len(),
                outputs: self.outputs.len(),
            });
        }
        match self.outputs.iter().position(|o| o.tokens.is_empty() && o.policy_logprobs.is_empty()) {
            Some(i) => Err(RlError::EmptyOutput(i)),
            None => Ok(()),
        }
    }
}

fn clip(r: f64, params: &ClipParams) -> f64 {
    r.clamp(params.lower(), params.upper())
}

/// Per-token surrogate and its derivative with respect to the policy log-probability.
fn token_term(r: f64, adv: f64, params: &ClipParams) -> (f64, f64) {
    let unclipped = r * adv;
    let clipped = clip(r, params) * adv;
    if unclipped <= clipped {
        (unclipped, unclipped)
    } else {
        (clipped, 0.0)
    }
}

fn ratio(policy: f64, reference: f64, output: usize, token: usize) -> Result<f64> {
    let r = (policy - reference).exp();
    if r.is_finite() {
        Ok(r)
    } else {
        Err(RlError::NonFiniteRatio { output, token })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub loss: f64,
    /// Surrogate terms, one vector per output.
    pub per_token_terms: Vec<Vec<f64>>,
}

/// Clipped surrogate loss normalised by the total token count of the group.
pub fn grpo_loss(group: &GroupRollout, advantages: &[f64], clip: &ClipParams) -> Result<LossBreakdown> {
    group.check(advantages)?;
    let mut total = 0.0;
    let mut tokens = 0usize;
    let mut per_token_terms = Vec::with_capacity(group.outputs.len());
    for (i, (o, &adv)) in group.outputs.iter().zip(advantages).enumerate() {
        let mut terms = Vec::with_capacity(o.policy_logprobs.len());
        for (t, (&lp, &lr)) in o.policy_logprobs.iter().zip(&o.reference_logprobs).enumerate() {
            let (term, _) = token_term(ratio(lp, lr, i, t)?, adv, clip);
            total += term;
            terms.push(term);
        }
        tokens += terms.len();
        per_token_terms.push(terms);
    }
    Ok(LossBreakdown { loss: -total / tokens as f64, per_token_terms })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteMode {
    Standard,
    Privileged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouterConfig {
    pub k_diagnostic: usize,
    pub tau: f64,
}

impl Default for RouterConfig {
    fn default() -> Self {
        Self { k_diagnostic: 8, tau: 0.25 }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_diagnostic >= 1 && (0.0..=1.0).contains(&self.tau) {
            Ok(())
        } else {
            Err(RlError::InvalidConfig("need k_diagnostic >= 1 and tau in [0, 1]".into()))
        }
    }
}

/// Privileged when diagnostic accuracy is strictly below `tau`.
pub fn route_privileged(diagnostic_correct: &[Vec<bool>], config: &RouterConfig) -> Result<Vec<RouteMode>> {
    config.validate()?;
    diagnostic_correct
        .iter()
        .enumerate()
        .map(|(sample, flags)| {
            if flags.len() != config.k_diagnostic {
                return Err(RlError::WrongDiagnosticCount {
                    sample,
                    expected: config.k_diagnostic,
                    got: flags.len(),
                });
            }
            let acc = flags.iter().filter(|&&f| f).count() as f64 / config.k_diagnostic as f64;
            Ok(if acc < config.tau { RouteMode::Privileged } else { RouteMode::Standard })
        })
        .collect()
}

/// Default output length.
pub const POSITIONS: usize = 2;
pub const MAX_POSITIONS: usize = 4;

pub fn hint_feature(hint: Tier) -> String {
    format!("hint:{}", hint.name())
}

/// Logits keyed by (feature, position). Missing keys count as zero vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    pub logits: BTreeMap<(String, usize), [f64; 4]>,
    /// Tokens per output, 1 to 4.
    pub positions: usize,
}

impl Default for ToyPolicy {
    fn default() -> Self {
        Self { logits: BTreeMap::new(), positions: POSITIONS }
    }
}

pub type Gradient = BTreeMap<(String, usize), [f64; 4]>;

impl ToyPolicy {
    /// Zero policy plus a fixed bonus on each hint feature's own tier.
    pub fn with_hints(strength: f64) -> Self {
        let mut p = Self::default();
        for t in Tier::ALL {
            for pos in 0..MAX_POSITIONS {
                let mut v = [0.0; 4];
                v[t.index()] = strength;
                p.logits.insert((hint_feature(t), pos), v);
            }
        }
        p
    }

    pub fn set(&mut self, feature: &str, position: usize, logits: [f64; 4]) {
        self.logits.insert((feature.to_string(), position), logits);
    }

    pub fn with_positions(mut self, positions: usize) -> Self {
        self.positions = positions;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_POSITIONS).contains(&self.positions) {
            return Err(RlError::InvalidConfig(format!("positions must be 1 to {MAX_POSITIONS}")));
        }
        if self.logits.values().flatten().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(RlError::InvalidConfig("policy logits must be finite".into()))
        }
    }

    pub fn logits_at(&self, features: &[String], position: usize) -> [f64; 4] {
        let mut z = [0.0; 4];
        for f in features {
            if let Some(v) = self.logits.get(&(f.clone(), position)) {
                for k in 0..4 {
                    z[k] += v[k];
                }
            }
        }
        z
    }

    pub fn log_probs(&self, features: &[String], position: usize) -> [f64; 4] {
        log_softmax(self.logits_at(features, position))
    }

    /// Gradient step `theta -= lr * grad`.
    pub fn apply(&mut self, grad: &Gradient, lr: f64) {
        for (key, g) in grad {
            let v = self.logits.entry(key.clone()).or_insert([0.0; 4]);
            for k in 0..4 {
                v[k] -= lr * g[k];
            }
        }
    }
}

fn log_softmax(z: [f64; 4]) -> [f64; 4] {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    z.map(|x| x - lse)
}

fn sample_index<R: rand::Rng>(rng: &mut R, log_probs: &[f64; 4]) -> usize {
    let u = unit(rng);
    let mut acc = 0.0;
    for (k, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return k;
        }
    }
    // rounding left u above the cumulative total
    log_probs.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k).unwrap_or(0)
}

/// Seeded group of `g` outputs. Output `i` draws from its own substream; the
/// reference log-probabilities are a snapshot of the sampling policy.
pub fn toy_rollout(
    policy: &ToyPolicy,
    prompt_id: &str,
    features: &[String],
    g: usize,
    seed: u64,
    privileged_hint: Option<Tier>,
) -> Result<GroupRollout> {
    if g < 2 {
        return Err(RlError::GroupTooSmall(g));
    }
    let mut features = features.to_vec();
    if let Some(h) = privileged_hint {
        features.push(hint_feature(h));
    }
    policy.validate()?;
    let dists: Vec<[f64; 4]> = (0..policy.positions).map(|p| policy.log_probs(&features, p)).collect();
    let outputs = (0..g)
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let tokens: Vec<usize> = dists.iter().map(|d| sample_index(&mut rng, d)).collect();
            let lps: Vec<f64> = tokens.iter().zip(&dists).map(|(&k, d)| d[k]).collect();
            RolloutOutput {
                reasoning_label: Tier::from_index(tokens[0]),
                final_label: Tier::from_index(tokens[tokens.len() - 1]),
                tokens,
                policy_logprobs: lps.clone(),
                reference_logprobs: lps,
                reward: 0.0,
            }
        })
        .collect();
    Ok(GroupRollout { prompt_id: prompt_id.to_string(), features, outputs })
}

/// Loss and analytic gradient for a toy group under `policy`, with the group's
/// stored reference log-probabilities held fixed.
pub fn toy_loss_and_grad(
    policy: &ToyPolicy,
    group: &GroupRollout,
    advantages: &[f64],
    clip: &ClipParams,
) -> Result<(f64, Gradient)> {
    group.check(advantages)?;
    let width = group.outputs.iter().map(|o| o.tokens.len()).max().unwrap_or(0);
    let dists: Vec<[f64; 4]> = (0..width).map(|p| policy.log_probs(&group.features, p)).collect();
    let mut total = 0.0;
    let mut n_tokens = 0usize;
    // d(sum of terms) / d(logits) at each position
    let mut dz = vec![[0.0; 4]; width];
    for (i, (o, &adv)) in group.outputs.iter().zip(advantages).enumerate() {
        for (t, (&k, &lr)) in o.tokens.iter().zip(&o.reference_logprobs).enumerate() {
            let lp = dists[t][k];
            let (term, dterm) = token_term(ratio(lp, lr, i, t)?, adv, clip);
            total += term;
            n_tokens += 1;
            if dterm != 0.0 {
                for j in 0..4 {
                    let indicator = if j == k { 1.0 } else { 0.0 };
                    dz[t][j] += dterm * (indicator - dists[t][j].exp());
                }
            }
        }
    }
    let scale = -1.0 / n_tokens as f64;
    let mut grad = Gradient::new();
    for f in &group.features {
        for (p, d) in dz.iter().enumerate() {
            let e = grad.entry((f.clone(), p)).or_insert([0.0; 4]);
            for j in 0..4 {
                e[j] += scale * d[j];
            }
        }
    }
    Ok((-total / n_tokens as f64, grad))
}

/// Re-evaluates each output's policy log-probabilities under `policy`.
pub fn rescore(policy: &ToyPolicy, group: &mut GroupRollout) {
    let width = group.outputs.iter().map(|o| o.tokens.len()).max().unwrap_or(0);
    let dists: Vec<[f64; 4]> = (0..width).map(|p| policy.log_probs(&group.features, p)).collect();
    for o in &mut group.outputs {
        o.policy_logprobs = o.tokens.iter().enumerate().map(|(t, &k)| dists[t][k]).collect();
    }
}

/// Central differences of the toy loss over every logit the group touches.
pub fn finite_difference_gradient(
    policy: &ToyPolicy,
    group: &GroupRollout,
    advantages: &[f64],
    clip: &ClipParams,
    step: f64,
) -> Result<Gradient> {
    let width = group.outputs.iter().map(|o| o.tokens.len()).max().unwrap_or(0);
    let mut out = Gradient::new();
    for f in &group.features {
        for p in 0..width {
            let key = (f.clone(), p);
            let base = policy.logits.get(&key).copied().unwrap_or([0.0; 4]);
            let mut g = [0.0; 4];
            for (j, gj) in g.iter_mut().enumerate() {
                let mut plus = policy.clone();
                plus.logits.entry(key.clone()).or_insert(base)[j] = base[j] + step;
                let mut minus = policy.clone();
                minus.logits.entry(key.clone()).or_insert(base)[j] = base[j] - step;
                let lp = toy_loss_and_grad(&plus, group, advantages, clip)?.0;
                let lm = toy_loss_and_grad(&minus, group, advantages, clip)?.0;
                *gj = (lp - lm) / (2.0 * step);
            }
            out.insert(key, g);
        }
    }
    Ok(out)
}

/// `|a - b| / max(|a|, 1e-6)` over all keys of either gradient.
pub fn relative_error(a: &Gradient, b: &Gradient) -> f64 {
    let keys: std::collections::BTreeSet<&(String, usize)> = a.keys().chain(b.keys()).collect();
    let (mut diff, mut norm) = (0.0, 0.0);
    for k in keys {
        let x = a.get(k).copied().unwrap_or([0.0; 4]);
        let y = b.get(k).copied().unwrap_or([0.0; 4]);
        for j in 0..4 {
            diff += (x[j] - y[j]).powi(2);
            norm += x[j] * x[j];
        }
    }
    diff.sqrt() / norm.sqrt().max(1e-6)
}

/// True when some token's probability ratio sits within `margin` of a clip
/// edge, where the surrogate has a kink and finite differences are unreliable.
pub fn near_clip_boundary(policy: &ToyPolicy, group: &GroupRollout, clip: &ClipParams, margin: f64) -> bool {
    let mut g = group.clone();
    rescore(policy, &mut g);
    g.outputs.iter().flat_map(|o| o.policy_logprobs.iter().zip(&o.reference_logprobs)).any(|(lp, lr)| {
        let r = (lp - lr).exp();
        (r - clip.lower()).abs() < margin || (r - clip.upper()).abs() < margin
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyPrompt {
    pub id: String,
    pub features: Vec<String>,
    pub truth: Tier,
}

/// Prompts whose single feature names a cue bucket; buckets map to tiers cyclically.
pub fn toy_prompts(n: usize, buckets: usize) -> Vec<ToyPrompt> {
    (0..n)
        .map(|i| {
            let b = i % buckets.max(1);
            ToyPrompt {
                id: format!("toy-{i:04}"),
                features: vec![format!("cue:{b}")],
                truth: Tier::from_index(b % 4),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: usize,
    pub group_size: usize,
    pub learning_rate: f64,
    pub prompts: usize,
    pub buckets: usize,
    pub hint_strength: f64,
    /// Inner optimisation passes over each batch of groups.
    pub inner_epochs: usize,
    pub reward: RewardSpec,
    pub clip: ClipParams,
    pub router: RouterConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 50,
            group_size: 8,
            learning_rate: 2.0,
            prompts: 16,
            buckets: 4,
            hint_strength: 3.0,
            inner_epochs: 2,
            reward: RewardSpec::default(),
            clip: ClipParams::default(),
            router: RouterConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.reward.validate()?;
        self.clip.validate()?;
        self.router.validate()?;
        if self.group_size < 2 {
            return Err(RlError::GroupTooSmall(self.group_size));
        }
        if self.prompts == 0 || self.steps == 0 || self.inner_epochs == 0 {
            return Err(RlError::InvalidConfig("prompts, steps and inner_epochs must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(RlError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub mean_reward: f64,
    pub fraction_privileged: f64,
    pub loss: f64,
    /// Share of groups whose rewards were all equal.
    pub fraction_zero_advantage: f64,
    /// Unhinted accuracy over the diagnostic rollouts.
    pub diagnostic_accuracy: f64,
}

struct PreparedGroup {
    group: GroupRollout,
    advantages: Vec<f64>,
    privileged: bool,
    diagnostic_hits: usize,
}

fn prepare(policy: &ToyPolicy, prompt: &ToyPrompt, cfg: &TrainConfig, seed: u64) -> Result<PreparedGroup> {
    let k = cfg.router.k_diagnostic.max(2);
    let diag = toy_rollout(policy, &prompt.id, &prompt.features, k, seed, None)?;
    let flags: Vec<bool> = diag
        .outputs
        .iter()
        .take(cfg.router.k_diagnostic)
        .map(|o| o.final_label == prompt.truth && o.reasoning_label == o.final_label)
        .collect();
    let diagnostic_hits = flags.iter().filter(|&&f| f).count();
    let mode = route_privileged(&[flags], &cfg.router)?[0];
    let privileged = mode == RouteMode::Privileged;
    let hint = privileged.then_some(prompt.truth);
    let mut group = toy_rollout(policy, &prompt.id, &prompt.features, cfg.group_size, seed ^ 0x9e37_79b9_7f4a_7c15, hint)?;
    group.assign_rewards(prompt.truth, &cfg.reward);
    let advantages = normalize_advantages(&group.rewards(), cfg.clip.sigma_floor)?;
    Ok(PreparedGroup { group, advantages, privileged, diagnostic_hits })
}

fn sum_gradients(parts: Vec<Gradient>) -> Gradient {
    // parts arrive in prompt order, so the reduction order is fixed
    let mut total = Gradient::new();
    for g in parts {
        for (key, v) in g {
            let e = total.entry(key).or_insert([0.0; 4]);
            for j in 0..4 {
                e[j] += v[j];
            }
        }
    }
    total
}

/// Runs the toy loop. Groups are built and differentiated in parallel; results
/// equal a serial run because every group has its own seed and gradients are
/// summed in prompt order.
pub fn train(cfg: &TrainConfig) -> Result<(ToyPolicy, Vec<StepLog>)> {
    cfg.validate()?;
    let prompts = toy_prompts(cfg.prompts, cfg.buckets);
    let mut policy = ToyPolicy::with_hints(cfg.hint_strength);
    let mut logs = Vec::with_capacity(cfg.steps);
    let hint_keys: Vec<(String, usize)> =
        policy.logits.keys().filter(|(f, _)| f.starts_with("hint:")).cloned().collect();
    for step in 0..cfg.steps {
        let snapshot = policy.clone();
        let prepared: Vec<PreparedGroup> = prompts
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let seed = substream_seed(cfg.seed, step, i);
                prepare(&snapshot, p, cfg, seed)
            })
            .collect::<Result<_>>()?;
        let mut first_loss = 0.0;
        for epoch in 0..cfg.inner_epochs {
            let results: Vec<(f64, Gradient)> = prepared
                .par_iter()
                .map(|pg| toy_loss_and_grad(&policy, &pg.group, &pg.advantages, &cfg.clip))
                .collect::<Result<_>>()?;
            let n = results.len() as f64;
            if epoch == 0 {
                first_loss = results.iter().map(|r| r.0).sum::<f64>() / n;
            }
            let mut grad = sum_gradients(results.into_iter().map(|r| r.1).collect());
            // hint vectors stay fixed so the hint remains a pure prompt-side aid
            for k in &hint_keys {
                grad.remove(k);
            }
            for v in grad.values_mut() {
                for x in v.iter_mut() {
                    *x /= n;
                }
            }
            policy.apply(&grad, cfg.learning_rate);
        }
        let n = prepared.len() as f64;
        let rewards: Vec<f64> = prepared.iter().flat_map(|p| p.group.rewards()).collect();
        logs.push(StepLog {
            step,
            mean_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
            fraction_privileged: prepared.iter().filter(|p| p.privileged).count() as f64 / n,
            loss: first_loss,
            fraction_zero_advantage: prepared.iter().filter(|p| p.advantages.iter().all(|a| *a == 0.0)).count()
                as f64
                / n,
            diagnostic_accuracy: prepared.iter().map(|p| p.diagnostic_hits).sum::<usize>() as f64
                / (n * cfg.router.k_diagnostic as f64),
        });
    }
    Ok((policy, logs))
}

fn substream_seed(seed: u64, step: usize, prompt: usize) -> u64 {
    use rand::RngCore;
    substream(seed, ((step as u64) << 32) | prompt as u64).next_u64()
}

/// Greedy accuracy of the policy on its prompts without hints.
pub fn greedy_accuracy(policy: &ToyPolicy, prompts: &[ToyPrompt]) -> f64 {
    let argmax = |z: [f64; 4]| (0..4).max_by(|&a, &b| z[a].total_cmp(&z[b]).then(b.cmp(&a))).unwrap_or(0);
    let hits = prompts
        .iter()
        .filter(|p| {
            let r = argmax(policy.logits_at(&p.features, 0));
            let l = argmax(policy.logits_at(&p.features, policy.positions - 1));
            r == l && l == p.truth.index()
        })
        .count();
    hits as f64 / prompts.len().max(1) as f64
}

pub fn write_training_log(path: &Path, logs: &[StepLog]) -> Result<()> {
    let io = |source| RlError::Io { path: path.to_path_buf(), source };
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    for l in logs {
        let line = serde_json::to_string(l).expect("step log serialises");
        writeln!(f, "{line}").map_err(io)?;
    }
    Ok(())
}
