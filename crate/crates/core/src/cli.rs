//! Command-line runner. Every invocation writes its artifacts and a
//! `manifest.json` under the output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::aggregate::{consensus_filter, ensemble_predictions, rank_ensembles, ConsensusPolicy, EnsembleSpec, RankedEnsemble};
use crate::calibrate::{calibration_report, likert_to_unit, selective_curve, ScoredItem};
use crate::classify::{
    majority_accuracy, parse_label_text, pitch_mean_accuracy, run_pooled_accuracy, softmax_labels, LabelDistribution,
    LabelLogprobs, RunAggregate,
};
use crate::collect::{self, Cache, Client, CollectMode, CollectOptions, EndpointConfig, HttpTransport, MockTransport, TextField};
use crate::error::Error;
use crate::ingest::{
    self, assemble_balanced, load_benchmark, load_predictions, load_ratings, panel_labels, BenchmarkSet, Panel,
    PredictionKind, PredictionRecord, RaterRecord, RatingFilter, RunRecord,
};
use crate::metrics::{self, confusion, error_profile, evaluate, prediction_entropy, CiSpec, MetricsReport};
use crate::pairwise::{build_pairs, default_strata, discordance, load_choices, score_pairs, PairSet};
use crate::rlsim::{self, greedy_accuracy, toy_prompts, train, TrainConfig};
use crate::stats::{
    binomial_test, cochran_q, holm, matched_n_subsample, mcnemar, proportion_ci, AgreementReport, CiMethod,
    McNemarMode, Sidedness, TestResult,
};
use crate::tiers::Tier;

type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Parser)]
#[command(name = "tierbench", version, about = "Four-tier research-quality evaluation harness")]
pub struct Cli {
    /// TOML file of defaults; keys are long flag names, optionally under a
    /// `[subcommand]` table. Flags on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory for artifacts and the manifest.
    #[arg(long, global = true, default_value = "tierbench-run")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Tabular outputs are also written as CSV when set to csv.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Drop junior raters whose mean time per pitch is below this many seconds.
    #[arg(long, global = true)]
    pub min_mean_seconds: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate benchmark, prediction and rating files.
    Ingest(IngestArgs),
    /// Collect predictions from an endpoint (or the offline mock).
    Collect(CollectArgs),
    /// Turn raw log-probabilities or completion texts into prediction records.
    Classify(ClassifyArgs),
    /// Accuracy, macro-F1, confusion and error profile per evaluator.
    Metrics(MetricsArgs),
    /// ECE, Brier, confidence gap and selective-prediction curves.
    Calibrate(CalibrateArgs),
    /// Fleiss, Krippendorff and pairwise Cohen agreement.
    Agreement(AgreementArgs),
    /// Binomial, McNemar, Cochran and matched-N comparisons.
    Stats(StatsArgs),
    /// Coverage and accuracy under consensus policies.
    Consensus(ConsensusArgs),
    /// Build and rank probability-averaging ensembles.
    Ensemble(EnsembleArgs),
    /// Pairwise task: build, score, discord.
    #[command(subcommand)]
    Pairwise(PairwiseCommand),
    /// Toy group-relative policy optimisation runs.
    Rlsim(RlsimArgs),
    /// Run every applicable analysis into one directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub bench: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub preds: Vec<PathBuf>,
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Pool to draw a balanced benchmark from; written as benchmark.jsonl.
    #[arg(long, requires = "per_tier")]
    pub pool: Option<PathBuf>,
    #[arg(long)]
    pub per_tier: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Logprob,
    Sampled,
}

#[derive(Debug, Args)]
pub struct CollectArgs {
    #[arg(long)]
    pub bench: PathBuf,
    /// Bundled prompt name (expert, simplified, journal_anchored, economics) or a path.
    #[arg(long, default_value = "expert")]
    pub prompt: String,
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value = "https://api.openai.com/v1")]
    pub base_url: String,
    #[arg(long, default_value = "OPENAI_API_KEY")]
    pub auth_env_var: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Logprob)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 8)]
    pub samples: usize,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u64>,
    /// Use the one-sentence pitch text where available.
    #[arg(long, action = ArgAction::SetTrue)]
    pub short_text: bool,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub max_concurrent: usize,
    #[arg(long, default_value_t = 60)]
    pub rpm: u32,
    #[arg(long, default_value_t = 4)]
    pub retry_max: u32,
    #[arg(long, default_value_t = 60.0)]
    pub timeout_seconds: f64,
    #[arg(long)]
    pub evaluator: Option<String>,
    /// Offline scripted transport.
    #[arg(long, action = ArgAction::SetTrue)]
    pub mock: bool,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// JSONL with `pitch_id` plus `label_logprobs`, `texts` or `text`.
    #[arg(long)]
    pub raw: PathBuf,
    #[arg(long)]
    pub evaluator: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct PredInputs {
    #[arg(long, alias = "truth")]
    pub bench: PathBuf,
    #[arg(long = "preds", alias = "pred", num_args = 1..)]
    pub preds: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub inputs: PredInputs,
    #[arg(long, default_value = "wilson")]
    pub ci: String,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PanelArg {
    Expert,
    Junior,
}

impl From<PanelArg> for Panel {
    fn from(p: PanelArg) -> Self {
        match p {
            PanelArg::Expert => Panel::Expert,
            PanelArg::Junior => Panel::Junior,
        }
    }
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, alias = "truth")]
    pub bench: PathBuf,
    #[arg(long = "preds", alias = "pred", num_args = 1..)]
    pub preds: Vec<PathBuf>,
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    #[arg(long = "preds", alias = "pred", num_args = 1..)]
    pub preds: Vec<PathBuf>,
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub panel: Option<PanelArg>,
    /// Needed only to drop predictions for pitches outside the benchmark.
    #[arg(long, alias = "truth")]
    pub bench: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum McNemarArg {
    Exact,
    Corrected,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub inputs: PredInputs,
    #[arg(long, value_enum, default_value_t = McNemarArg::Exact)]
    pub mcnemar: McNemarArg,
    /// Compare every evaluator against this one instead of all pairs.
    #[arg(long)]
    pub reference: Option<String>,
    /// Ratings file for the matched-N panel analysis.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PanelArg::Junior)]
    pub panel: PanelArg,
    /// Raters per pitch for the matched-N analysis.
    #[arg(long)]
    pub target: Option<f64>,
    #[arg(long, default_value_t = 5000)]
    pub draws: usize,
}

#[derive(Debug, Args)]
pub struct ConsensusArgs {
    #[arg(long, alias = "truth")]
    pub bench: PathBuf,
    #[arg(long = "preds", alias = "pred", num_args = 1..)]
    pub preds: Vec<PathBuf>,
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PanelArg::Expert)]
    pub panel: PanelArg,
    /// e.g. 4of4, share:0.75, unanimous:3. Defaults to every k-of-n above half.
    #[arg(long = "policy", num_args = 1..)]
    pub policies: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub inputs: PredInputs,
    #[arg(long, default_value_t = 2)]
    pub min_size: usize,
    #[arg(long)]
    pub max_size: Option<usize>,
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum PairwiseCommand {
    /// Build a stratified pair set.
    Build {
        #[arg(long)]
        bench: PathBuf,
        /// distance:count list
        #[arg(long, default_value = "1:150,2:100,3:50")]
        strata: String,
    },
    /// Score one evaluator's choices.
    Score {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        choices: PathBuf,
    },
    /// Compare two evaluators' choices pair by pair.
    Discord {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RlsimArgs {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub prompts: Option<usize>,
    #[arg(long)]
    pub buckets: Option<usize>,
    #[arg(long)]
    pub hint_strength: Option<f64>,
    #[arg(long)]
    pub inner_epochs: Option<usize>,
    #[arg(long)]
    pub k_diagnostic: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub epsilon_higher: Option<f64>,
    #[arg(long)]
    pub sigma_floor: Option<f64>,
    #[arg(long)]
    pub exact_reward: Option<f64>,
    #[arg(long)]
    pub adjacent_reward: Option<f64>,
    #[arg(long)]
    pub far_reward: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub inputs: PredInputs,
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    #[arg(long = "policy", num_args = 1..)]
    pub policies: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let merged = match merge_config(&argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(&merged) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let mut ctx = RunContext::new(&cli, &argv);
    let result = fs::create_dir_all(&cli.out)
        .map_err(Error::io(&cli.out))
        .and_then(|_| dispatch(&cli, &mut ctx));
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    if let Err(e) = ctx.write_manifest(&cli, result.as_ref().err()) {
        eprintln!("error: could not write manifest: {e}");
        return 2;
    }
    code
}

fn long_flag_source(m: &ArgMatches, id: &str) -> Option<ValueSource> {
    m.try_get_raw(id).ok().flatten()?;
    m.value_source(id)
}

/// Appends config-file values for every flag not given on the command line.
fn merge_config(argv: &[OsString]) -> Result<Vec<OsString>> {
    let cmd = Cli::command();
    let Ok(matches) = cmd.clone().try_get_matches_from(argv) else {
        return Ok(argv.to_vec());
    };
    let Some(path) = matches.get_one::<PathBuf>("config").cloned() else {
        return Ok(argv.to_vec());
    };
    let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
    let table: toml::Table =
        text.parse().map_err(|e: toml::de::Error| Error::Config { path: path.clone(), message: e.to_string() })?;

    let mut chain = Vec::new();
    let mut leaf_matches = &matches;
    let mut leaf = cmd.clone();
    leaf.build();
    while let Some((name, sub)) = leaf_matches.subcommand() {
        chain.push(name.to_string());
        leaf_matches = sub;
        leaf = leaf.find_subcommand(name).expect("matched subcommand exists").clone();
    }

    let mut values: BTreeMap<String, toml::Value> = BTreeMap::new();
    let mut scope = Some(&table);
    for depth in 0..=chain.len() {
        let Some(t) = scope else { break };
        for (k, v) in t {
            if !v.is_table() {
                values.insert(k.replace('-', "_"), v.clone());
            }
        }
        scope = chain.get(depth).and_then(|c| t.get(c)).and_then(toml::Value::as_table);
    }

    let mut out = argv.to_vec();
    for (key, value) in values {
        if key == "config" {
            continue;
        }
        let Some(arg) = leaf.get_arguments().find(|a| a.get_id().as_str() == key) else {
            return Err(Error::Config { path, message: format!("{key} is not an option of this command") });
        };
        let Some(long) = arg.get_long() else { continue };
        let given = [leaf_matches, &matches]
            .iter()
            .any(|m| long_flag_source(m, &key) == Some(ValueSource::CommandLine));
        if given {
            continue;
        }
        let flag = OsString::from(format!("--{long}"));
        match (&value, arg.get_action()) {
            (toml::Value::Boolean(b), ArgAction::SetTrue) => {
                if *b {
                    out.push(flag);
                }
            }
            (toml::Value::Array(items), _) => {
                out.push(flag);
                out.extend(items.iter().map(|i| OsString::from(toml_scalar(i))));
            }
            (v, _) => {
                out.push(flag);
                out.push(OsString::from(toml_scalar(v)));
            }
        }
    }
    Ok(out)
}

fn toml_scalar(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

struct RunContext {
    args: Vec<String>,
    inputs: BTreeSet<PathBuf>,
    outputs: BTreeSet<PathBuf>,
    summary: Value,
    min_mean_seconds: Option<f64>,
}

impl RunContext {
    fn new(cli: &Cli, argv: &[OsString]) -> Self {
        let mut inputs = BTreeSet::new();
        if let Some(c) = &cli.config {
            inputs.insert(c.clone());
        }
        Self {
            args: argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect(),
            inputs,
            outputs: BTreeSet::new(),
            summary: Value::Null,
            min_mean_seconds: cli.min_mean_seconds,
        }
    }

    fn input(&mut self, p: &Path) {
        self.inputs.insert(p.to_path_buf());
    }

    fn write_json<T: Serialize>(&mut self, dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
        let path = dir.join(name);
        let mut text = serde_json::to_string_pretty(value).expect("outputs serialise");
        text.push('\n');
        fs::write(&path, text).map_err(Error::io(&path))?;
        self.outputs.insert(path.clone());
        Ok(path)
    }

    fn write_text(&mut self, dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, text).map_err(Error::io(&path))?;
        self.outputs.insert(path.clone());
        Ok(path)
    }

    fn write_manifest(&self, cli: &Cli, error: Option<&Error>) -> Result<()> {
        fs::create_dir_all(&cli.out).map_err(Error::io(&cli.out))?;
        let digest = |p: &Path| -> Value {
            match fs::read(p) {
                Ok(bytes) => json!({"path": p, "sha256": hex::encode(Sha256::digest(&bytes))}),
                Err(e) => json!({"path": p, "error": e.to_string()}),
            }
        };
        let manifest = json!({
            "tool": "tierbench",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": subcommand_name(&cli.command),
            "args": self.args,
            "seed": cli.seed,
            "inputs": self.inputs.iter().map(|p| digest(p)).collect::<Vec<_>>(),
            "outputs": self.outputs.iter().map(|p| digest(p)).collect::<Vec<_>>(),
            "status": if error.is_some() { "error" } else { "ok" },
            "exit_code": error.map_or(0, Error::exit_code),
            "error": error.map(ToString::to_string),
            "summary": self.summary,
        });
        let path = cli.out.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        text.push('\n');
        fs::write(&path, text).map_err(Error::io(&path))
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest(_) => "ingest",
        Command::Collect(_) => "collect",
        Command::Classify(_) => "classify",
        Command::Metrics(_) => "metrics",
        Command::Calibrate(_) => "calibrate",
        Command::Agreement(_) => "agreement",
        Command::Stats(_) => "stats",
        Command::Consensus(_) => "consensus",
        Command::Ensemble(_) => "ensemble",
        Command::Pairwise(PairwiseCommand::Build { .. }) => "pairwise build",
        Command::Pairwise(PairwiseCommand::Score { .. }) => "pairwise score",
        Command::Pairwise(PairwiseCommand::Discord { .. }) => "pairwise discord",
        Command::Rlsim(_) => "rlsim",
        Command::Report(_) => "report",
    }
}

fn dispatch(cli: &Cli, ctx: &mut RunContext) -> Result<()> {
    let out = cli.out.as_path();
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a, cli, ctx),
        Command::Collect(a) => cmd_collect(a, out, ctx),
        Command::Classify(a) => cmd_classify(a, out, ctx),
        Command::Metrics(a) => {
            let ev = Evaluators::load(&a.inputs, ctx)?;
            let ci = CiSpec { method: a.ci.parse()?, level: a.level, draws: a.draws, seed: cli.seed };
            run_metrics(&ev, &ci, cli.format, out, ctx)
        }
        Command::Calibrate(a) => {
            let ev = Evaluators::load(&PredInputs { bench: a.bench.clone(), preds: a.preds.clone() }, ctx)?;
            let ratings = a.ratings.as_deref().map(|p| load_rating_records(p, ctx)).transpose()?;
            run_calibrate(&ev, ratings.as_deref(), a.bins, out, ctx)
        }
        Command::Agreement(a) => cmd_agreement(a, out, ctx),
        Command::Stats(a) => {
            let ev = Evaluators::load(&a.inputs, ctx)?;
            let ratings = a.ratings.as_deref().map(|p| load_rating_records(p, ctx)).transpose()?;
            let mode = match a.mcnemar {
                McNemarArg::Exact => McNemarMode::Exact,
                McNemarArg::Corrected => McNemarMode::ContinuityCorrected,
            };
            let matched = match (ratings.as_deref(), a.target) {
                (Some(r), Some(t)) => Some((r, a.panel.into(), t, a.draws)),
                _ => None,
            };
            run_stats(&ev, mode, a.reference.as_deref(), matched, cli.seed, cli.format, out, ctx)
        }
        Command::Consensus(a) => {
            let ev = Evaluators::load(&PredInputs { bench: a.bench.clone(), preds: a.preds.clone() }, ctx)?;
            let ratings = a.ratings.as_deref().map(|p| load_rating_records(p, ctx)).transpose()?;
            let labelers = consensus_labelers(&ev, ratings.as_deref(), a.panel.into());
            run_consensus(&ev.bench, &labelers, &a.policies, cli.format, out, ctx)
        }
        Command::Ensemble(a) => {
            let ev = Evaluators::load(&a.inputs, ctx)?;
            run_ensemble(&ev, a.min_size, a.max_size, a.top, cli.format, out, ctx)
        }
        Command::Pairwise(p) => cmd_pairwise(p, cli.seed, out, ctx),
        Command::Rlsim(a) => cmd_rlsim(a, cli.seed, out, ctx),
        Command::Report(a) => cmd_report(a, cli, ctx),
    }
}

fn load_bench(path: &Path, ctx: &mut RunContext) -> Result<BenchmarkSet> {
    ctx.input(path);
    Ok(load_benchmark(path)?)
}

fn load_rating_records(path: &Path, ctx: &mut RunContext) -> Result<Vec<RaterRecord>> {
    ctx.input(path);
    let filter = ctx.min_mean_seconds.map(|s| RatingFilter { min_mean_seconds: s });
    let load = load_ratings(path, filter.as_ref())?;
    if !load.excluded_raters.is_empty() {
        log::info!("excluded raters below the time threshold: {:?}", load.excluded_raters);
    }
    Ok(load.records)
}

/// Per-evaluator views of prediction records over one benchmark.
struct Evaluator {
    kind: PredictionKind,
    labels: BTreeMap<String, Tier>,
    distributions: BTreeMap<String, LabelDistribution>,
    confidences: BTreeMap<String, f64>,
    runs: Vec<RunAggregate>,
}

struct Evaluators {
    bench: BenchmarkSet,
    truths: BTreeMap<String, Tier>,
    by_id: BTreeMap<String, Evaluator>,
}

impl Evaluators {
    fn load(inputs: &PredInputs, ctx: &mut RunContext) -> Result<Self> {
        let bench = load_bench(&inputs.bench, ctx)?;
        let mut records = Vec::new();
        for p in &inputs.preds {
            ctx.input(p);
            records.extend(load_predictions(p)?);
        }
        Self::from_records(bench, &records)
    }

    fn from_records(bench: BenchmarkSet, records: &[PredictionRecord]) -> Result<Self> {
        let truths = bench.truths();
        let unknown = ingest::unknown_pitches(records, &bench);
        if !unknown.is_empty() {
            return Err(Error::Validation(format!(
                "{} predictions reference pitches outside benchmark {}, first {:?}",
                unknown.len(),
                bench.id,
                unknown[0]
            )));
        }
        let mut by_id: BTreeMap<String, Evaluator> = BTreeMap::new();
        for (id, recs) in ingest::by_evaluator(records, &bench) {
            let mut ev = Evaluator {
                kind: recs[0].kind,
                labels: BTreeMap::new(),
                distributions: BTreeMap::new(),
                confidences: BTreeMap::new(),
                runs: Vec::new(),
            };
            let mut seen = BTreeSet::new();
            for r in recs {
                if !seen.insert(r.pitch_id.clone()) {
                    return Err(Error::Validation(format!("evaluator {id} has two records for {}", r.pitch_id)));
                }
                if r.kind != ev.kind {
                    return Err(Error::Validation(format!("evaluator {id} mixes record kinds")));
                }
                if let Some(p) = r.prediction() {
                    ev.labels.insert(r.pitch_id.clone(), p.label);
                    if let Some(d) = p.distribution {
                        ev.distributions.insert(r.pitch_id.clone(), d);
                    }
                    if !p.confidence.is_nan() {
                        ev.confidences.insert(r.pitch_id.clone(), p.confidence);
                    }
                } else if let Some(agg) = r.run_aggregate(truths[&r.pitch_id]) {
                    if let Some(m) = agg.majority {
                        ev.labels.insert(r.pitch_id.clone(), m);
                    }
                    ev.runs.push(agg);
                }
            }
            by_id.insert(id, ev);
        }
        if by_id.is_empty() {
            return Err(Error::Usage("no prediction records given".into()));
        }
        Ok(Self { bench, truths, by_id })
    }

    /// Predicted and true labels over the pitches the evaluator labelled.
    fn pairs(&self, ev: &Evaluator) -> (Vec<String>, Vec<Tier>, Vec<Tier>) {
        let mut ids = Vec::new();
        let mut preds = Vec::new();
        let mut truths = Vec::new();
        for (pid, label) in &ev.labels {
            ids.push(pid.clone());
            preds.push(*label);
            truths.push(self.truths[pid]);
        }
        (ids, preds, truths)
    }
}

fn cmd_ingest(a: &IngestArgs, cli: &Cli, ctx: &mut RunContext) -> Result<()> {
    let mut summary = serde_json::Map::new();
    let mut bench = None;
    if let Some(b) = &a.bench {
        let set = load_bench(b, ctx)?;
        let mut counts = BTreeMap::new();
        for p in &set.pitches {
            *counts.entry(p.truth.name()).or_insert(0usize) += 1;
        }
        summary.insert("benchmark".into(), json!({"id": set.id, "pitches": set.len(), "per_tier": counts}));
        bench = Some(set);
    }
    if !a.preds.is_empty() {
        let mut per_file = Vec::new();
        for p in &a.preds {
            ctx.input(p);
            let recs = load_predictions(p)?;
            let evaluators: BTreeSet<&str> = recs.iter().map(|r| r.evaluator_id.as_str()).collect();
            let unknown = bench.as_ref().map(|b| ingest::unknown_pitches(&recs, b)).unwrap_or_default();
            if !unknown.is_empty() {
                return Err(Error::Validation(format!(
                    "{}: {} records reference unknown pitches, first {:?}",
                    p.display(),
                    unknown.len(),
                    unknown[0]
                )));
            }
            per_file.push(json!({"path": p, "records": recs.len(), "evaluators": evaluators}));
        }
        summary.insert("predictions".into(), Value::Array(per_file));
    }
    if let Some(r) = &a.ratings {
        ctx.input(r);
        let filter = cli.min_mean_seconds.map(|s| RatingFilter { min_mean_seconds: s });
        let load = load_ratings(r, filter.as_ref())?;
        let raters: BTreeSet<&str> = load.records.iter().map(|r| r.rater_id.as_str()).collect();
        summary.insert(
            "ratings".into(),
            json!({"records": load.records.len(), "raters": raters.len(), "excluded_raters": load.excluded_raters}),
        );
    }
    if let (Some(pool), Some(n)) = (&a.pool, a.per_tier) {
        let pool_set = load_bench(pool, ctx)?;
        let set = assemble_balanced(&pool_set.id, &pool_set.pitches, n, cli.seed)?;
        let path = cli.out.join("benchmark.jsonl");
        ingest::write_jsonl(&path, &set.pitches)?;
        ctx.outputs.insert(path);
        summary.insert("assembled".into(), json!({"pitches": set.len(), "per_tier": n}));
    }
    if summary.is_empty() {
        return Err(Error::Usage("give at least one of --bench, --preds, --ratings, --pool".into()));
    }
    ctx.summary = Value::Object(summary.clone());
    ctx.write_json(&cli.out, "ingest.json", &summary)?;
    Ok(())
}

fn resolve_prompt(spec: &str, out: &Path, ctx: &mut RunContext) -> Result<PathBuf> {
    if let Some(text) = crate::prompts::bundled(spec) {
        return ctx.write_text(out, &format!("prompt_{spec}.txt"), text);
    }
    let p = PathBuf::from(spec);
    if !p.exists() {
        return Err(Error::Usage(format!(
            "--prompt {spec}: neither a bundled prompt ({}) nor an existing file",
            crate::prompts::NAMES.join(", ")
        )));
    }
    ctx.input(&p);
    Ok(p)
}

fn cmd_collect(a: &CollectArgs, out: &Path, ctx: &mut RunContext) -> Result<()> {
    let bench = load_bench(&a.bench, ctx)?;
    let prompt = resolve_prompt(&a.prompt, out, ctx)?;
    let endpoint = EndpointConfig {
        base_url: a.base_url.clone(),
        model_name: a.model.clone(),
        auth_env_var: a.auth_env_var.clone(),
        max_concurrent: a.max_concurrent,
        requests_per_minute: if a.mock { 0 } else { a.rpm },
        retry_max: a.retry_max,
        timeout_seconds: a.timeout_seconds,
        backoff_base_ms: if a.mock { 0 } else { EndpointConfig::default().backoff_base_ms },
        ..EndpointConfig::default()
    };
    let mut params = serde_json::Map::new();
    if let Some(t) = a.temperature {
        params.insert("temperature".into(), json!(t));
    }
    if let Some(t) = a.top_p {
        params.insert("top_p".into(), json!(t));
    }
    if let Some(t) = a.max_tokens {
        params.insert("max_tokens".into(), json!(t));
    }
    let opts = CollectOptions {
        mode: match a.mode {
            ModeArg::Logprob => CollectMode::Logprob,
            ModeArg::Sampled => CollectMode::Sampled,
        },
        samples: a.samples,
        sampling_params: params,
        text_field: if a.short_text { TextField::Short } else { TextField::Full },
        evaluator_id: a.evaluator.clone(),
    };
    let cache = Cache::open(&a.cache.clone().unwrap_or_else(|| out.join("cache")))?;
    let predictions = out.join("predictions.jsonl");
    let mock;
    let http;
    let transport: &dyn collect::Transport = if a.mock {
        mock = MockTransport::scripted(vec![
            ("Fair".into(), -0.9),
            ("Strong".into(), -1.3),
            ("Limited".into(), -2.0),
            ("Exceptional".into(), -2.6),
        ]);
        &mock
    } else {
        http = HttpTransport::new()?;
        &http
    };
    let client = Client::new(endpoint, transport, cache)?;
    let summary = collect::collect_benchmark(&client, &prompt, &bench, &opts, &predictions)?;
    ctx.outputs.insert(predictions);
    if !summary.failures.is_empty() {
        ctx.outputs.insert(collect::failures_path(&summary.output));
    }
    ctx.summary = serde_json::to_value(&summary).expect("summary serialises");
    ctx.write_json(out, "collect.json", &summary)?;
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    #[serde(default)]
    evaluator_id: Option<String>,
    pitch_id: String,
    #[serde(default)]
    label_logprobs: Option<LabelLogprobs>,
    #[serde(default)]
    texts: Option<Vec<String>>,
    #[serde(default)]
    text: Option<String>,
}

fn cmd_classify(a: &ClassifyArgs, out: &Path, ctx: &mut RunContext) -> Result<()> {
    ctx.input(&a.raw);
    let text = fs::read_to_string(&a.raw).map_err(Error::io(&a.raw))?;
    let mut records = Vec::new();
    let mut unresolved = 0usize;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |m: String| Error::Validation(format!("{}:{}: {m}", a.raw.display(), i + 1));
        let raw: RawLine = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let evaluator = a
            .evaluator
            .clone()
            .or(raw.evaluator_id)
            .ok_or_else(|| bad("no evaluator_id on the line and no --evaluator".into()))?;
        let mut rec = PredictionRecord {
            evaluator_id: evaluator,
            pitch_id: raw.pitch_id,
            kind: PredictionKind::Logprob,
            distribution: None,
            runs: None,
            label: None,
            confidence: None,
        };
        match (raw.label_logprobs, raw.texts, raw.text) {
            (Some(lp), None, None) => rec.distribution = Some(softmax_labels(&lp).map_err(|e| bad(e.to_string()))?),
            (None, Some(texts), None) => {
                rec.kind = PredictionKind::Sampled;
                let runs: Vec<RunRecord> = texts
                    .into_iter()
                    .map(|t| RunRecord { parsed: parse_label_text(&t).tier(), raw_text: t })
                    .collect();
                unresolved += runs.iter().filter(|r| r.parsed.is_none()).count();
                rec.runs = Some(runs);
            }
            (None, None, Some(t)) => {
                rec.kind = PredictionKind::LabelOnly;
                match parse_label_text(&t).tier() {
                    Some(tier) => rec.label = Some(tier),
                    None => return Err(bad(format!("cannot resolve label text {t:?}"))),
                }
            }
            _ => return Err(bad("give exactly one of label_logprobs, texts, text".into())),
        }
        records.push(rec);
    }
    let path = out.join("predictions.jsonl");
    ingest::write_jsonl(&path, &records)?;
    ctx.outputs.insert(path);
    ctx.summary = json!({"records": records.len(), "unresolved_runs": unresolved});
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvaluatorMetrics {
    kind: PredictionKind,
    labelled: usize,
    missing: Vec<String>,
    report: MetricsReport,
    confusion: [[u64; 4]; 4],
    confusion_row_normalized: [[f64; 4]; 4],
    error_profile: metrics::ErrorProfile,
    prediction_entropy_bits: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sampled: Option<Value>,
}

fn run_metrics(ev: &Evaluators, ci: &CiSpec, format: Format, out: &Path, ctx: &mut RunContext) -> Result<()> {
    let mut table = BTreeMap::new();
    let mut rows = Vec::new();
    for (id, e) in &ev.by_id {
        let (_, preds, truths) = ev.pairs(e);
        if preds.is_empty() {
            log::warn!("{id} has no resolved labels");
            continue;
        }
        let report = evaluate(&preds, &truths, ev.bench.chance, Some(ci))?;
        let cm = confusion(&preds, &truths)?;
        let sampled = (e.kind == PredictionKind::Sampled).then(|| {
            let (maj, n) = majority_accuracy(&e.runs, &ev.truths);
            json!({
                "pitch_mean_accuracy": pitch_mean_accuracy(&e.runs),
                "run_pooled_accuracy": run_pooled_accuracy(&e.runs),
                "majority_accuracy": maj,
                "effective_n": n,
                "tied_pitches": e.runs.iter().filter(|r| r.tied).count(),
            })
        });
        let missing = ev.bench.pitches.iter().filter(|p| !e.labels.contains_key(&p.id)).map(|p| p.id.clone()).collect();
        rows.push((id.clone(), id.clone(), report.clone()));
        table.insert(
            id.clone(),
            EvaluatorMetrics {
                kind: e.kind,
                labelled: preds.len(),
                missing,
                confusion: cm.counts,
                confusion_row_normalized: cm.row_normalized(),
                error_profile: error_profile(&preds, &truths)?,
                prediction_entropy_bits: prediction_entropy(&cm.predicted_counts())?,
                report,
                sampled,
            },
        );
    }
    let body = json!({"benchmark": ev.bench.id, "chance": ev.bench.chance, "evaluators": table});
    ctx.write_json(out, "metrics.json", &body)?;
    if format == Format::Csv {
        let mut buf = Vec::new();
        metrics::write_csv(&mut buf, &rows)?;
        ctx.write_text(out, "metrics.csv", &String::from_utf8(buf).expect("csv is utf-8"))?;
    }
    ctx.summary = json!({"evaluators": table.len()});
    Ok(())
}

fn run_calibrate(
    ev: &Evaluators,
    ratings: Option<&[RaterRecord]>,
    bins: usize,
    out: &Path,
    ctx: &mut RunContext,
) -> Result<()> {
    let mut reports = BTreeMap::new();
    for (id, e) in &ev.by_id {
        if e.confidences.is_empty() {
            continue;
        }
        let mut items = Vec::new();
        let mut dists = Vec::new();
        let mut truths = Vec::new();
        for (pid, &c) in &e.confidences {
            let truth = ev.truths[pid];
            items.push(ScoredItem { pitch_id: pid.clone(), confidence: c, correct: e.labels.get(pid) == Some(&truth) });
            if let Some(d) = e.distributions.get(pid) {
                dists.push(*d);
                truths.push(truth);
            }
        }
        let conf: Vec<f64> = items.iter().map(|i| i.confidence).collect();
        let correct: Vec<bool> = items.iter().map(|i| i.correct).collect();
        let with_dists = (dists.len() == items.len()).then_some((&dists[..], &truths[..]));
        let report = calibration_report(&conf, &correct, with_dists, bins)?;
        let curve = selective_curve(&items)?;
        reports.insert(id.clone(), json!({"report": report, "selective_curve": curve}));
    }
    if let Some(records) = ratings {
        for panel in [Panel::Expert, Panel::Junior] {
            let mut items = Vec::new();
            for r in records.iter().filter(|r| r.panel == panel) {
                let Some(&truth) = ev.truths.get(&r.pitch_id) else { continue };
                items.push(ScoredItem {
                    pitch_id: format!("{}:{}", r.rater_id, r.pitch_id),
                    confidence: likert_to_unit(r.confidence)?,
                    correct: r.tier == truth,
                });
            }
            if items.is_empty() {
                continue;
            }
            let conf: Vec<f64> = items.iter().map(|i| i.confidence).collect();
            let correct: Vec<bool> = items.iter().map(|i| i.correct).collect();
            let report = calibration_report(&conf, &correct, None, bins)?;
            let curve = selective_curve(&items)?;
            let key = format!("panel:{}", if panel == Panel::Expert { "expert" } else { "junior" });
            reports.insert(key, json!({"report": report, "selective_curve": curve}));
        }
    }
    if reports.is_empty() {
        return Err(Error::Validation("no evaluator carries confidences".into()));
    }
    ctx.write_json(out, "calibration.json", &reports)?;
    ctx.summary = json!({"calibrated": reports.keys().collect::<Vec<_>>()});
    Ok(())
}

fn cmd_agreement(a: &AgreementArgs, out: &Path, ctx: &mut RunContext) -> Result<()> {
    let mut evaluators: BTreeMap<String, BTreeMap<String, Tier>> = BTreeMap::new();
    if !a.preds.is_empty() {
        let mut records = Vec::new();
        for p in &a.preds {
            ctx.input(p);
            records.extend(load_predictions(p)?);
        }
        let bench = match &a.bench {
            Some(b) => load_bench(b, ctx)?,
            None => {
                // agreement needs no truths; a synthetic benchmark keeps every pitch
                let ids: BTreeSet<&str> = records.iter().map(|r| r.pitch_id.as_str()).collect();
                BenchmarkSet::new(
                    "agreement",
                    ids.into_iter()
                        .map(|id| ingest::Pitch {
                            id: id.to_string(),
                            field: crate::journals::Field::Management,
                            text_full: String::new(),
                            text_short: None,
                            truth: Tier::Fair,
                            journal: None,
                            research_domain: None,
                        })
                        .collect(),
                )
            }
        };
        let ev = Evaluators::from_records(bench, &records)?;
        for (id, e) in ev.by_id {
            evaluators.insert(id, e.labels);
        }
    }
    if let Some(r) = &a.ratings {
        let records = load_rating_records(r, ctx)?;
        for rec in records.iter().filter(|r| a.panel.is_none_or(|p| Panel::from(p) == r.panel)) {
            evaluators.entry(rec.rater_id.clone()).or_default().insert(rec.pitch_id.clone(), rec.tier);
        }
    }
    if evaluators.len() < 2 {
        return Err(Error::Usage("agreement needs at least two evaluators".into()));
    }
    let report: AgreementReport = crate::stats::agreement_report(&evaluators);
    ctx.write_json(out, "agreement.json", &report)?;
    ctx.summary = json!({"evaluators": evaluators.len(), "fleiss_kappa": report.fleiss_kappa});
    Ok(())
}

#[derive(Debug, Serialize)]
struct PairComparison {
    a: String,
    b: String,
    test: TestResult,
    p_holm: f64,
}

#[allow(clippy::too_many_arguments)]
fn run_stats(
    ev: &Evaluators,
    mode: McNemarMode,
    reference: Option<&str>,
    matched: Option<(&[RaterRecord], Panel, f64, usize)>,
    seed: u64,
    format: Format,
    out: &Path,
    ctx: &mut RunContext,
) -> Result<()> {
    let correct_map = |e: &Evaluator| -> BTreeMap<String, bool> {
        e.labels.iter().map(|(p, l)| (p.clone(), *l == ev.truths[p])).collect()
    };
    let maps: BTreeMap<&String, BTreeMap<String, bool>> = ev.by_id.iter().map(|(id, e)| (id, correct_map(e))).collect();

    let mut per_evaluator = BTreeMap::new();
    for (id, m) in &maps {
        let k = m.values().filter(|c| **c).count() as u64;
        let n = m.len() as u64;
        if n == 0 {
            continue;
        }
        let binom = binomial_test(k, n, ev.bench.chance, Sidedness::Greater)?;
        let wilson = proportion_ci(k, n, 0.95, CiMethod::Wilson)?;
        per_evaluator.insert((*id).clone(), json!({"correct": k, "n": n, "accuracy": k as f64 / n as f64, "binomial_vs_chance": binom, "wilson_95": wilson}));
    }

    if let Some(r) = reference {
        if !maps.contains_key(&r.to_string()) {
            return Err(Error::Usage(format!("--reference {r} is not among the evaluators")));
        }
    }
    let ids: Vec<&String> = maps.keys().copied().collect();
    let mut pairs = Vec::new();
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            if reference.is_some_and(|r| r != a.as_str() && r != b.as_str()) {
                continue;
            }
            let common: Vec<&String> = maps[a].keys().filter(|p| maps[b].contains_key(*p)).collect();
            if common.is_empty() {
                continue;
            }
            let fa: Vec<bool> = common.iter().map(|p| maps[a][*p]).collect();
            let fb: Vec<bool> = common.iter().map(|p| maps[b][*p]).collect();
            pairs.push(((*a).clone(), (*b).clone(), mcnemar(&fa, &fb, mode)?));
        }
    }
    let adjusted = holm(&pairs.iter().map(|p| p.2.p).collect::<Vec<_>>());
    let comparisons: Vec<PairComparison> = pairs
        .into_iter()
        .zip(adjusted)
        .map(|((a, b, test), p_holm)| PairComparison { a, b, test, p_holm })
        .collect();

    let cochran = if ids.len() >= 3 {
        let common: Vec<&String> =
            ev.bench.pitches.iter().map(|p| &p.id).filter(|p| ids.iter().all(|id| maps[*id].contains_key(*p))).collect();
        let matrix: Vec<Vec<bool>> = common.iter().map(|p| ids.iter().map(|id| maps[*id][*p]).collect()).collect();
        (!matrix.is_empty()).then(|| cochran_q(&matrix)).transpose()?
    } else {
        None
    };

    let matched_n = match matched {
        Some((records, panel, target, draws)) => {
            let ratings = panel_labels(records, panel);
            let ratings: BTreeMap<String, Vec<(String, Tier)>> =
                ratings.into_iter().filter(|(p, _)| ev.truths.contains_key(p)).collect();
            Some(matched_n_subsample(&ratings, &ev.truths, target, draws, 0.95, seed)?)
        }
        None => None,
    };

    let body = json!({
        "mcnemar_mode": match mode { McNemarMode::Exact => "exact", McNemarMode::ContinuityCorrected => "continuity_corrected" },
        "per_evaluator": per_evaluator,
        "pairwise": comparisons,
        "cochran_q": cochran,
        "matched_n": matched_n,
    });
    ctx.write_json(out, "stats.json", &body)?;
    if format == Format::Csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["comparison", "test", "statistic", "p", "p_holm", "n"]).map_err(metrics::MetricsError::from)?;
        for c in &comparisons {
            w.write_record([
                format!("{} vs {}", c.a, c.b),
                c.test.name.clone(),
                c.test.statistic.map_or(String::new(), |s| format!("{s:.3}")),
                format!("{:.3e}", c.test.p),
                format!("{:.3e}", c.p_holm),
                c.test.n.to_string(),
            ])
            .map_err(metrics::MetricsError::from)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
        ctx.write_text(out, "stats.csv", &String::from_utf8(bytes).expect("csv is utf-8"))?;
    }
    ctx.summary = json!({"comparisons": comparisons.len()});
    Ok(())
}

/// Each labeler's pitch → tier map: prediction evaluators plus, when given,
/// the raters of one panel.
fn consensus_labelers(
    ev: &Evaluators,
    ratings: Option<&[RaterRecord]>,
    panel: Panel,
) -> BTreeMap<String, BTreeMap<String, Tier>> {
    let mut out: BTreeMap<String, BTreeMap<String, Tier>> =
        ev.by_id.iter().map(|(id, e)| (id.clone(), e.labels.clone())).collect();
    for r in ratings.unwrap_or_default().iter().filter(|r| r.panel == panel) {
        out.entry(format!("rater:{}", r.rater_id)).or_default().insert(r.pitch_id.clone(), r.tier);
    }
    out
}

fn default_policies(n: usize) -> Vec<String> {
    (n / 2 + 1..=n).rev().map(|k| format!("{k}of{n}")).collect()
}

fn run_consensus(
    bench: &BenchmarkSet,
    labelers: &BTreeMap<String, BTreeMap<String, Tier>>,
    policies: &[String],
    format: Format,
    out: &Path,
    ctx: &mut RunContext,
) -> Result<()> {
    let n = labelers.len();
    if n < 2 {
        return Err(Error::Usage("consensus needs at least two labelers".into()));
    }
    let mut per_pitch: BTreeMap<String, Vec<Tier>> = BTreeMap::new();
    for p in &bench.pitches {
        let labels: Vec<Tier> = labelers.values().filter_map(|m| m.get(&p.id).copied()).collect();
        if !labels.is_empty() {
            per_pitch.insert(p.id.clone(), labels);
        }
    }
    let names = if policies.is_empty() { default_policies(n) } else { policies.to_vec() };
    let truths = bench.truths();
    let mut rows = Vec::new();
    for name in &names {
        let policy: ConsensusPolicy = name.parse()?;
        let r = consensus_filter(&per_pitch, &truths, &policy)?;
        rows.push(json!({
            "policy": policy.name(),
            "covered": r.covered_pitch_ids.len(),
            "pitches": per_pitch.len(),
            "coverage": r.coverage,
            "accuracy": r.accuracy,
            "per_tier_accuracy": r.per_tier_accuracy,
            "covered_pitch_ids": r.covered_pitch_ids,
        }));
    }
    let body = json!({"labelers": labelers.keys().collect::<Vec<_>>(), "rows": rows});
    ctx.write_json(out, "consensus.json", &body)?;
    if format == Format::Csv {
        let mut text = String::from("policy,covered,pitches,coverage,accuracy\n");
        for r in &rows {
            text.push_str(&format!(
                "{},{},{},{:.4},{}\n",
                r["policy"].as_str().unwrap_or_default(),
                r["covered"],
                r["pitches"],
                r["coverage"].as_f64().unwrap_or(0.0),
                r["accuracy"].as_f64().map_or(String::new(), |a| format!("{a:.4}")),
            ));
        }
        ctx.write_text(out, "consensus.csv", &text)?;
    }
    ctx.summary = json!({"policies": rows.len()});
    Ok(())
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

fn run_ensemble(
    ev: &Evaluators,
    min_size: usize,
    max_size: Option<usize>,
    top: Option<usize>,
    format: Format,
    out: &Path,
    ctx: &mut RunContext,
) -> Result<()> {
    let members: BTreeMap<String, BTreeMap<String, LabelDistribution>> = ev
        .by_id
        .iter()
        .filter(|(_, e)| !e.distributions.is_empty())
        .map(|(id, e)| (id.clone(), e.distributions.clone()))
        .collect();
    let ids: Vec<&String> = members.keys().collect();
    let max = max_size.unwrap_or(ids.len()).min(ids.len());
    if ids.len() < 2 || min_size.max(2) > max {
        return Err(Error::Usage("ensembles need at least two evaluators with distributions".into()));
    }
    let mut ranked = Vec::new();
    let mut best_preds = BTreeMap::new();
    for size in min_size.max(2)..=max {
        for combo in combinations(ids.len(), size) {
            let spec = EnsembleSpec::uniform(combo.iter().map(|&i| ids[i].clone()));
            let (preds, _skipped) = ensemble_predictions(&spec, &members)?;
            if preds.is_empty() {
                continue;
            }
            let labels: Vec<Tier> = preds.iter().map(|p| p.label).collect();
            let truths: Vec<Tier> = preds.iter().map(|p| ev.truths[&p.pitch_id]).collect();
            let cm = confusion(&labels, &truths)?;
            let report = metrics::summarize(&cm, ev.bench.chance)?;
            best_preds.insert(spec.label(), preds);
            ranked.push(RankedEnsemble { spec, accuracy: report.accuracy, macro_f1: report.macro_f1 });
        }
    }
    let mut ranked = rank_ensembles(ranked);
    if let Some(t) = top {
        ranked.truncate(t);
    }
    let rows: Vec<Value> = ranked
        .iter()
        .enumerate()
        .map(|(i, r)| json!({"rank": i + 1, "members": r.spec.member_ids, "accuracy": r.accuracy, "macro_f1": r.macro_f1}))
        .collect();
    ctx.write_json(out, "ensembles.json", &rows)?;
    if let Some(best) = ranked.first() {
        let label = best.spec.label();
        let records: Vec<PredictionRecord> = best_preds[&label]
            .iter()
            .map(|p| PredictionRecord {
                evaluator_id: format!("ensemble:{label}"),
                pitch_id: p.pitch_id.clone(),
                kind: PredictionKind::Logprob,
                distribution: p.distribution,
                runs: None,
                label: None,
                confidence: None,
            })
            .collect();
        let path = out.join("ensemble_best.jsonl");
        ingest::write_jsonl(&path, &records)?;
        ctx.outputs.insert(path);
    }
    if format == Format::Csv {
        let mut text = String::from("rank,members,accuracy,macro_f1\n");
        for (i, r) in ranked.iter().enumerate() {
            text.push_str(&format!("{},{},{:.4},{:.4}\n", i + 1, r.spec.label(), r.accuracy, r.macro_f1));
        }
        ctx.write_text(out, "ensembles.csv", &text)?;
    }
    ctx.summary = json!({"ensembles": ranked.len()});
    Ok(())
}

fn parse_strata(s: &str) -> Result<BTreeMap<u8, usize>> {
    let bad = || Error::Usage(format!("--strata {s:?}: expected distance:count pairs like 1:150,2:100"));
    let mut out = BTreeMap::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (d, c) = part.split_once(':').ok_or_else(bad)?;
        out.insert(d.trim().parse().map_err(|_| bad())?, c.trim().parse().map_err(|_| bad())?);
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

fn cmd_pairwise(p: &PairwiseCommand, seed: u64, out: &Path, ctx: &mut RunContext) -> Result<()> {
    match p {
        PairwiseCommand::Build { bench, strata } => {
            let b = load_bench(bench, ctx)?;
            let strata = if strata.is_empty() { default_strata() } else { parse_strata(strata)? };
            let set = build_pairs(&b, seed, &strata)?;
            let path = out.join("pairs.jsonl");
            set.save(&path)?;
            ctx.outputs.insert(path);
            let mut per = BTreeMap::new();
            for pair in &set.pairs {
                *per.entry(pair.distance).or_insert(0usize) += 1;
            }
            ctx.summary = json!({"pairs": set.pairs.len(), "per_distance": per});
        }
        PairwiseCommand::Score { pairs, choices } => {
            ctx.input(pairs);
            ctx.input(choices);
            let set = PairSet::load(pairs)?;
            let score = score_pairs(&load_choices(choices)?, &set)?;
            ctx.write_json(out, "pairwise_score.json", &score)?;
            ctx.summary = json!({"correct": score.overall.correct, "total": score.overall.total});
        }
        PairwiseCommand::Discord { pairs, a, b } => {
            for x in [pairs, a, b] {
                ctx.input(x);
            }
            let set = PairSet::load(pairs)?;
            let d = discordance(&load_choices(a)?, &load_choices(b)?, &set)?;
            ctx.write_json(out, "discordance.json", &d)?;
            ctx.summary = json!({"a_only": d.a_only, "b_only": d.b_only, "p": d.mcnemar.p});
        }
    }
    Ok(())
}

fn cmd_rlsim(a: &RlsimArgs, seed: u64, out: &Path, ctx: &mut RunContext) -> Result<()> {
    let mut cfg = TrainConfig { seed, ..TrainConfig::default() };
    macro_rules! set {
        ($($field:ident).+ <- $arg:ident) => {
            if let Some(v) = a.$arg {
                cfg.$($field).+ = v;
            }
        };
    }
    set!(steps <- steps);
    set!(group_size <- group_size);
    set!(learning_rate <- learning_rate);
    set!(prompts <- prompts);
    set!(buckets <- buckets);
    set!(hint_strength <- hint_strength);
    set!(inner_epochs <- inner_epochs);
    set!(router.k_diagnostic <- k_diagnostic);
    set!(router.tau <- tau);
    set!(clip.epsilon <- epsilon);
    set!(clip.epsilon_higher <- epsilon_higher);
    set!(clip.sigma_floor <- sigma_floor);
    set!(reward.exact_reward <- exact_reward);
    set!(reward.adjacent_reward <- adjacent_reward);
    set!(reward.far_reward <- far_reward);
    let (policy, logs) = train(&cfg)?;
    let log_path = out.join("rlsim_log.jsonl");
    let _ = fs::remove_file(&log_path);
    rlsim::write_training_log(&log_path, &logs)?;
    ctx.outputs.insert(log_path);
    let prompts = toy_prompts(cfg.prompts, cfg.buckets);
    let summary = json!({
        "config": cfg,
        "final_step": logs.last(),
        "greedy_accuracy": greedy_accuracy(&policy, &prompts),
    });
    ctx.write_json(out, "rlsim.json", &summary)?;
    ctx.summary = summary;
    Ok(())
}

fn cmd_report(a: &ReportArgs, cli: &Cli, ctx: &mut RunContext) -> Result<()> {
    let out = cli.out.as_path();
    let ev = Evaluators::load(&a.inputs, ctx)?;
    let ratings = a.ratings.as_deref().map(|p| load_rating_records(p, ctx)).transpose()?;
    let ci = CiSpec { method: CiMethod::Wilson, level: 0.95, draws: a.draws, seed: cli.seed };
    let mut sections = Vec::new();

    run_metrics(&ev, &ci, Format::Csv, out, ctx)?;
    sections.push("metrics");
    match run_calibrate(&ev, ratings.as_deref(), a.bins, out, ctx) {
        Ok(()) => sections.push("calibration"),
        Err(Error::Validation(m)) => log::info!("calibration skipped: {m}"),
        Err(e) => return Err(e),
    }
    let mut labelers: BTreeMap<String, BTreeMap<String, Tier>> =
        ev.by_id.iter().map(|(id, e)| (id.clone(), e.labels.clone())).collect();
    if let Some(r) = &ratings {
        for rec in r {
            labelers.entry(format!("rater:{}", rec.rater_id)).or_default().insert(rec.pitch_id.clone(), rec.tier);
        }
    }
    if labelers.len() >= 2 {
        let report = crate::stats::agreement_report(&labelers);
        ctx.write_json(out, "agreement.json", &report)?;
        sections.push("agreement");
    }
    run_stats(&ev, McNemarMode::Exact, None, None, cli.seed, Format::Csv, out, ctx)?;
    sections.push("stats");
    let model_labelers = consensus_labelers(&ev, None, Panel::Expert);
    if model_labelers.len() >= 2 {
        run_consensus(&ev.bench, &model_labelers, &a.policies, Format::Csv, out, ctx)?;
        sections.push("consensus");
    }
    if ev.by_id.values().filter(|e| !e.distributions.is_empty()).count() >= 2 {
        run_ensemble(&ev, 2, None, None, Format::Csv, out, ctx)?;
        sections.push("ensembles");
    }
    let charts = chart_data(out)?;
    ctx.write_json(out, "charts.json", &charts)?;
    ctx.summary = json!({"sections": sections});
    Ok(())
}

/// Plain JSON series lifted from the section outputs.
fn chart_data(out: &Path) -> Result<Value> {
    let read = |name: &str| -> Result<Option<Value>> {
        let p = out.join(name);
        match fs::read_to_string(&p) {
            Ok(t) => Ok(Some(serde_json::from_str(&t).map_err(|e| Error::Validation(e.to_string()))?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::Io { path: p, source: e }),
        }
    };
    let mut charts = serde_json::Map::new();
    if let Some(m) = read("metrics.json")? {
        let grids: serde_json::Map<String, Value> = m["evaluators"]
            .as_object()
            .into_iter()
            .flatten()
            .map(|(k, v)| (k.clone(), v["confusion"].clone()))
            .collect();
        charts.insert("confusion_grids".into(), Value::Object(grids));
    }
    if let Some(c) = read("calibration.json")? {
        let mut bins = serde_json::Map::new();
        let mut curves = serde_json::Map::new();
        for (k, v) in c.as_object().into_iter().flatten() {
            bins.insert(k.clone(), v["report"]["bins"].clone());
            curves.insert(k.clone(), v["selective_curve"]["points"].clone());
        }
        charts.insert("reliability_bins".into(), Value::Object(bins));
        charts.insert("selective_curves".into(), Value::Object(curves));
    }
    if let Some(c) = read("consensus.json")? {
        let series: Vec<Value> = c["rows"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|r| json!({"policy": r["policy"], "coverage": r["coverage"], "accuracy": r["accuracy"]}))
            .collect();
        charts.insert("consensus_coverage".into(), Value::Array(series));
    }
    Ok(Value::Object(charts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn strata_parsing() {
        assert_eq!(parse_strata("1:150,2:100,3:50").unwrap(), default_strata());
        assert!(parse_strata("1-150").is_err());
    }

    #[test]
    fn default_policy_ladder() {
        assert_eq!(default_policies(4), ["4of4", "3of4"]);
        assert_eq!(default_policies(5), ["5of5", "4of5", "3of5"]);
    }

    #[test]
    fn combination_counts() {
        assert_eq!(combinations(5, 2).len(), 10);
        assert_eq!(combinations(4, 4), vec![vec![0, 1, 2, 3]]);
    }
}
