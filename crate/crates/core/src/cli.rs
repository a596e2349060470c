//! Command-line interface: `train`, `predict`, `eval`, `stats` and `gradcheck`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dataio::{build_vocab, corpus_stats, load_dataset, load_predictions, read_pretrained, write_jsonl, CorpusStats};
use crate::decoding::predict;
use crate::error::{Error, Result};
use crate::evaluation::{align_by_id, error_breakdown, score, MetricsReport};
use crate::model::{load_checkpoint, save_checkpoint, Hyperparams, L2Mode, SelectionMetric, Variant};
use crate::training::{multi_run, run_gradcheck, MultiRunReport, RunArtifacts, Splits, GRADCHECK_TOLERANCE};
use crate::types::{SentenceRecord, Triplet};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_GRADCHECK_FAILED: i32 = 3;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAINLOG_FILE: &str = "trainlog.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Parser, Debug)]
#[command(name = "ote-mtl", version, about = "Opinion triplet extraction with a multi-task BiLSTM tagger and biaffine scorer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Train one model per seed and evaluate each on the test split.
    Train(TrainArgs),
    /// Predict triplets for a dataset with a saved checkpoint.
    Predict(PredictArgs),
    /// Score predictions against gold annotations.
    Eval(EvalArgs),
    /// Sentence, triplet and overlap counts per dataset file.
    Stats(StatsArgs),
    /// Finite-difference gradient check on a micro model.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug, Default)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds; `a-b` expands to an inclusive range.
    #[arg(long, value_parser = parse_seed_list)]
    seed: Option<SeedList>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    hyper: HyperFlags,
}

#[derive(Args, Debug, Default)]
struct HyperFlags {
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    d_e: Option<usize>,
    #[arg(long)]
    d_h: Option<usize>,
    #[arg(long)]
    d_r: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long, value_parser = parse_l2_mode)]
    l2_mode: Option<L2Mode>,
    #[arg(long)]
    freeze_embeddings: bool,
    #[arg(long, value_parser = parse_selection)]
    selection_metric: Option<SelectionMetric>,
    #[arg(long)]
    min_count: Option<usize>,
    #[arg(long)]
    init_bound: Option<f64>,
    #[arg(long)]
    pivot_threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    pivot_threshold: Option<f64>,
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Directory for the metrics file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Check a single variant instead of all three.
    #[arg(long)]
    variant: Option<Variant>,
}

#[derive(Clone, Debug, PartialEq)]
struct SeedList(Vec<u64>);

fn parse_seed_list(s: &str) -> std::result::Result<SeedList, String> {
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range '{part}'"))?;
                let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range '{part}'"))?;
                if a > b {
                    return Err(format!("empty seed range '{part}'"));
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| format!("bad seed '{part}'"))?),
        }
    }
    if seeds.is_empty() {
        return Err("seed list is empty".into());
    }
    Ok(SeedList(seeds))
}

fn parse_l2_mode(s: &str) -> std::result::Result<L2Mode, String> {
    match s {
        "squared" => Ok(L2Mode::Squared),
        "unsquared" => Ok(L2Mode::Unsquared),
        _ => Err(format!("unknown l2 mode '{s}' (expected squared or unsquared)")),
    }
}

fn parse_selection(s: &str) -> std::result::Result<SelectionMetric, String> {
    match s {
        "f1" => Ok(SelectionMetric::F1),
        "loss" => Ok(SelectionMetric::Loss),
        _ => Err(format!("unknown selection metric '{s}' (expected f1 or loss)")),
    }
}

/// Paths and run settings that sit next to the hyperparameters in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub jobs: usize,
    pub strict: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            train: None,
            val: None,
            test: None,
            embeddings: None,
            out: None,
            seeds: (0..10).collect(),
            jobs: 1,
            strict: false,
        }
    }
}

const SETTINGS_KEYS: [&str; 8] = ["train", "val", "test", "embeddings", "out", "seeds", "jobs", "strict"];

/// Hyperparameters plus run settings, stored as one flat JSON object.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainConfig {
    pub hyper: Hyperparams,
    pub settings: RunSettings,
}

impl TrainConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let Value::Object(map) = value else {
            return Err(Error::Config(format!("{}: config must be a JSON object", path.display())));
        };
        let (settings, hyper): (Map<String, Value>, Map<String, Value>) =
            map.into_iter().partition(|(k, _)| SETTINGS_KEYS.contains(&k.as_str()));
        let wrap = |e: serde_json::Error| Error::Config(format!("{}: {e}", path.display()));
        Ok(TrainConfig {
            hyper: serde_json::from_value(Value::Object(hyper)).map_err(wrap)?,
            settings: serde_json::from_value(Value::Object(settings)).map_err(wrap)?,
        })
    }

    pub fn to_json(&self) -> Value {
        let mut map = match serde_json::to_value(&self.hyper) {
            Ok(Value::Object(m)) => m,
            _ => Map::new(),
        };
        if let Ok(Value::Object(s)) = serde_json::to_value(&self.settings) {
            map.extend(s);
        }
        Value::Object(map)
    }
}

fn apply_flags(cfg: &mut TrainConfig, a: &TrainArgs) {
    let h = &mut cfg.hyper;
    let f = &a.hyper;
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = f.$flag { h.$field = v; }
        )*};
    }
    set!(variant => variant, alpha => alpha, gamma => gamma, lr => learning_rate, batch_size => batch_size,
         patience => patience, max_epochs => max_epochs, d_e => d_e, d_h => d_h, d_r => d_r,
         dropout => dropout_rate, l2_mode => l2_mode, selection_metric => selection_metric,
         min_count => min_count, init_bound => init_bound);
    if f.pivot_threshold.is_some() {
        h.pivot_threshold = f.pivot_threshold;
    }
    if f.freeze_embeddings {
        h.freeze_embeddings = true;
    }
    let s = &mut cfg.settings;
    for (dst, src) in [
        (&mut s.train, &a.train),
        (&mut s.val, &a.val),
        (&mut s.test, &a.test),
        (&mut s.embeddings, &a.embeddings),
        (&mut s.out, &a.out),
    ] {
        if src.is_some() {
            dst.clone_from(src);
        }
    }
    if let Some(seeds) = &a.seed {
        s.seeds.clone_from(&seeds.0);
    }
    if let Some(j) = a.jobs {
        s.jobs = j;
    }
    if a.strict {
        s.strict = true;
    }
}

fn resolve_train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::from_json(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?, p)?,
        None => TrainConfig::default(),
    };
    apply_flags(&mut cfg, a);
    cfg.hyper.validate()?;
    if cfg.settings.seeds.is_empty() {
        return Err(Error::Config("seed list is empty".into()));
    }
    if cfg.settings.jobs == 0 {
        return Err(Error::Config("jobs must be at least 1".into()));
    }
    Ok(cfg)
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    p.as_ref().ok_or_else(|| Error::Config(format!("missing --{what}")))
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn with_triplets(records: &[SentenceRecord], preds: &[Vec<Triplet>]) -> Vec<SentenceRecord> {
    records
        .iter()
        .zip(preds)
        .map(|(r, p)| SentenceRecord::new(r.id.clone(), r.tokens.clone(), p.clone()))
        .collect()
}

fn cmd_train(a: &TrainArgs) -> Result<i32> {
    let cfg = resolve_train_config(a)?;
    println!("resolved config: {}", serde_json::to_string(&cfg.to_json())?);
    let s = &cfg.settings;
    let hyper = &cfg.hyper;
    let out = required(&s.out, "out")?;
    let train = load_dataset(required(&s.train, "train")?, s.strict)?;
    let val = load_dataset(required(&s.val, "val")?, s.strict)?;
    let test = load_dataset(required(&s.test, "test")?, s.strict)?;
    create_dir(out)?;
    write_json(&out.join(CONFIG_FILE), &cfg.to_json())?;

    let vocab = build_vocab(&train, hyper.min_count);
    let pretrained = match &s.embeddings {
        Some(p) => {
            let rows = read_pretrained(p, &vocab, hyper.d_e)?;
            info!("pretrained vectors for {} of {} vocabulary entries", rows.found(), vocab.len());
            Some(rows)
        }
        None => None,
    };
    info!(
        "train {} / val {} / test {} sentences, vocabulary {}",
        train.len(),
        val.len(),
        test.len(),
        vocab.len()
    );

    let sink = |r: &RunArtifacts<'_>| -> Result<()> {
        let dir = out.join(format!("seed-{}", r.seed));
        create_dir(&dir)?;
        save_checkpoint(&dir.join(CHECKPOINT_FILE), r.params, hyper, &vocab)?;
        write_json(&dir.join(TRAINLOG_FILE), r.log)?;
        write_jsonl(dir.join(PREDICTIONS_FILE), &with_triplets(&test, r.predictions))?;
        let gold: Vec<Vec<Triplet>> = test.iter().map(|t| t.triplets.clone()).collect();
        let report = MetricsReport {
            prf: r.test,
            error_breakdown: Some(error_breakdown(&test, r.predictions)),
        };
        debug_assert_eq!(score(&gold, r.predictions), r.test);
        write_json(&dir.join(METRICS_FILE), &report)
    };
    let splits = Splits {
        train: &train,
        val: &val,
        test: &test,
    };
    let report = multi_run(&splits, &vocab, pretrained.as_ref(), hyper, &s.seeds, s.jobs, &sink)?;
    write_json(&out.join(METRICS_FILE), &report)?;
    print!("{}", render_runs(&report));
    Ok(EXIT_OK)
}

fn render_runs(r: &MultiRunReport) -> String {
    let mut s = format!("{:>6} {:>6} {:>10} {:>10} {:>10}\n", "seed", "best", "precision", "recall", "f1");
    for run in &r.runs {
        s += &format!(
            "{:>6} {:>6} {:>10.4} {:>10.4} {:>10.4}\n",
            run.seed, run.best_epoch, run.test.precision, run.test.recall, run.test.f1
        );
    }
    s += &format!(
        "{:>6} {:>6} {:>10.4} {:>10.4} {:>10.4}\n",
        "mean", "", r.mean.precision, r.mean.recall, r.mean.f1
    );
    s
}

fn cmd_predict(a: &PredictArgs) -> Result<i32> {
    let (params, mut hyper, vocab) = load_checkpoint(&a.checkpoint)?;
    if a.pivot_threshold.is_some() {
        hyper.pivot_threshold = a.pivot_threshold;
        hyper.validate()?;
    }
    println!("resolved config: {}", serde_json::to_string(&hyper)?);
    let data = load_dataset(&a.data, a.strict)?;
    let preds = predict(&data, &params, &hyper, &vocab);
    create_dir(&a.out)?;
    let path = a.out.join(PREDICTIONS_FILE);
    write_jsonl(&path, &with_triplets(&data, &preds))?;
    println!("wrote {} predictions to {}", preds.len(), path.display());
    Ok(EXIT_OK)
}

fn cmd_eval(a: &EvalArgs) -> Result<i32> {
    let gold = load_dataset(&a.gold, a.strict)?;
    let pred = load_predictions(&a.pred, a.strict)?;
    let aligned = align_by_id(&gold, &pred)?;
    let gold_sets: Vec<Vec<Triplet>> = gold.iter().map(|r| r.triplets.clone()).collect();
    let report = MetricsReport {
        prf: score(&gold_sets, &aligned),
        error_breakdown: Some(error_breakdown(&gold, &aligned)),
    };
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_json(&dir.join(METRICS_FILE), &report)?;
    }
    println!("{report}");
    Ok(EXIT_OK)
}

fn cmd_stats(a: &StatsArgs) -> Result<i32> {
    let mut rows: Vec<(String, CorpusStats)> = Vec::new();
    for p in &a.data {
        rows.push((p.display().to_string(), corpus_stats(&load_dataset(p, a.strict)?)));
    }
    if a.json {
        let map: Map<String, Value> = rows
            .iter()
            .map(|(name, s)| Ok((name.clone(), serde_json::to_value(s)?)))
            .collect::<Result<_>>()?;
        println!("{}", serde_json::to_string_pretty(&map)?);
    } else {
        println!("file\t{}", CorpusStats::TSV_HEADER);
        for (name, s) in &rows {
            println!("{name}\t{}", s.tsv_row());
        }
    }
    Ok(EXIT_OK)
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<i32> {
    let variants = match a.variant {
        Some(v) => vec![v],
        None => vec![Variant::Biaffine, Variant::Concat, Variant::Collapsed],
    };
    let mut worst: f64 = 0.0;
    for v in variants {
        let r = run_gradcheck(a.seed, v)?;
        println!("variant {}", serde_json::to_value(v)?.as_str().unwrap_or_default());
        for t in &r.tensors {
            println!("  {:<32} {:>12.3e}", t.name, t.relative_error);
        }
        worst = worst.max(r.max_relative_error);
    }
    let ok = worst < GRADCHECK_TOLERANCE;
    println!(
        "max relative error {worst:.3e} (tolerance {GRADCHECK_TOLERANCE:.0e}): {}",
        if ok { "PASS" } else { "FAIL" }
    );
    Ok(if ok { EXIT_OK } else { EXIT_GRADCHECK_FAILED })
}

/// Exit code for an error: configuration and argument problems are usage
/// errors, everything touching input files is a data error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Installs the logger; the level comes from `OTE_LOG_LEVEL` (default `info`).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("OTE_LOG_LEVEL", "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}
