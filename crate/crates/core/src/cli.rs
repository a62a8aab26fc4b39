//! `ndd-osr` command line.
//!
//! Every long option can also be set in a flat `key=value` file passed with
//! `--config`; options given on the command line win. Exit codes: 0 success,
//! 1 invalid input or configuration, 2 runtime failure.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde_json::json;

use crate::arpl::{DistanceKind, ScoreKind};
use crate::autoencoder::Activation;
use crate::error::{Error, Result};
use crate::ingest::{self, FeatureCache, Label, ScalingMode, SubjectRecord};
use crate::metrics::{self, Role, ScoredSample};
use crate::mmd::{Bandwidth, MmdConfig};
use crate::protocol::{self, Experiment, ExperimentConfig, ExportRow, FeatureStore, SyntheticSpec};
use crate::trainer::{self, checkpoint, ModelSpec, TrainConfig, TrainSet};

#[derive(Debug, Parser)]
#[command(
    name = "ndd-osr",
    version,
    args_override_self = true,
    about = "Open-set recognition of neurodevelopmental disorders from resting-state FC"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute FC feature vectors for every subject in a manifest.
    Extract(ExtractArgs),
    /// Train one model on the ID subjects of a manifest.
    Train(TrainArgs),
    /// Score subjects with a trained checkpoint.
    Eval(EvalArgs),
    /// Run the 15-run cross-validation protocol.
    Protocol(ProtocolArgs),
    /// Generate a synthetic cohort.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Subject manifest CSV.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Skip subjects whose series cannot be read or correlated.
    #[arg(long)]
    pub skip_bad: bool,
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    /// Subject manifest CSV.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Feature cache from `extract`; extracted on the fly when absent.
    #[arg(long)]
    pub features: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1024")]
    pub hidden_dims: Vec<usize>,
    #[arg(long, default_value_t = 128)]
    pub embedding_dim: usize,
    #[arg(long, default_value = "relu", value_parser = parse_activation)]
    pub activation: Activation,
    /// Logit temperature on reciprocal-point distances.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// combined | euclidean
    #[arg(long, default_value = "combined", value_parser = parse_distance)]
    pub distance: DistanceKind,
    /// max-distance | max-softmax
    #[arg(long, default_value = "max-distance", value_parser = parse_score)]
    pub score: ScoreKind,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lr_decay: f64,
    /// Epochs between learning-rate decays.
    #[arg(long, default_value_t = 30)]
    pub lr_step: usize,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda_amc: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha_recon: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta_mmd: f64,
    /// RBF bandwidth: `median` or a positive number.
    #[arg(long, default_value = "median", value_parser = parse_bandwidth)]
    pub bandwidth: Bandwidth,
    /// Minimum rows per domain before a batch contributes MMD.
    #[arg(long, default_value_t = 2)]
    pub mmd_min_side: usize,
    /// none | per-subject | global
    #[arg(long, default_value = "per-subject")]
    pub scaling: ScalingMode,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub mms_a: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub mms_b: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ModelArgs {
    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            model: ModelSpec {
                hidden_dims: self.hidden_dims.clone(),
                embedding_dim: self.embedding_dim,
                activation: self.activation,
                gamma: self.gamma,
                distance: self.distance,
                score: self.score,
            },
            train: TrainConfig {
                batch_size: self.batch_size,
                epochs: self.epochs,
                lr0: self.lr,
                lr_decay: self.lr_decay,
                lr_step: self.lr_step,
                momentum: self.momentum,
                lambda_amc: self.lambda_amc,
                alpha_recon: self.alpha_recon,
                mmd: MmdConfig {
                    bandwidth: self.bandwidth,
                    beta: self.beta_mmd,
                    min_side: self.mmd_min_side,
                },
                seed: self.seed,
            },
            scaling: self.scaling,
            mms_a: self.mms_a,
            mms_b: self.mms_b,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: FeatureArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// general (ASD known) | roe (ADHD known)
    #[arg(long, default_value = "general")]
    pub experiment: Experiment,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: FeatureArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Known classes, comma separated; must match the checkpoint.
    #[arg(long, value_delimiter = ',')]
    pub known: Vec<Label>,
    /// Out-of-distribution label; defaults to the label the checkpoint
    /// does not know.
    #[arg(long)]
    pub ood: Option<Label>,
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: FeatureArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// general (ASD known, ADHD OOD) | roe (roles swapped)
    #[arg(long, default_value = "general")]
    pub experiment: Experiment,
    /// Worker threads over independent runs.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Write and print the split plan without training.
    #[arg(long)]
    pub dry_run: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 150)]
    pub td: usize,
    #[arg(long, default_value_t = 50)]
    pub asd: usize,
    #[arg(long, default_value_t = 50)]
    pub adhd: usize,
    #[arg(long, default_value_t = 16)]
    pub regions: usize,
    #[arg(long, default_value_t = 200)]
    pub timepoints: usize,
    /// Class template weight, clamped to [0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 3)]
    pub rank: usize,
    #[arg(long, default_value_t = 0.2)]
    pub jitter: f64,
    /// Maximum global-signal amplitude.
    #[arg(long, default_value_t = 0.0)]
    pub global_signal: f64,
    /// Weight of the ADHD-200 domain template.
    #[arg(long, default_value_t = 0.0)]
    pub domain_shift: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_activation(s: &str) -> std::result::Result<Activation, String> {
    match s {
        "relu" => Ok(Activation::ReLU),
        "tanh" => Ok(Activation::Tanh),
        _ => Err(format!("expected relu|tanh, got `{s}`")),
    }
}

fn parse_distance(s: &str) -> std::result::Result<DistanceKind, String> {
    match s {
        "combined" => Ok(DistanceKind::Combined),
        "euclidean" => Ok(DistanceKind::Euclidean),
        _ => Err(format!("expected combined|euclidean, got `{s}`")),
    }
}

fn parse_score(s: &str) -> std::result::Result<ScoreKind, String> {
    match s {
        "max-distance" => Ok(ScoreKind::MaxDistance),
        "max-softmax" => Ok(ScoreKind::MaxSoftmax),
        _ => Err(format!("expected max-distance|max-softmax, got `{s}`")),
    }
}

fn parse_bandwidth(s: &str) -> std::result::Result<Bandwidth, String> {
    if s == "median" {
        return Ok(Bandwidth::MedianHeuristic);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(Bandwidth::Fixed(v)),
        _ => Err(format!("expected `median` or a positive number, got `{s}`")),
    }
}

/// Reads a flat `key=value` file. Blank lines and `#` comments are ignored.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{}:{}: expected key=value", path.display(), n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Splices config-file entries in front of the user's own flags so the
/// latter override them.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(pos) = args
        .iter()
        .position(|a| a == "--config" || a.to_string_lossy().starts_with("--config="))
    else {
        return Ok(args);
    };
    let path = match args[pos].to_string_lossy().strip_prefix("--config=") {
        Some(p) => PathBuf::from(p),
        None => args
            .get(pos + 1)
            .map(PathBuf::from)
            .ok_or_else(|| Error::Config("--config needs a path".into()))?,
    };
    let Some(sub_pos) = args
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|p| p + 1)
    else {
        return Ok(args);
    };
    let sub_name = args[sub_pos].to_string_lossy().to_string();
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(&sub_name)
        .ok_or_else(|| Error::Config(format!("unknown subcommand `{sub_name}`")))?;
    let flags: BTreeSet<String> = sub
        .get_arguments()
        .filter(|a| !a.get_num_args().map(|n| n.takes_values()).unwrap_or(true))
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect();
    let known: BTreeSet<String> = sub.get_arguments().filter_map(|a| a.get_long().map(str::to_string)).collect();

    let given: BTreeSet<String> = args[sub_pos + 1..]
        .iter()
        .filter_map(|a| a.to_str()?.strip_prefix("--").map(|f| f.split('=').next().unwrap_or(f).to_string()))
        .collect();
    let mut injected = Vec::new();
    for (k, v) in read_config_file(&path)? {
        if !known.contains(&k) || k == "config" {
            return Err(Error::Config(format!("unknown config key `{k}` for `{sub_name}`")));
        }
        if given.contains(&k) {
            continue;
        }
        if flags.contains(&k) {
            match v.as_str() {
                "true" => injected.push(OsString::from(format!("--{k}"))),
                "false" => {}
                _ => return Err(Error::Config(format!("config key `{k}` expects true|false, got `{v}`"))),
            }
        } else {
            injected.push(OsString::from(format!("--{k}={v}")));
        }
    }
    let mut out = args[..=sub_pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[sub_pos + 1..]);
    Ok(out)
}

/// Effective options as `key=value` lines, in declaration order.
fn config_echo(matches: &ArgMatches) -> Vec<(String, String)> {
    let Some((name, sub)) = matches.subcommand() else {
        return Vec::new();
    };
    let cmd = Cli::command();
    let Some(def) = cmd.find_subcommand(name) else { return Vec::new() };
    let mut out = Vec::new();
    for arg in def.get_arguments() {
        let (Some(long), id) = (arg.get_long(), arg.get_id().as_str()) else {
            continue;
        };
        if long == "config" {
            continue;
        }
        let value = match sub.get_raw(id) {
            Some(vals) => vals.map(|v| v.to_string_lossy().to_string()).collect::<Vec<_>>().join(","),
            None => String::new(),
        };
        out.push((long.to_string(), value));
    }
    out
}

struct Artifacts {
    dir: PathBuf,
    command: &'static str,
    files: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path, command: &'static str) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command,
            files: Vec::new(),
        })
    }

    fn path(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.files.push(rel.to_string());
        Ok(p)
    }

    fn write(&mut self, rel: &str, body: &str) -> Result<()> {
        let p = self.path(rel)?;
        fs::write(&p, body).map_err(|e| Error::io(&p, e))
    }

    fn finish(self) -> Result<()> {
        let p = self.dir.join("artifacts.json");
        let body = serde_json::to_string_pretty(&json!({ "command": self.command, "files": self.files }))?;
        fs::write(&p, body).map_err(|e| Error::io(&p, e))
    }
}

fn echo_text(echo: &[(String, String)]) -> String {
    echo.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 1;
        }
    };
    let echo = config_echo(&matches);
    eprint!("{}", echo_text(&echo));
    match dispatch(cli.command, &echo) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn dispatch(command: Command, echo: &[(String, String)]) -> Result<()> {
    match command {
        Command::Extract(a) => cmd_extract(&a, echo),
        Command::Train(a) => cmd_train(&a, echo),
        Command::Eval(a) => cmd_eval(&a, echo),
        Command::Protocol(a) => cmd_protocol(&a, echo),
        Command::Synth(a) => cmd_synth(&a, echo),
    }
}

fn cmd_extract(a: &ExtractArgs, echo: &[(String, String)]) -> Result<()> {
    let records = ingest::load_manifest(&a.manifest)?;
    let mut art = Artifacts::new(&a.out, "extract")?;
    art.write("config.txt", &echo_text(echo))?;
    let mut cache = FeatureCache::default();
    let mut skipped = Vec::new();
    let mut degenerate = 0usize;
    let mut regions = None;
    for (i, rec) in records.iter().enumerate() {
        match ingest::load_time_series(&rec.path).and_then(|ts| {
            let r = ts.regions();
            ingest::pearson_fc(&ts).map(|fc| (r, ingest::vectorize_upper(&fc)))
        }) {
            Ok((r, v)) => {
                if *regions.get_or_insert(r) != r {
                    let e = Error::Shape(format!(
                        "subject `{}` has {r} regions, expected {}",
                        rec.subject_id,
                        regions.unwrap_or(0)
                    ));
                    if !a.skip_bad {
                        return Err(e);
                    }
                    eprintln!("skip {}: {e}", rec.subject_id);
                    skipped.push(rec.subject_id.clone());
                    continue;
                }
                eprintln!("[{}/{}] {}", i + 1, records.len(), rec.subject_id);
                cache.push(rec.subject_id.clone(), v);
            }
            Err(e) => {
                degenerate += usize::from(matches!(e, Error::DegenerateSignal { .. }));
                if !a.skip_bad {
                    eprintln!("subject {} failed", rec.subject_id);
                    return Err(e);
                }
                eprintln!("skip {}: {e}", rec.subject_id);
                skipped.push(rec.subject_id.clone());
            }
        }
    }
    let path = art.path("features.csv")?;
    cache.write(&path)?;
    let r = regions.unwrap_or(0);
    println!(
        "subjects={} regions={r} dim={} skipped={} degenerate={degenerate}",
        cache.subject_ids.len(),
        ingest::upper_len(r),
        skipped.len()
    );
    if !skipped.is_empty() {
        println!("skipped_ids={}", skipped.join(","));
    }
    art.finish()
}

fn load_store(data: &FeatureArgs) -> Result<(Vec<SubjectRecord>, FeatureStore)> {
    let records = ingest::load_manifest(&data.manifest)?;
    let cache = match &data.features {
        Some(p) => FeatureCache::read(p)?,
        None => {
            let mut c = FeatureCache::default();
            for r in &records {
                c.push(r.subject_id.clone(), ingest::extract_subject(r)?);
            }
            c
        }
    };
    let store = FeatureStore::from_cache(&records, &cache)?;
    Ok((records, store))
}

fn validate_experiment(cfg: &ExperimentConfig) -> Result<()> {
    cfg.train.validate()?;
    if !(cfg.mms_a < cfg.mms_b) {
        return Err(Error::Config(format!(
            "mms-a must be below mms-b, got {} and {}",
            cfg.mms_a, cfg.mms_b
        )));
    }
    Ok(())
}

fn cmd_train(a: &TrainArgs, echo: &[(String, String)]) -> Result<()> {
    let cfg = a.model.experiment_config();
    validate_experiment(&cfg)?;
    let (records, store) = load_store(&a.data)?;
    let (disorder, _) = a.experiment.roles();
    let classes = [Label::TD, disorder];
    let ids: Vec<String> = records
        .iter()
        .filter(|r| classes.contains(&r.label))
        .map(|r| r.subject_id.clone())
        .collect();
    let vectors = ids.iter().map(|id| store.vector(id)).collect::<Result<Vec<_>>>()?;
    let scaling = ingest::Scaling::fit(cfg.scaling, cfg.mms_a, cfg.mms_b, vectors)?;
    let labels = ids
        .iter()
        .map(|id| store.label(id).map(|l| usize::from(l != Label::TD)))
        .collect::<Result<Vec<_>>>()?;
    let domains = ids
        .iter()
        .map(|id| {
            records
                .iter()
                .find(|r| &r.subject_id == id)
                .map(|r| r.domain)
                .expect("id from records")
        })
        .collect();
    let train = TrainSet {
        features: store.matrix(&ids, &scaling)?,
        labels,
        domains,
        classes: classes.iter().map(|c| c.to_string()).collect(),
        align_class: Some(0),
    };
    let (state, history) = trainer::fit(&train, &cfg.model, &cfg.train, scaling)?;
    let mut art = Artifacts::new(&a.out, "train")?;
    art.write("config.txt", &echo_text(echo))?;
    checkpoint::save_checkpoint(&state, art.path("model.ckpt")?)?;
    trainer::write_history(art.path("history.csv")?, &history)?;
    if let Some(last) = history.last() {
        println!("epochs={} loss_total={} loss_cls={}", history.len(), last.loss_total, last.loss_cls);
    }
    art.finish()
}

fn cmd_eval(a: &EvalArgs, echo: &[(String, String)]) -> Result<()> {
    let state = checkpoint::load_checkpoint(&a.checkpoint)?;
    let classes = state
        .classes
        .iter()
        .map(|c| {
            c.parse::<Label>()
                .map_err(|e| Error::RoleMismatch(format!("checkpoint class: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if !a.known.is_empty() {
        let want: BTreeSet<Label> = a.known.iter().copied().collect();
        let have: BTreeSet<Label> = classes.iter().copied().collect();
        if want != have || want.len() != a.known.len() {
            return Err(Error::RoleMismatch(format!(
                "requested known classes {:?} but checkpoint knows {:?}",
                a.known, state.classes
            )));
        }
    }
    let ood = match a.ood {
        Some(l) if classes.contains(&l) => {
            return Err(Error::RoleMismatch(format!("OOD label {l} is a known class of the checkpoint")));
        }
        Some(l) => l,
        None => *Label::ALL
            .iter()
            .find(|l| !classes.contains(l))
            .ok_or_else(|| Error::RoleMismatch("checkpoint knows every label; pass --ood".into()))?,
    };
    let (records, store) = load_store(&a.data)?;
    let test: Vec<&SubjectRecord> = records.iter().filter(|r| classes.contains(&r.label) || r.label == ood).collect();
    let ids: Vec<String> = test.iter().map(|r| r.subject_id.clone()).collect();
    let scored = trainer::score(&state, &store.matrix(&ids, &state.scaling)?)?;
    let mut samples = Vec::with_capacity(ids.len());
    let mut rows = Vec::with_capacity(ids.len());
    for (i, r) in test.iter().enumerate() {
        let role = match classes.iter().position(|&c| c == r.label) {
            Some(k) => Role::Known(k),
            None => Role::Unknown,
        };
        let emb = scored.embedding.row(i);
        samples.push(ScoredSample {
            subject_id: r.subject_id.clone(),
            role,
            predicted: scored.predicted[i],
            score: scored.scores[i],
        });
        rows.push(ExportRow {
            subject_id: r.subject_id.clone(),
            true_role: r.label,
            predicted_class: classes[scored.predicted[i]],
            score: scored.scores[i],
            x: emb[0],
            y: emb.get(1).copied().unwrap_or(0.0),
        });
    }
    let negative = classes.iter().position(|&c| c == Label::TD).unwrap_or(0);
    let report = metrics::evaluate(&samples, classes.len(), negative)?;
    let mut art = Artifacts::new(&a.out, "eval")?;
    art.write("config.txt", &echo_text(echo))?;
    art.write("metrics.json", &serde_json::to_string_pretty(&report)?)?;
    protocol::export_scores(&rows, art.path("scores.csv")?)?;
    for (name, v) in metrics::MetricsReport::NAMES.iter().zip(report.values()) {
        println!("{name}={v}");
    }
    art.finish()
}

fn cmd_protocol(a: &ProtocolArgs, echo: &[(String, String)]) -> Result<()> {
    let cfg = a.model.experiment_config();
    validate_experiment(&cfg)?;
    if a.jobs == 0 {
        return Err(Error::Config("jobs must be at least 1".into()));
    }
    let records = ingest::load_manifest(&a.data.manifest)?;
    let plan = protocol::build_split_plan(&records, a.experiment, a.model.seed)?;
    let mut art = Artifacts::new(&a.out, "protocol")?;
    art.write("config.txt", &echo_text(echo))?;
    let plan_json = plan.to_json()?;
    art.write("plan.json", &plan_json)?;
    if a.dry_run {
        println!("{plan_json}");
        return art.finish();
    }
    let (_, store) = load_store(&a.data)?;
    let (agg, runs) = protocol::run_experiment(&store, &plan, &cfg, a.jobs)?;
    for run in &runs {
        let dir = format!("runs/run_{:02}", run.index);
        art.write(&format!("{dir}/metrics.json"), &serde_json::to_string_pretty(&run.metrics)?)?;
        protocol::export_scores(&run.rows, art.path(&format!("{dir}/scores.csv"))?)?;
        trainer::write_history(art.path(&format!("{dir}/history.csv"))?, &run.history)?;
    }
    art.write("aggregate.json", &serde_json::to_string_pretty(&agg)?)?;
    let table = agg.table();
    art.write("table.txt", &table)?;
    print!("{table}");
    art.finish()
}

fn cmd_synth(a: &SynthArgs, echo: &[(String, String)]) -> Result<()> {
    let mut spec = SyntheticSpec::standard(a.td, a.asd, a.adhd, a.regions, a.timepoints, a.separation, a.seed);
    spec.rank = a.rank;
    spec.subject_jitter = a.jitter;
    spec.global_signal = a.global_signal;
    spec.domain_shift = a.domain_shift;
    if a.td < 2 {
        return Err(Error::Config("td must be at least 2 so both domains have TD subjects".into()));
    }
    let cohort = protocol::make_synthetic(&spec)?;
    let mut art = Artifacts::new(&a.out, "synth")?;
    art.write("config.txt", &echo_text(echo))?;
    protocol::write_synthetic(&cohort, &a.out)?;
    art.files.push("manifest.csv".into());
    art.files
        .extend(cohort.records.iter().map(|r| r.path.to_string_lossy().to_string()));
    println!(
        "subjects={} regions={} timepoints={}",
        cohort.records.len(),
        a.regions,
        a.timepoints
    );
    art.finish()
}
