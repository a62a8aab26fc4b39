//! Cross-validation protocol: split plans, end-to-end runs, aggregation and
//! score export.

pub mod synthetic;

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{self, Domain, FeatureCache, FeatureVector, Label, RoiTimeSeries, Scaling, ScalingMode, SubjectRecord};
use crate::metrics::{self, MetricsReport, Role, ScoredSample};
use crate::seed;
use crate::trainer::{self, EpochRecord, ModelSpec, TrainConfig, TrainSet};

pub use synthetic::{make_synthetic, write_synthetic, CohortGroup, SyntheticCohort, SyntheticSpec};

pub const TD_PARTS: usize = 3;
pub const FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// ASD is the known disorder, ADHD is out-of-distribution.
    General,
    /// Roles swapped.
    Roe,
}

impl Experiment {
    /// `(id_disorder, ood)`.
    pub fn roles(self) -> (Label, Label) {
        match self {
            Experiment::General => (Label::ASD, Label::ADHD),
            Experiment::Roe => (Label::ADHD, Label::ASD),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::General => "general",
            Experiment::Roe => "roe",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "general" => Ok(Experiment::General),
            "roe" => Ok(Experiment::Roe),
            other => Err(format!("unknown experiment `{other}` (general|roe)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSplit {
    pub index: usize,
    pub part: usize,
    pub fold: usize,
    pub train_id: Vec<String>,
    pub test_id: Vec<String>,
    pub test_ood: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub experiment: Experiment,
    pub seed: u64,
    pub id_disorder: Label,
    pub ood: Label,
    pub td_parts: Vec<Vec<String>>,
    pub runs: Vec<RunSplit>,
}

impl SplitPlan {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks the structural invariants: disjoint train/test, no OOD subject
    /// in training, and each part's folds covering its ID set once.
    pub fn verify(&self) -> Result<()> {
        let ood: BTreeSet<&String> = self.runs.first().map(|r| r.test_ood.iter().collect()).unwrap_or_default();
        for run in &self.runs {
            let train: BTreeSet<&String> = run.train_id.iter().collect();
            if run.test_id.iter().any(|id| train.contains(id)) {
                return Err(Error::Plan(format!("run {}: train and test ID sets overlap", run.index)));
            }
            if run.test_ood.iter().any(|id| train.contains(id)) || run.train_id.iter().any(|id| ood.contains(id)) {
                return Err(Error::Plan(format!("run {}: OOD subject in training set", run.index)));
            }
        }
        for part in 0..self.td_parts.len() {
            let runs: Vec<&RunSplit> = self.runs.iter().filter(|r| r.part == part).collect();
            let mut seen = BTreeSet::new();
            for r in &runs {
                for id in &r.test_id {
                    if !seen.insert(id) {
                        return Err(Error::Plan(format!("part {part}: `{id}` tested twice")));
                    }
                }
            }
            if let Some(r) = runs.first() {
                let all: BTreeSet<&String> = r.train_id.iter().chain(&r.test_id).collect();
                if all != seen {
                    return Err(Error::Plan(format!("part {part}: folds do not cover the ID set")));
                }
            }
        }
        Ok(())
    }
}

fn shuffled(mut ids: Vec<String>, rng: &mut ChaCha8Rng) -> Vec<String> {
    ids.sort();
    ids.shuffle(rng);
    ids
}

/// Sizes differ by at most one, larger parts first.
fn split_even(ids: &[String], parts: usize) -> Vec<Vec<String>> {
    let (q, r) = (ids.len() / parts, ids.len() % parts);
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let len = q + usize::from(p < r);
        out.push(ids[start..start + len].to_vec());
        start += len;
    }
    out
}

pub fn build_split_plan(records: &[SubjectRecord], experiment: Experiment, seed: u64) -> Result<SplitPlan> {
    let (id_disorder, ood) = experiment.roles();
    let ids_of = |label: Label| -> Vec<String> { records.iter().filter(|r| r.label == label).map(|r| r.subject_id.clone()).collect() };
    for label in Label::ALL {
        if ids_of(label).is_empty() {
            return Err(Error::Plan(format!("manifest has no {label} subjects")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, seed::stream::SPLIT));
    let td = shuffled(ids_of(Label::TD), &mut rng);
    let disorder = shuffled(ids_of(id_disorder), &mut rng);
    let mut test_ood = ids_of(ood);
    test_ood.sort();

    let td_parts = split_even(&td, TD_PARTS);
    let mut runs = Vec::with_capacity(TD_PARTS * FOLDS);
    for (p, part) in td_parts.iter().enumerate() {
        for (name, stratum) in [("TD", part), (id_disorder.as_str(), &disorder)] {
            if stratum.len() < FOLDS {
                return Err(Error::Plan(format!(
                    "part {p}: {name} stratum has {} subjects, need at least {FOLDS}",
                    stratum.len()
                )));
            }
        }
        let mut folds: Vec<Vec<String>> = vec![Vec::new(); FOLDS];
        let mut dealt = 0usize;
        for stratum in [part, &shuffled(disorder.clone(), &mut rng)] {
            for id in stratum {
                folds[dealt % FOLDS].push(id.clone());
                dealt += 1;
            }
        }
        for f in 0..FOLDS {
            let train_id = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, ids)| ids.iter().cloned())
                .collect();
            runs.push(RunSplit {
                index: runs.len(),
                part: p,
                fold: f,
                train_id,
                test_id: folds[f].clone(),
                test_ood: test_ood.clone(),
            });
        }
    }
    let plan = SplitPlan {
        experiment,
        seed,
        id_disorder,
        ood,
        td_parts,
        runs,
    };
    plan.verify()?;
    Ok(plan)
}

#[derive(Debug, Clone)]
struct StoreEntry {
    label: Label,
    domain: Domain,
    vector: FeatureVector,
}

/// Unscaled FC vectors with labels and domains, keyed by subject id.
#[derive(Debug, Clone, Default)]
pub struct FeatureStore {
    entries: HashMap<String, StoreEntry>,
}

impl FeatureStore {
    pub fn from_cache(records: &[SubjectRecord], cache: &FeatureCache) -> Result<Self> {
        let mut store = Self::default();
        for r in records {
            let v = cache
                .get(&r.subject_id)
                .ok_or_else(|| Error::MissingFeatures(r.subject_id.clone()))?;
            store.insert(r, v.clone());
        }
        Ok(store)
    }

    /// Correlates in-memory series; `series[i]` belongs to `records[i]`.
    pub fn from_series(records: &[SubjectRecord], series: &[RoiTimeSeries]) -> Result<Self> {
        if records.len() != series.len() {
            return Err(Error::Shape(format!("{} records but {} series", records.len(), series.len())));
        }
        let mut store = Self::default();
        for (r, ts) in records.iter().zip(series) {
            store.insert(r, ingest::vectorize_upper(&ingest::pearson_fc(ts)?));
        }
        Ok(store)
    }

    pub fn insert(&mut self, record: &SubjectRecord, vector: FeatureVector) {
        self.entries.insert(
            record.subject_id.clone(),
            StoreEntry {
                label: record.label,
                domain: record.domain,
                vector,
            },
        );
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn entry(&self, id: &str) -> Result<&StoreEntry> {
        self.entries.get(id).ok_or_else(|| Error::MissingFeatures(id.to_string()))
    }

    pub fn label(&self, id: &str) -> Result<Label> {
        Ok(self.entry(id)?.label)
    }

    pub fn vector(&self, id: &str) -> Result<&FeatureVector> {
        Ok(&self.entry(id)?.vector)
    }

    /// Applies `scaling` and stacks the rows of `ids`.
    pub fn matrix(&self, ids: &[String], scaling: &Scaling) -> Result<Array2<f64>> {
        let d = match ids.first() {
            Some(id) => self.entry(id)?.vector.len(),
            None => 0,
        };
        let mut m = Array2::zeros((ids.len(), d));
        for (i, id) in ids.iter().enumerate() {
            let scaled = scaling.apply(&self.entry(id)?.vector)?;
            if scaled.vector.len() != d {
                return Err(Error::Shape(format!("`{id}` has {} features, expected {d}", scaled.vector.len())));
            }
            m.row_mut(i).assign(&scaled.vector.values);
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub scaling: ScalingMode,
    pub mms_a: f64,
    pub mms_b: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            scaling: ScalingMode::PerSubject,
            mms_a: -1.0,
            mms_b: 1.0,
        }
    }
}

/// One row of the score export.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportRow {
    pub subject_id: String,
    pub true_role: Label,
    pub predicted_class: Label,
    pub score: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub index: usize,
    pub part: usize,
    pub fold: usize,
    pub seed: u64,
    pub metrics: MetricsReport,
    pub rows: Vec<ExportRow>,
    pub history: Vec<EpochRecord>,
}

/// Seed of run `index` under the experiment root seed.
pub fn run_seed(root: u64, index: usize) -> u64 {
    seed::derive(seed::derive(root, seed::stream::RUN), index as u64)
}

/// Known classes are `[TD, id_disorder]`; TD is the alignment class.
pub fn run_single(store: &FeatureStore, plan: &SplitPlan, run: &RunSplit, cfg: &ExperimentConfig) -> Result<RunOutput> {
    let classes = [Label::TD, plan.id_disorder];
    let class_of = |id: &String| -> Result<usize> {
        let l = store.label(id)?;
        classes
            .iter()
            .position(|&c| c == l)
            .ok_or_else(|| Error::Plan(format!("run {}: `{id}` ({l}) is not a known class", run.index)))
    };
    for id in &run.train_id {
        if store.label(id)? == plan.ood {
            return Err(Error::Plan(format!("run {}: OOD subject `{id}` in training set", run.index)));
        }
    }
    let train_vectors = run.train_id.iter().map(|id| store.vector(id)).collect::<Result<Vec<_>>>()?;
    let scaling = Scaling::fit(cfg.scaling, cfg.mms_a, cfg.mms_b, train_vectors)?;
    let train = TrainSet {
        features: store.matrix(&run.train_id, &scaling)?,
        labels: run.train_id.iter().map(class_of).collect::<Result<_>>()?,
        domains: run
            .train_id
            .iter()
            .map(|id| store.entry(id).map(|e| e.domain))
            .collect::<Result<_>>()?,
        classes: classes.iter().map(|c| c.to_string()).collect(),
        align_class: Some(0),
    };
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = run_seed(cfg.train.seed, run.index);
    let (state, history) = trainer::fit(&train, &cfg.model, &train_cfg, scaling)?;

    let test: Vec<String> = run.test_id.iter().chain(&run.test_ood).cloned().collect();
    let scored = trainer::score(&state, &store.matrix(&test, &scaling)?)?;
    let mut samples = Vec::with_capacity(test.len());
    let mut rows = Vec::with_capacity(test.len());
    for (i, id) in test.iter().enumerate() {
        let role = if i < run.test_id.len() {
            Role::Known(class_of(id)?)
        } else {
            Role::Unknown
        };
        let emb = scored.embedding.row(i);
        samples.push(ScoredSample {
            subject_id: id.clone(),
            role,
            predicted: scored.predicted[i],
            score: scored.scores[i],
        });
        rows.push(ExportRow {
            subject_id: id.clone(),
            true_role: store.label(id)?,
            predicted_class: classes[scored.predicted[i]],
            score: scored.scores[i],
            x: emb[0],
            y: emb.get(1).copied().unwrap_or(0.0),
        });
    }
    Ok(RunOutput {
        index: run.index,
        part: run.part,
        fold: run.fold,
        seed: train_cfg.seed,
        metrics: metrics::evaluate(&samples, classes.len(), 0)?,
        rows,
        history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub experiment: Experiment,
    pub n_runs: usize,
    /// False with a single run, where std is reported as 0.
    pub std_defined: bool,
    pub acc: Stat,
    pub auroc: Stat,
    pub oscr: Stat,
    pub spe: Stat,
    pub sen: Stat,
    pub auin: Stat,
    pub auout: Stat,
    /// Ordered by run index.
    pub runs: Vec<MetricsReport>,
}

impl AggregateReport {
    pub fn stats(&self) -> [(&'static str, Stat); 7] {
        let s = [self.acc, self.auroc, self.oscr, self.spe, self.sen, self.auin, self.auout];
        let mut out = [("", Stat { mean: 0.0, std: 0.0 }); 7];
        for (i, name) in MetricsReport::NAMES.iter().enumerate() {
            out[i] = (name, s[i]);
        }
        out
    }

    /// Percent mean±std, one metric per row.
    pub fn table(&self) -> String {
        let mut out = format!("{:<6} {}\n", "metric", self.experiment.as_str());
        for (name, s) in self.stats() {
            let _ = writeln!(out, "{:<6} {:.2}±{:.2}", name.to_ascii_uppercase(), 100.0 * s.mean, 100.0 * s.std);
        }
        out
    }
}

/// Mean and sample std (n−1) per metric, summed in run-index order.
pub fn aggregate(experiment: Experiment, runs: &[(usize, MetricsReport)]) -> Result<AggregateReport> {
    if runs.is_empty() {
        return Err(Error::Plan("no runs to aggregate".into()));
    }
    let mut sorted: Vec<&(usize, MetricsReport)> = runs.iter().collect();
    sorted.sort_by_key(|(i, _)| *i);
    let n = sorted.len();
    let stat = |k: usize| -> Stat {
        let xs: Vec<f64> = sorted.iter().map(|(_, r)| r.values()[k]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    };
    Ok(AggregateReport {
        experiment,
        n_runs: n,
        std_defined: n > 1,
        acc: stat(0),
        auroc: stat(1),
        oscr: stat(2),
        spe: stat(3),
        sen: stat(4),
        auin: stat(5),
        auout: stat(6),
        runs: sorted.into_iter().map(|(_, r)| r.clone()).collect(),
    })
}

/// Runs every split of `plan`, on `jobs` worker threads when `jobs > 1`.
pub fn run_experiment(
    store: &FeatureStore,
    plan: &SplitPlan,
    cfg: &ExperimentConfig,
    jobs: usize,
) -> Result<(AggregateReport, Vec<RunOutput>)> {
    cfg.train.validate()?;
    plan.verify()?;
    let one = |run: &RunSplit| {
        run_single(store, plan, run, cfg).map_err(|e| Error::Run {
            run: run.index,
            source: Box::new(e),
        })
    };
    let outputs: Vec<RunOutput> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
        pool.install(|| plan.runs.par_iter().map(one).collect::<Result<Vec<_>>>())?
    } else {
        plan.runs.iter().map(one).collect::<Result<Vec<_>>>()?
    };
    let reports: Vec<(usize, MetricsReport)> = outputs.iter().map(|o| (o.index, o.metrics.clone())).collect();
    Ok((aggregate(plan.experiment, &reports)?, outputs))
}

pub const SCORES_PROJECTION: &str = "# embedding_2d=first_two_coordinates";
pub const SCORES_HEADER: &str = "subject_id,true_role,predicted_class,score,embedding_2d_x,embedding_2d_y";

pub fn export_scores(rows: &[ExportRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut body = format!("{SCORES_PROJECTION}\n{SCORES_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            body,
            "{},{},{},{},{},{}",
            r.subject_id, r.true_role, r.predicted_class, r.score, r.x, r.y
        );
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<ExportRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::BadTimeSeries {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    if lines.next() != Some(SCORES_HEADER) {
        return Err(bad("missing score header".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad(format!("row {}: expected 6 fields", i + 1)));
        }
        let label = |s: &str| s.parse::<Label>().map_err(|e| bad(format!("row {}: {e}", i + 1)));
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("row {}: {e}", i + 1)));
        rows.push(ExportRow {
            subject_id: f[0].to_string(),
            true_role: label(f[1])?,
            predicted_class: label(f[2])?,
            score: num(f[3])?,
            x: num(f[4])?,
            y: num(f[5])?,
        });
    }
    Ok(rows)
}
