//! Subject manifests, ROI time series, Pearson functional connectivity and
//! the joint min-max + standardization scaling (MMS) of FC feature vectors.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagnostic label of a subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    TD,
    ASD,
    ADHD,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::TD, Label::ASD, Label::ADHD];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::TD => "TD",
            Label::ASD => "ASD",
            Label::ADHD => "ADHD",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "TD" => Ok(Label::TD),
            "ASD" => Ok(Label::ASD),
            "ADHD" => Ok(Label::ADHD),
            other => Err(other.to_string()),
        }
    }
}

/// Source dataset a subject was collected in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "ABIDE1")]
    Abide1,
    #[serde(rename = "ADHD200")]
    Adhd200,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Abide1 => "ABIDE1",
            Domain::Adhd200 => "ADHD200",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ABIDE1" => Ok(Domain::Abide1),
            "ADHD200" => Ok(Domain::Adhd200),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub label: Label,
    pub site: String,
    pub domain: Domain,
    /// Time-series file; relative manifest paths are resolved against the
    /// manifest's directory on load.
    pub path: PathBuf,
}

const MANIFEST_COLUMNS: [&str; 5] = ["subject_id", "label", "site", "domain", "path"];

/// Reads a `subject_id,label,site,domain,path` manifest. Row numbers in
/// errors count data rows from 1.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<SubjectRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let mut index = [0usize; 5];
    for (slot, name) in index.iter_mut().zip(MANIFEST_COLUMNS) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })?;
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::csv(path, e))?;
        let field = |k: usize, name: &'static str| -> Result<&str> {
            let v = row.get(index[k]).unwrap_or("");
            if v.is_empty() {
                Err(Error::EmptyField { row: row_no, field: name })
            } else {
                Ok(v)
            }
        };
        let subject_id = field(0, "subject_id")?.to_string();
        let label = field(1, "label")?.parse::<Label>().map_err(|token| Error::UnknownToken {
            row: row_no,
            field: "label",
            token,
        })?;
        let site = field(2, "site")?.to_string();
        let domain = field(3, "domain")?.parse::<Domain>().map_err(|token| Error::UnknownToken {
            row: row_no,
            field: "domain",
            token,
        })?;
        let raw_path = PathBuf::from(field(4, "path")?);
        let ts_path = if raw_path.is_relative() { base.join(raw_path) } else { raw_path };
        if !seen.insert(subject_id.clone()) {
            return Err(Error::DuplicateSubject {
                row: row_no,
                id: subject_id,
            });
        }
        records.push(SubjectRecord {
            subject_id,
            label,
            site,
            domain,
            path: ts_path,
        });
    }
    Ok(records)
}

/// Writes a manifest. Paths are written as given.
pub fn write_manifest(path: impl AsRef<Path>, records: &[SubjectRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(MANIFEST_COLUMNS).map_err(|e| Error::csv(path, e))?;
    for r in records {
        w.write_record([
            r.subject_id.as_str(),
            r.label.as_str(),
            r.site.as_str(),
            r.domain.as_str(),
            &r.path.to_string_lossy(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// T×R matrix of ROI signals (rows are timepoints).
#[derive(Debug, Clone, PartialEq)]
pub struct RoiTimeSeries {
    values: Array2<f64>,
}

impl RoiTimeSeries {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (t, r) = values.dim();
        if t < 3 {
            return Err(Error::Shape(format!("time series needs at least 3 timepoints, got {t}")));
        }
        if r < 2 {
            return Err(Error::Shape(format!("time series needs at least 2 regions, got {r}")));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "time series entry {} (row {}, column {})",
                pos,
                pos / r,
                pos % r
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn timepoints(&self) -> usize {
        self.values.nrows()
    }

    pub fn regions(&self) -> usize {
        self.values.ncols()
    }
}

/// Loads a time-series CSV. A first row that does not parse as numbers is
/// treated as a header.
pub fn load_time_series(path: impl AsRef<Path>) -> Result<RoiTimeSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(file);
    let bad = |reason: String| Error::BadTimeSeries {
        path: path.to_path_buf(),
        reason,
    };

    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0usize;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(vals) => {
                if *width.get_or_insert(vals.len()) != vals.len() {
                    return Err(bad(format!(
                        "line {} has {} columns, expected {}",
                        i + 1,
                        vals.len(),
                        width.unwrap()
                    )));
                }
                data.extend(vals);
                rows += 1;
            }
            Err(_) if i == 0 => continue,
            Err(e) => return Err(bad(format!("line {}: {e}", i + 1))),
        }
    }
    let width = width.ok_or_else(|| bad("no numeric rows".into()))?;
    let values = Array2::from_shape_vec((rows, width), data).map_err(|e| bad(e.to_string()))?;
    RoiTimeSeries::new(values).map_err(|e| bad(e.to_string()))
}

pub fn write_time_series(path: impl AsRef<Path>, ts: &RoiTimeSeries) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header: Vec<String> = (0..ts.regions()).map(|r| format!("roi{r}")).collect();
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for row in ts.values.rows() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Symmetric R×R Pearson correlation matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct FcMatrix {
    values: Array2<f64>,
}

impl FcMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn regions(&self) -> usize {
        self.values.nrows()
    }
}

pub fn pearson_fc(ts: &RoiTimeSeries) -> Result<FcMatrix> {
    let x = ts.values();
    let r = x.ncols();
    let mean = x.mean_axis(Axis(0)).expect("T >= 3");
    let centered = x - &mean;
    let cross = centered.t().dot(&centered);
    let norms: Vec<f64> = (0..r).map(|i| cross[[i, i]].sqrt()).collect();
    if let Some(column) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::DegenerateSignal { column });
    }

    let mut values = Array2::<f64>::eye(r);
    for i in 0..r {
        for j in (i + 1)..r {
            let c = (cross[[i, j]] / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            values[[i, j]] = c;
            values[[j, i]] = c;
        }
    }
    Ok(FcMatrix { values })
}

/// Flattened FC features, optionally MMS-scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Array1<f64>,
    pub scaled: bool,
}

impl FeatureVector {
    pub fn unscaled(values: Array1<f64>) -> Self {
        Self { values, scaled: false }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Number of strict upper-triangle entries of an R×R matrix.
pub fn upper_len(regions: usize) -> usize {
    regions * regions.saturating_sub(1) / 2
}

/// Row-major strict upper triangle.
pub fn vectorize_upper(fc: &FcMatrix) -> FeatureVector {
    let r = fc.regions();
    let mut out = Vec::with_capacity(upper_len(r));
    for i in 0..r {
        for j in (i + 1)..r {
            out.push(fc.values[[i, j]]);
        }
    }
    FeatureVector::unscaled(Array1::from(out))
}

/// Inverse of [`vectorize_upper`]: rebuilds the symmetric matrix with the
/// given diagonal value.
pub fn symmetric_from_upper(values: &[f64], diagonal: f64) -> Result<Array2<f64>> {
    let d = values.len();
    // r(r-1)/2 = d
    let r = ((1.0 + (1.0 + 8.0 * d as f64).sqrt()) / 2.0).round() as usize;
    if upper_len(r) != d {
        return Err(Error::Shape(format!("{d} is not a triangular number")));
    }
    let mut m = Array2::from_elem((r, r), diagonal);
    let mut it = values.iter();
    for i in 0..r {
        for j in (i + 1)..r {
            let v = *it.next().expect("length checked");
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MmsScope {
    PerSubject,
    Global,
}

/// Dataset-level statistics for [`MmsScope::Global`], fitted on the training
/// split only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalStats {
    pub min: f64,
    pub max: f64,
    /// Mean after min-max mapping.
    pub mean: f64,
    /// Population std after min-max mapping.
    pub std: f64,
}

impl GlobalStats {
    pub fn fit<'a>(vectors: impl IntoIterator<Item = &'a FeatureVector>, a: f64, b: f64) -> Result<Self> {
        let vectors: Vec<&FeatureVector> = vectors.into_iter().collect();
        if vectors.is_empty() {
            return Err(Error::Shape("no vectors to fit global MMS statistics".into()));
        }
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in &vectors {
            for &x in &v.values {
                min = min.min(x);
                max = max.max(x);
            }
        }
        let mapped: Vec<f64> = vectors
            .iter()
            .flat_map(|v| v.values.iter().map(|&x| min_max(x, min, max, a, b)))
            .collect();
        let (mean, std) = mean_pop_std(&mapped);
        Ok(Self { min, max, mean, std })
    }
}

/// Output of [`mms_scale`]. `degenerate` is set when the input had zero
/// spread and was mapped to all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaled {
    pub vector: FeatureVector,
    pub degenerate: bool,
}

fn min_max(x: f64, min: f64, max: f64, a: f64, b: f64) -> f64 {
    a + (x - min) * (b - a) / (max - min)
}

/// First MMS step on its own: maps the vector's range onto `[a, b]`.
/// `None` for a constant vector.
pub fn min_max_map(values: &Array1<f64>, a: f64, b: f64) -> Option<Array1<f64>> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (max > min).then(|| values.mapv(|x| min_max(x, min, max, a, b)))
}

pub(crate) fn mean_pop_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Min-max maps `v` into `[a, b]`, then standardizes to zero mean and unit
/// population std.
pub fn mms_scale(v: &FeatureVector, a: f64, b: f64, scope: MmsScope, stats: Option<&GlobalStats>) -> Result<Scaled> {
    if !(a < b) {
        return Err(Error::Config(format!("MMS interval needs a < b, got [{a}, {b}]")));
    }
    if v.scaled {
        return Err(Error::AlreadyScaled);
    }
    let zeros = || Scaled {
        vector: FeatureVector {
            values: Array1::zeros(v.len()),
            scaled: true,
        },
        degenerate: true,
    };

    let (mapped, mean, std) = match scope {
        MmsScope::PerSubject => {
            let Some(mapped) = min_max_map(&v.values, a, b) else {
                log::warn!("constant feature vector; MMS output set to zeros");
                return Ok(zeros());
            };
            let (mean, std) = mean_pop_std(mapped.as_slice().expect("contiguous"));
            (mapped, mean, std)
        }
        MmsScope::Global => {
            let s = stats.ok_or(Error::MissingStats)?;
            if !(s.max > s.min) || s.std == 0.0 {
                log::warn!("constant training features; MMS output set to zeros");
                return Ok(zeros());
            }
            (v.values.mapv(|x| min_max(x, s.min, s.max, a, b)), s.mean, s.std)
        }
    };
    if std == 0.0 {
        return Ok(zeros());
    }
    Ok(Scaled {
        vector: FeatureVector {
            values: mapped.mapv(|x| (x - mean) / std),
            scaled: true,
        },
        degenerate: false,
    })
}

/// How features are scaled before entering the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingMode {
    /// Raw FC values.
    None,
    PerSubject,
    Global,
}

impl FromStr for ScalingMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(ScalingMode::None),
            "per-subject" => Ok(ScalingMode::PerSubject),
            "global" => Ok(ScalingMode::Global),
            other => Err(format!("unknown scaling mode `{other}` (none|per-subject|global)")),
        }
    }
}

/// A fitted scaling policy, stored with the model so evaluation applies the
/// same transform as training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub mode: ScalingMode,
    pub a: f64,
    pub b: f64,
    pub stats: Option<GlobalStats>,
}

impl Scaling {
    /// Fits global statistics on `train` when the mode needs them.
    pub fn fit<'a>(mode: ScalingMode, a: f64, b: f64, train: impl IntoIterator<Item = &'a FeatureVector>) -> Result<Self> {
        let train: Vec<&FeatureVector> = train.into_iter().collect();
        if mode != ScalingMode::PerSubject && train.iter().any(|v| v.scaled) {
            return Err(Error::AlreadyScaled);
        }
        let stats = match mode {
            ScalingMode::Global => Some(GlobalStats::fit(train, a, b)?),
            _ => None,
        };
        Ok(Self { mode, a, b, stats })
    }

    /// Vectors already scaled per subject pass through under `PerSubject`.
    pub fn apply(&self, v: &FeatureVector) -> Result<Scaled> {
        match (self.mode, v.scaled) {
            (ScalingMode::PerSubject, true) => Ok(Scaled {
                vector: v.clone(),
                degenerate: false,
            }),
            (_, true) => Err(Error::AlreadyScaled),
            (ScalingMode::None, false) => Ok(Scaled {
                vector: v.clone(),
                degenerate: false,
            }),
            (ScalingMode::PerSubject, false) => mms_scale(v, self.a, self.b, MmsScope::PerSubject, None),
            (ScalingMode::Global, false) => mms_scale(v, self.a, self.b, MmsScope::Global, self.stats.as_ref()),
        }
    }
}

/// One file per dataset: `subject_id,scaled,f0,...,f{d-1}`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureCache {
    pub subject_ids: Vec<String>,
    pub vectors: Vec<FeatureVector>,
}

impl FeatureCache {
    pub fn push(&mut self, id: String, v: FeatureVector) {
        self.subject_ids.push(id);
        self.vectors.push(v);
    }

    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(FeatureVector::len)
    }

    pub fn get(&self, id: &str) -> Option<&FeatureVector> {
        self.subject_ids.iter().position(|s| s == id).map(|i| &self.vectors[i])
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let d = self.dim().unwrap_or(0);
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut header = vec!["subject_id".to_string(), "scaled".to_string()];
        header.extend((0..d).map(|i| format!("f{i}")));
        w.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for (id, v) in self.subject_ids.iter().zip(&self.vectors) {
            let mut row = vec![id.clone(), if v.scaled { "1" } else { "0" }.to_string()];
            // Display for f64 is shortest round-trip, so reload is bit-exact.
            row.extend(v.values.iter().map(|x| x.to_string()));
            w.write_record(&row).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let bad = |reason: String| Error::BadTimeSeries {
            path: path.to_path_buf(),
            reason,
        };
        let mut cache = FeatureCache::default();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let id = rec.get(0).ok_or_else(|| bad(format!("row {} empty", i + 1)))?.to_string();
            let scaled = match rec.get(1) {
                Some("1") => true,
                Some("0") => false,
                other => return Err(bad(format!("row {}: bad scaled flag {:?}", i + 1, other))),
            };
            let values = rec
                .iter()
                .skip(2)
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
            cache.push(
                id,
                FeatureVector {
                    values: Array1::from(values),
                    scaled,
                },
            );
        }
        Ok(cache)
    }
}

/// Load, correlate and vectorize one subject's series.
pub fn extract_subject(record: &SubjectRecord) -> Result<FeatureVector> {
    let ts = load_time_series(&record.path)?;
    Ok(vectorize_upper(&pearson_fc(&ts)?))
}
