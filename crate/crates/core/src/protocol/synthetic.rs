//! Synthetic cohorts with class-specific correlation structure.
//!
//! Each class owns a template correlation matrix; the class matrix is the
//! shared base interpolated toward the template by `separation` (clamped to
//! [0, 1]). Subjects mix in their own random structure (`subject_jitter`),
//! subjects from the ADHD-200 domain mix in a domain template
//! (`domain_shift`), and every subject carries a shared global signal of
//! random amplitude in `[0, global_signal]`, which moves all correlations by
//! a positive affine map. Series are Gaussian with exactly that target
//! correlation.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{self, Domain, Label, RoiTimeSeries, SubjectRecord};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortGroup {
    pub label: Label,
    pub domain: Domain,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub groups: Vec<CohortGroup>,
    pub sites: Vec<String>,
    pub regions: usize,
    pub timepoints: usize,
    pub separation: f64,
    /// Latent factors per template.
    pub rank: usize,
    pub subject_jitter: f64,
    pub global_signal: f64,
    pub domain_shift: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// TD split evenly across both domains, the first disorder from ABIDE I
    /// and the second from ADHD-200.
    pub fn standard(td: usize, asd: usize, adhd: usize, regions: usize, timepoints: usize, separation: f64, seed: u64) -> Self {
        Self {
            groups: vec![
                CohortGroup {
                    label: Label::TD,
                    domain: Domain::Abide1,
                    count: td - td / 2,
                },
                CohortGroup {
                    label: Label::TD,
                    domain: Domain::Adhd200,
                    count: td / 2,
                },
                CohortGroup {
                    label: Label::ASD,
                    domain: Domain::Abide1,
                    count: asd,
                },
                CohortGroup {
                    label: Label::ADHD,
                    domain: Domain::Adhd200,
                    count: adhd,
                },
            ],
            sites: ["KKI", "NYU", "OHSU", "PITT"].iter().map(|s| s.to_string()).collect(),
            regions,
            timepoints,
            separation,
            rank: 3,
            subject_jitter: 0.2,
            global_signal: 0.0,
            domain_shift: 0.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.separation >= 0.0) {
            return Err(Error::Config(format!("separation must be non-negative, got {}", self.separation)));
        }
        if !unit(self.subject_jitter) || !unit(self.domain_shift) || !(self.global_signal >= 0.0) {
            return Err(Error::Config(
                "jitter and domain shift must be in [0, 1], global signal non-negative".into(),
            ));
        }
        if self.groups.iter().any(|g| g.count == 0) {
            return Err(Error::Config("every cohort group needs at least one subject".into()));
        }
        if self.regions < 2 || self.timepoints < 3 || self.rank == 0 || self.sites.is_empty() {
            return Err(Error::Config("need regions >= 2, timepoints >= 3, rank >= 1 and one site".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    /// Paths are relative (`ts/<id>.csv`) until written.
    pub records: Vec<SubjectRecord>,
    pub series: Vec<RoiTimeSeries>,
    /// Per-subject target correlation the series were drawn from.
    pub targets: Vec<Array2<f64>>,
}

/// Correlation matrix of a random `rank`-factor model with unit noise.
fn random_correlation(rng: &mut impl Rng, r: usize, rank: usize) -> DMatrix<f64> {
    let loadings = DMatrix::<f64>::from_fn(r, rank, |_, _| StandardNormal.sample(rng));
    let cov = &loadings * loadings.transpose() + DMatrix::<f64>::identity(r, r) * 0.5;
    normalize(&cov)
}

fn normalize(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let d: Vec<f64> = (0..cov.nrows()).map(|i| cov[(i, i)].sqrt()).collect();
    DMatrix::from_fn(
        cov.nrows(),
        cov.ncols(),
        |i, j| if i == j { 1.0 } else { cov[(i, j)] / (d[i] * d[j]) },
    )
}

/// Draws `t` rows of N(0, corr) via the Cholesky factor.
pub fn gaussian_series(rng: &mut impl Rng, corr: &DMatrix<f64>, t: usize) -> Result<Array2<f64>> {
    let chol = corr.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    let r = corr.nrows();
    let z = DMatrix::<f64>::from_fn(r, t, |_, _| StandardNormal.sample(rng));
    let x = l * z;
    Ok(Array2::from_shape_fn((t, r), |(ti, ri)| x[(ri, ti)]))
}

fn to_ndarray(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub fn make_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCohort> {
    spec.validate()?;
    let root = seed::derive(spec.seed, seed::stream::SYNTHETIC);
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    let r = spec.regions;
    let w = spec.separation.min(1.0);

    let base = random_correlation(&mut rng, r, spec.rank);
    let domain_template = random_correlation(&mut rng, r, spec.rank);
    let templates: Vec<(Label, DMatrix<f64>)> = Label::ALL
        .iter()
        .map(|&l| (l, random_correlation(&mut rng, r, spec.rank)))
        .collect();
    let class_matrix = |label: Label| -> DMatrix<f64> {
        let t = &templates.iter().find(|(l, _)| *l == label).expect("all labels").1;
        &base * (1.0 - w) + t * w
    };

    let mut records = Vec::new();
    let mut series = Vec::new();
    let mut targets = Vec::new();
    let mut n = 0usize;
    for group in &spec.groups {
        let class = class_matrix(group.label);
        for _ in 0..group.count {
            let id = format!("sub{n:04}");
            let mut subj_rng = ChaCha8Rng::seed_from_u64(seed::derive(root, n as u64 + 1));
            let own = random_correlation(&mut subj_rng, r, spec.rank);
            let mut s = &class * (1.0 - spec.subject_jitter) + own * spec.subject_jitter;
            if group.domain == Domain::Adhd200 {
                s = &s * (1.0 - spec.domain_shift) + &domain_template * spec.domain_shift;
            }
            let g: f64 = if spec.global_signal > 0.0 {
                subj_rng.random_range(0.0..spec.global_signal)
            } else {
                0.0
            };
            let target = normalize(&(s + DMatrix::<f64>::from_element(r, r, g * g)));
            let values = gaussian_series(&mut subj_rng, &target, spec.timepoints)?;
            records.push(SubjectRecord {
                subject_id: id.clone(),
                label: group.label,
                site: spec.sites[n % spec.sites.len()].clone(),
                domain: group.domain,
                path: PathBuf::from("ts").join(format!("{id}.csv")),
            });
            series.push(RoiTimeSeries::new(values)?);
            targets.push(to_ndarray(&target));
            n += 1;
        }
    }
    Ok(SyntheticCohort { records, series, targets })
}

/// Writes `manifest.csv` and `ts/<id>.csv` under `dir`; returns the manifest
/// path.
pub fn write_synthetic(cohort: &SyntheticCohort, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let ts_dir = dir.join("ts");
    std::fs::create_dir_all(&ts_dir).map_err(|e| Error::io(&ts_dir, e))?;
    for (rec, ts) in cohort.records.iter().zip(&cohort.series) {
        ingest::write_time_series(dir.join(&rec.path), ts)?;
    }
    let manifest = dir.join("manifest.csv");
    ingest::write_manifest(&manifest, &cohort.records)?;
    Ok(manifest)
}
