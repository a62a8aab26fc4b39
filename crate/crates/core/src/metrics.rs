//! Open-set evaluation metrics over scored test subjects.
//!
//! Scores follow the convention "higher = more known-like". Every curve
//! metric depends on scores only through their ranks.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Known(usize),
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub subject_id: String,
    pub role: Role,
    pub predicted: usize,
    pub score: f64,
}

impl ScoredSample {
    pub fn is_known(&self) -> bool {
        matches!(self.role, Role::Known(_))
    }

    pub fn is_correct(&self) -> bool {
        self.role == Role::Known(self.predicted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub n_id: usize,
    pub n_ood: usize,
    pub per_class: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub auroc: f64,
    pub oscr: f64,
    pub spe: f64,
    pub sen: f64,
    pub auin: f64,
    pub auout: f64,
    pub counts: Counts,
}

impl MetricsReport {
    pub const NAMES: [&'static str; 7] = ["acc", "auroc", "oscr", "spe", "sen", "auin", "auout"];

    pub fn values(&self) -> [f64; 7] {
        [self.acc, self.auroc, self.oscr, self.spe, self.sen, self.auin, self.auout]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedSetStats {
    pub acc: f64,
    pub spe: f64,
    pub sen: f64,
}

/// Accuracy over known-class samples, with `negative` (typically TD) as the
/// negative class: SEN is recall of the other classes (predicted as any
/// non-negative class), SPE is recall of the negative class.
pub fn closed_set_stats(samples: &[ScoredSample], classes: usize, negative: usize) -> Result<ClosedSetStats> {
    let mut per_class = vec![0usize; classes];
    let (mut correct, mut total) = (0usize, 0usize);
    let (mut tp, mut fn_, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for s in samples {
        let Role::Known(k) = s.role else { continue };
        if k >= classes {
            return Err(Error::Shape(format!("class index {k} outside [0, {classes})")));
        }
        per_class[k] += 1;
        total += 1;
        correct += usize::from(s.predicted == k);
        match (k == negative, s.predicted == negative) {
            (true, true) => tn += 1,
            (true, false) => fp += 1,
            (false, false) => tp += 1,
            (false, true) => fn_ += 1,
        }
    }
    if let Some(missing) = per_class.iter().position(|&c| c == 0) {
        return Err(Error::MissingClass(format!("known class {missing} has no samples")));
    }
    Ok(ClosedSetStats {
        acc: correct as f64 / total as f64,
        spe: tn as f64 / (tn + fp) as f64,
        sen: tp as f64 / (tp + fn_) as f64,
    })
}

fn split_scores(samples: &[ScoredSample]) -> Result<(Vec<f64>, Vec<f64>)> {
    let id: Vec<f64> = samples.iter().filter(|s| s.is_known()).map(|s| s.score).collect();
    let ood: Vec<f64> = samples.iter().filter(|s| !s.is_known()).map(|s| s.score).collect();
    if id.is_empty() {
        return Err(Error::EmptySide("ID"));
    }
    if ood.is_empty() {
        return Err(Error::EmptySide("OOD"));
    }
    Ok((id, ood))
}

/// Groups of equal scores in descending order. Each group carries
/// `(positives, negatives)` counts for the given predicate pair.
fn descending_groups(
    samples: &[ScoredSample],
    pos: impl Fn(&ScoredSample) -> bool,
    neg: impl Fn(&ScoredSample) -> bool,
) -> Vec<(usize, usize)> {
    let mut order: Vec<&ScoredSample> = samples.iter().collect();
    order.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal));
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut last = None;
    for s in order {
        if last != Some(s.score) {
            groups.push((0, 0));
            last = Some(s.score);
        }
        let g = groups.last_mut().expect("pushed");
        g.0 += usize::from(pos(s));
        g.1 += usize::from(neg(s));
    }
    groups
}

/// Trapezoid area under the curve traced by lowering a threshold through
/// the descending score groups, with x = negative rate, y = positive rate.
fn swept_area(groups: &[(usize, usize)], n_pos: usize, n_neg: usize) -> f64 {
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    for &(p, n) in groups {
        let (tp0, fp0) = (tp, fp);
        tp += p;
        fp += n;
        area += (fp - fp0) as f64 * (tp + tp0) as f64;
    }
    area / (2.0 * n_pos as f64 * n_neg as f64)
}

/// P(random ID score > random OOD score), ties count ½.
pub fn auroc(samples: &[ScoredSample]) -> Result<f64> {
    let (id, ood) = split_scores(samples)?;
    let groups = descending_groups(samples, ScoredSample::is_known, |s| !s.is_known());
    Ok(swept_area(&groups, id.len(), ood.len()))
}

/// Area under correct-classification rate vs false-positive rate as the
/// acceptance threshold sweeps from +∞ to −∞. A known sample counts toward
/// CCR only when its closed-set prediction is correct. Trapezoids between
/// consecutive operating points, so tied scores contribute ½.
pub fn oscr(samples: &[ScoredSample]) -> Result<f64> {
    let (id, ood) = split_scores(samples)?;
    let groups = descending_groups(samples, ScoredSample::is_correct, |s| !s.is_known());
    Ok(swept_area(&groups, id.len(), ood.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Positive {
    Id,
    Ood,
}

/// Area under the interpolated precision-recall curve: operating points at
/// every distinct score cut, precision replaced by its envelope
/// `max_{r' ≥ r} p(r')`, integrated stepwise over recall.
pub fn aupr(samples: &[ScoredSample], positive: Positive) -> Result<f64> {
    let (id, ood) = split_scores(samples)?;
    let n_pos = match positive {
        Positive::Id => id.len(),
        Positive::Ood => ood.len(),
    };
    let mut groups = descending_groups(
        samples,
        |s| s.is_known() == (positive == Positive::Id),
        |s| s.is_known() != (positive == Positive::Id),
    );
    if positive == Positive::Ood {
        // Negated scores rank in the opposite order.
        groups.reverse();
    }
    let mut points = Vec::with_capacity(groups.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for (p, n) in groups {
        tp += p;
        fp += n;
        points.push((tp as f64 / n_pos as f64, tp as f64 / (tp + fp) as f64));
    }
    let mut envelope = 0.0f64;
    for pt in points.iter_mut().rev() {
        envelope = envelope.max(pt.1);
        pt.1 = envelope;
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in points {
        area += (r - prev_recall) * p;
        prev_recall = r;
    }
    Ok(area)
}

/// All seven metrics. `negative` is the index of the TD class.
pub fn evaluate(samples: &[ScoredSample], classes: usize, negative: usize) -> Result<MetricsReport> {
    let closed = closed_set_stats(samples, classes, negative)?;
    let mut per_class = vec![0usize; classes];
    for s in samples {
        if let Role::Known(k) = s.role {
            per_class[k] += 1;
        }
    }
    let n_id = per_class.iter().sum();
    Ok(MetricsReport {
        acc: closed.acc,
        auroc: auroc(samples)?,
        oscr: oscr(samples)?,
        spe: closed.spe,
        sen: closed.sen,
        auin: aupr(samples, Positive::Id)?,
        auout: aupr(samples, Positive::Ood)?,
        counts: Counts {
            n_id,
            n_ood: samples.len() - n_id,
            per_class,
        },
    })
}
