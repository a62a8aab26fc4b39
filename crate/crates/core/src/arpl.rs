//! Reciprocal points: distances, the softmax classification loss, the
//! adversarial margin constraint, and the open-set score.
//!
//! Sample `i` is assigned to class `k` with probability proportional to
//! `exp(gamma * d[i][k])`, where `d` is the distance to class `k`'s
//! reciprocal point. Samples of class `k` are therefore pushed away from
//! `P^k`, while the margin term keeps them within `R^k` of it.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceKind {
    /// Squared euclidean minus dot product, both scaled by 1/m.
    Combined,
    /// Squared euclidean only (ablation).
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKind {
    /// `gamma * max_k d[i][k]`.
    MaxDistance,
    /// Largest class probability.
    MaxSoftmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpParams {
    /// K×m, one reciprocal point per known class.
    pub points: Array2<f64>,
    /// Per-class learnable margins.
    pub margins: Array1<f64>,
    pub gamma: f64,
    pub distance: DistanceKind,
}

impl RpParams {
    /// Gaussian(0, 0.1²) points, zero margins.
    pub fn init(classes: usize, dim: usize, gamma: f64, distance: DistanceKind, seed: u64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Config(format!("need at least 2 known classes, got {classes}")));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.1).expect("valid std");
        let points = Array2::from_shape_simple_fn((classes, dim), || normal.sample(&mut rng));
        Ok(Self {
            points,
            margins: Array1::zeros(classes),
            gamma,
            distance,
        })
    }

    pub fn classes(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceBundle {
    /// Classification distance, batch×K.
    pub combined: Array2<f64>,
    /// `(1/m)·‖e − P‖²`, batch×K.
    pub euclid: Array2<f64>,
}

pub fn distances(emb: &Array2<f64>, rp: &RpParams) -> Result<DistanceBundle> {
    if emb.ncols() != rp.dim() {
        return Err(Error::Shape(format!(
            "embedding width {} vs reciprocal point width {}",
            emb.ncols(),
            rp.dim()
        )));
    }
    let m = rp.dim() as f64;
    let dot = emb.dot(&rp.points.t()) / m;
    let e_sq = emb.map_axis(Axis(1), |r| r.dot(&r)) / m;
    let p_sq = rp.points.map_axis(Axis(1), |r| r.dot(&r)) / m;
    let mut euclid = dot.mapv(|v| -2.0 * v);
    for (mut row, &es) in euclid.rows_mut().into_iter().zip(&e_sq) {
        row.zip_mut_with(&p_sq, |d, &ps| *d = (*d + es + ps).max(0.0));
    }
    let combined = match rp.distance {
        DistanceKind::Combined => &euclid - &dot,
        DistanceKind::Euclidean => euclid.clone(),
    };
    Ok(DistanceBundle { combined, euclid })
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - mx).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

fn log_softmax_at(row: ArrayView1<f64>, k: usize) -> f64 {
    let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln() + mx;
    row[k] - lse
}

/// Loss value with gradients w.r.t. the embedding and reciprocal points.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub grad_emb: Array2<f64>,
    pub grad_points: Array2<f64>,
    pub grad_margins: Array1<f64>,
}

/// Chains `∂L/∂combined` and `∂L/∂euclid` through the distance definitions.
fn chain_distances(emb: &Array2<f64>, rp: &RpParams, g_comb: &Array2<f64>, g_euc: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let m = rp.dim() as f64;
    // combined = euclid - dot (or euclid); fold into a single euclid / dot weight.
    let g_e = g_comb + g_euc;
    let g_dot = match rp.distance {
        DistanceKind::Combined => -g_comb,
        DistanceKind::Euclidean => Array2::zeros(g_comb.dim()),
    };
    // euclid[i][k] = (1/m)|e_i - P_k|^2: d/de_i = (2/m)(e_i - P_k); d/dP_k = -(2/m)(e_i - P_k)
    // dot[i][k] = (1/m)<e_i, P_k>:        d/de_i = P_k/m;           d/dP_k = e_i/m
    let row_e = g_e.sum_axis(Axis(1));
    let col_e = g_e.sum_axis(Axis(0));
    let mut grad_emb = (g_e.dot(&rp.points) * -2.0 + g_dot.dot(&rp.points)) / m;
    for (mut row, (&w, e)) in grad_emb.rows_mut().into_iter().zip(row_e.iter().zip(emb.rows())) {
        row.scaled_add(2.0 * w / m, &e);
    }
    let mut grad_points = (g_e.t().dot(emb) * -2.0 + g_dot.t().dot(emb)) / m;
    for (mut row, (&w, p)) in grad_points.rows_mut().into_iter().zip(col_e.iter().zip(rp.points.rows())) {
        row.scaled_add(2.0 * w / m, &p);
    }
    (grad_emb, grad_points)
}

fn check_labels(labels: &[usize], batch: usize, classes: usize) -> Result<()> {
    if labels.len() != batch {
        return Err(Error::Shape(format!("{} labels for batch of {batch}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Shape(format!("label {bad} outside [0, {classes})")));
    }
    Ok(())
}

/// Mean negative log-probability of the true class.
pub fn classification_loss(emb: &Array2<f64>, db: &DistanceBundle, labels: &[usize], rp: &RpParams) -> Result<LossGrad> {
    let (b, k) = db.combined.dim();
    check_labels(labels, b, k)?;
    let logits = &db.combined * rp.gamma;
    let mut loss = 0.0;
    for (row, &y) in logits.rows().into_iter().zip(labels) {
        loss -= log_softmax_at(row, y);
    }
    let bf = b as f64;
    let mut g = softmax_rows(&logits);
    for (mut row, &y) in g.rows_mut().into_iter().zip(labels) {
        row[y] -= 1.0;
    }
    let g_comb = g * (rp.gamma / bf);
    let (grad_emb, grad_points) = chain_distances(emb, rp, &g_comb, &Array2::zeros((b, k)));
    Ok(LossGrad {
        loss: loss / bf,
        grad_emb,
        grad_points,
        grad_margins: Array1::zeros(k),
    })
}

/// Batch mean of `max(euclid[i][y_i] − R^{y_i}, 0)`; subgradient 0 at the kink.
pub fn amc_loss(emb: &Array2<f64>, db: &DistanceBundle, labels: &[usize], rp: &RpParams) -> Result<LossGrad> {
    let (b, k) = db.euclid.dim();
    check_labels(labels, b, k)?;
    let bf = b as f64;
    let mut loss = 0.0;
    let mut g_euc = Array2::zeros((b, k));
    let mut grad_margins = Array1::zeros(k);
    for (i, &y) in labels.iter().enumerate() {
        let excess = db.euclid[[i, y]] - rp.margins[y];
        if excess > 0.0 {
            loss += excess;
            g_euc[[i, y]] = 1.0 / bf;
            grad_margins[y] -= 1.0 / bf;
        }
    }
    let (grad_emb, grad_points) = chain_distances(emb, rp, &Array2::zeros((b, k)), &g_euc);
    Ok(LossGrad {
        loss: loss / bf,
        grad_emb,
        grad_points,
        grad_margins,
    })
}

/// Lowest index wins ties.
fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Per-sample open-set score (higher is more known-like) and closed-set
/// prediction.
pub fn openset_score(db: &DistanceBundle, rp: &RpParams, kind: ScoreKind) -> (Vec<f64>, Vec<usize>) {
    let logits = &db.combined * rp.gamma;
    let predicted: Vec<usize> = logits.rows().into_iter().map(argmax).collect();
    let scores = match kind {
        ScoreKind::MaxDistance => logits.rows().into_iter().zip(&predicted).map(|(r, &k)| r[k]).collect(),
        ScoreKind::MaxSoftmax => softmax_rows(&logits)
            .rows()
            .into_iter()
            .zip(&predicted)
            .map(|(r, &k)| r[k])
            .collect(),
    };
    (scores, predicted)
}
