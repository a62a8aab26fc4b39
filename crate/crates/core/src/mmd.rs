//! Biased (V-statistic) RBF-kernel maximum mean discrepancy with gradients.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise euclidean distance over the pooled sample, frozen for
    /// the gradient.
    MedianHeuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdConfig {
    pub bandwidth: Bandwidth,
    pub beta: f64,
    pub min_side: usize,
}

impl Default for MmdConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::MedianHeuristic,
            beta: 1.0,
            min_side: 2,
        }
    }
}

impl MmdConfig {
    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(s) = self.bandwidth {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Config(format!("MMD bandwidth must be positive, got {s}")));
            }
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Config(format!("MMD weight must be non-negative, got {}", self.beta)));
        }
        if self.min_side < 2 {
            return Err(Error::Config(format!("MMD min_side must be at least 2, got {}", self.min_side)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MmdValue {
    pub value: f64,
    pub sigma: f64,
    pub grad_x: Array2<f64>,
    pub grad_y: Array2<f64>,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median of pairwise distances over the rows of `x` and `y` together.
/// Falls back to 1 when every point coincides.
pub fn median_bandwidth(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let pooled: Vec<ArrayView1<f64>> = x.rows().into_iter().chain(y.rows()).collect();
    let mut d = Vec::with_capacity(pooled.len() * pooled.len().saturating_sub(1) / 2);
    for i in 0..pooled.len() {
        for j in (i + 1)..pooled.len() {
            d.push(sq_dist(pooled[i], pooled[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let med = if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Squared MMD for a given bandwidth, with no sample-size check.
pub fn mmd2_with_sigma(x: &Array2<f64>, y: &Array2<f64>, sigma: f64) -> Result<MmdValue> {
    if x.ncols() != y.ncols() {
        return Err(Error::Shape(format!("MMD sides have widths {} and {}", x.ncols(), y.ncols())));
    }
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::Shape("MMD side is empty".into()));
    }
    let inv = 1.0 / (2.0 * sigma * sigma);
    let (n, q) = (x.nrows() as f64, y.nrows() as f64);
    let mut grad_x = Array2::zeros(x.dim());
    let mut grad_y = Array2::zeros(y.dim());

    // For k(a,b) = exp(-|a-b|^2 inv): dk/da = -2 inv k (a - b).
    let block = |a: &Array2<f64>, b: &Array2<f64>, w: f64, ga: &mut Array2<f64>, gb: Option<&mut Array2<f64>>| {
        let mut sum = 0.0;
        let mut gb_local = gb;
        for (i, ai) in a.rows().into_iter().enumerate() {
            for (j, bj) in b.rows().into_iter().enumerate() {
                let k = (-sq_dist(ai, bj) * inv).exp();
                sum += k;
                let c = -2.0 * inv * k * w;
                for t in 0..ai.len() {
                    let diff = ai[t] - bj[t];
                    ga[[i, t]] += c * diff;
                    if let Some(gb) = gb_local.as_deref_mut() {
                        gb[[j, t]] -= c * diff;
                    }
                }
            }
        }
        sum * w
    };

    // Same-side blocks: each ordered pair contributes to both endpoints.
    let xx = block(x, x, 1.0 / (n * n), &mut grad_x, None);
    let yy = block(y, y, 1.0 / (q * q), &mut grad_y, None);
    grad_x *= 2.0;
    grad_y *= 2.0;
    let xy = block(x, y, -2.0 / (n * q), &mut grad_x, Some(&mut grad_y));
    Ok(MmdValue {
        value: xx + yy + xy,
        sigma,
        grad_x,
        grad_y,
    })
}

/// Squared MMD between two embedding sets. `Ok(None)` is the skip signal
/// returned when either side has fewer than `cfg.min_side` rows.
pub fn mmd2(x: &Array2<f64>, y: &Array2<f64>, cfg: &MmdConfig) -> Result<Option<MmdValue>> {
    if x.nrows() < cfg.min_side || y.nrows() < cfg.min_side {
        return Ok(None);
    }
    let sigma = match cfg.bandwidth {
        Bandwidth::Fixed(s) => s,
        Bandwidth::MedianHeuristic => median_bandwidth(x, y),
    };
    mmd2_with_sigma(x, y, sigma).map(Some)
}
