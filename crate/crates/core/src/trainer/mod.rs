//! Loss composition, momentum SGD with step decay, and the training loop.

pub mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, FORMAT_VERSION};

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arpl::{self, DistanceKind, RpParams, ScoreKind};
use crate::autoencoder::{self, Activation, AeConfig, AeParams};
use crate::error::{Error, Result};
use crate::ingest::{Domain, Scaling, ScalingMode};
use crate::mmd::{self, MmdConfig};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub lr_step: usize,
    pub momentum: f64,
    pub lambda_amc: f64,
    pub alpha_recon: f64,
    /// MMD term settings; `mmd.beta` is its loss weight.
    pub mmd: MmdConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 100,
            lr0: 0.01,
            lr_decay: 0.1,
            lr_step: 30,
            momentum: 0.9,
            lambda_amc: 0.1,
            alpha_recon: 1.0,
            mmd: MmdConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.lr_step == 0 {
            return fail("lr_step must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.lr0 > 0.0) || !(self.lr_decay > 0.0) {
            return fail("lr0 and lr_decay must be positive".into());
        }
        if !(self.lambda_amc >= 0.0) || !(self.alpha_recon >= 0.0) {
            return fail("loss weights must be non-negative".into());
        }
        self.mmd.validate()
    }
}

/// Architecture and scoring choices, independent of the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    pub activation: Activation,
    pub gamma: f64,
    pub distance: DistanceKind,
    pub score: ScoreKind,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            hidden_dims: vec![1024],
            embedding_dim: 128,
            activation: Activation::ReLU,
            gamma: 1.0,
            distance: DistanceKind::Combined,
            score: ScoreKind::MaxDistance,
        }
    }
}

impl ModelSpec {
    pub fn ae_config(&self, input_dim: usize, seed: u64) -> AeConfig {
        AeConfig {
            input_dim,
            hidden_dims: self.hidden_dims.clone(),
            embedding_dim: self.embedding_dim,
            activation: self.activation,
            seed,
        }
    }
}

/// Scaled training features with known-class indices and source domains.
#[derive(Debug, Clone)]
pub struct TrainSet {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub domains: Vec<Domain>,
    /// Class names in index order.
    pub classes: Vec<String>,
    /// Class whose embeddings are aligned across domains by MMD.
    pub align_class: Option<usize>,
}

impl TrainSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Trainable tensors (or gradients/velocities with the same shapes).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors {
    pub ae: AeParams,
    pub points: Array2<f64>,
    pub margins: Array1<f64>,
}

impl Tensors {
    pub fn zeros_like(&self) -> Self {
        Self {
            ae: self.ae.zeros_like(),
            points: Array2::zeros(self.points.dim()),
            margins: Array1::zeros(self.margins.len()),
        }
    }

    pub fn named(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = self.ae.tensors();
        out.push((
            "rp.points".into(),
            self.points.shape().to_vec(),
            self.points.as_slice().expect("standard layout"),
        ));
        out.push((
            "rp.margins".into(),
            self.margins.shape().to_vec(),
            self.margins.as_slice().expect("standard layout"),
        ));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.ae.tensors_mut();
        out.push(self.points.as_slice_mut().expect("standard layout"));
        out.push(self.margins.as_slice_mut().expect("standard layout"));
        out
    }
}

/// Everything needed to resume training or score new subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub params: Tensors,
    pub velocity: Tensors,
    pub epoch: usize,
    pub config: TrainConfig,
    pub model: ModelSpec,
    pub classes: Vec<String>,
    pub align_class: Option<usize>,
    pub scaling: Scaling,
}

impl ModelState {
    pub fn init(
        input_dim: usize,
        classes: Vec<String>,
        align_class: Option<usize>,
        model: ModelSpec,
        config: TrainConfig,
        scaling: Scaling,
    ) -> Result<Self> {
        config.validate()?;
        let ae = autoencoder::init_params(&model.ae_config(input_dim, seed::derive(config.seed, seed::stream::AUTOENCODER)))?;
        let rp = RpParams::init(
            classes.len(),
            model.embedding_dim,
            model.gamma,
            model.distance,
            seed::derive(config.seed, seed::stream::RECIPROCAL_POINTS),
        )?;
        let params = Tensors {
            ae,
            points: rp.points,
            margins: rp.margins,
        };
        let velocity = params.zeros_like();
        Ok(Self {
            params,
            velocity,
            epoch: 0,
            config,
            model,
            classes,
            align_class,
            scaling,
        })
    }

    pub fn rp(&self) -> RpParams {
        RpParams {
            points: self.params.points.clone(),
            margins: self.params.margins.clone(),
            gamma: self.model.gamma,
            distance: self.model.distance,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.params.ae.input_dim()
    }
}

/// Per-component loss values for one batch. Components whose weight is zero
/// are not evaluated and report 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub cls: f64,
    pub amc: f64,
    pub recon: f64,
    /// `None` when the MMD term was skipped for this batch.
    pub mmd: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub breakdown: LossBreakdown,
    pub grads: Tensors,
}

/// `L = L_c + λ·L_o + α·L_mse + β·L_mmd` with gradients for every tensor.
pub fn total_loss(state: &ModelState, features: &Array2<f64>, labels: &[usize], domains: &[Domain]) -> Result<LossOutput> {
    if features.nrows() == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    if labels.len() != features.nrows() || domains.len() != features.nrows() {
        return Err(Error::Shape(format!(
            "batch of {} rows with {} labels and {} domains",
            features.nrows(),
            labels.len(),
            domains.len()
        )));
    }
    let cfg = &state.config;
    let rp = state.rp();
    let act = autoencoder::forward(&state.params.ae, features)?;
    let db = arpl::distances(&act.embedding, &rp)?;

    let cls = arpl::classification_loss(&act.embedding, &db, labels, &rp)?;
    let mut breakdown = LossBreakdown {
        cls: cls.loss,
        ..Default::default()
    };
    let mut grad_emb = cls.grad_emb;
    let mut grad_points = cls.grad_points;
    let mut grad_margins = cls.grad_margins;

    if cfg.lambda_amc > 0.0 {
        let amc = arpl::amc_loss(&act.embedding, &db, labels, &rp)?;
        breakdown.amc = amc.loss;
        grad_emb.scaled_add(cfg.lambda_amc, &amc.grad_emb);
        grad_points.scaled_add(cfg.lambda_amc, &amc.grad_points);
        grad_margins.scaled_add(cfg.lambda_amc, &amc.grad_margins);
    }

    let grad_recon = if cfg.alpha_recon > 0.0 {
        let (loss, g) = autoencoder::reconstruction_loss(&act, features)?;
        breakdown.recon = loss;
        g * cfg.alpha_recon
    } else {
        Array2::zeros(act.reconstruction.dim())
    };

    if cfg.mmd.beta > 0.0 {
        if let Some(class) = state.align_class {
            let pick = |d: Domain| -> Vec<usize> { (0..labels.len()).filter(|&i| labels[i] == class && domains[i] == d).collect() };
            let (ia, ib) = (pick(Domain::Abide1), pick(Domain::Adhd200));
            let xa = act.embedding.select(ndarray::Axis(0), &ia);
            let xb = act.embedding.select(ndarray::Axis(0), &ib);
            if let Some(v) = mmd::mmd2(&xa, &xb, &cfg.mmd)? {
                breakdown.mmd = Some(v.value);
                for (r, &i) in ia.iter().enumerate() {
                    grad_emb.row_mut(i).scaled_add(cfg.mmd.beta, &v.grad_x.row(r));
                }
                for (r, &i) in ib.iter().enumerate() {
                    grad_emb.row_mut(i).scaled_add(cfg.mmd.beta, &v.grad_y.row(r));
                }
            }
        }
    }

    breakdown.total =
        breakdown.cls + cfg.lambda_amc * breakdown.amc + cfg.alpha_recon * breakdown.recon + cfg.mmd.beta * breakdown.mmd.unwrap_or(0.0);

    let ae_grads = autoencoder::backward(&state.params.ae, &act, &grad_emb, &grad_recon)?;
    Ok(LossOutput {
        breakdown,
        grads: Tensors {
            ae: ae_grads.params,
            points: grad_points,
            margins: grad_margins,
        },
    })
}

/// `v ← μ·v − lr·g; θ ← θ + v` over every learnable. Checks all gradients
/// before touching any parameter.
pub fn sgd_momentum_step(state: &mut ModelState, grads: &Tensors, lr: f64) -> Result<()> {
    for (name, _, g) in grads.named() {
        if let Some(index) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { tensor: name, index });
        }
    }
    let mu = state.config.momentum;
    let g_all = grads.named();
    let mut params = state.params.slices_mut();
    let mut vels = state.velocity.slices_mut();
    if params.len() != g_all.len() {
        return Err(Error::Shape("gradient tensor count differs from parameters".into()));
    }
    for ((p, v), (name, _, g)) in params.iter_mut().zip(vels.iter_mut()).zip(g_all) {
        if p.len() != g.len() {
            return Err(Error::Shape(format!(
                "gradient `{name}` has {} entries, parameter has {}",
                g.len(),
                p.len()
            )));
        }
        for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
            *vi = mu * *vi - lr * gi;
            *pi += *vi;
        }
    }
    Ok(())
}

/// Step-decayed learning rate for a zero-based epoch.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * cfg.lr_decay.powi((epoch / cfg.lr_step) as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_cls: f64,
    pub loss_amc: f64,
    pub loss_recon: f64,
    /// Mean over batches where MMD was evaluated.
    pub loss_mmd: f64,
    pub mmd_skipped_batches: usize,
}

/// Seeded permutation for one epoch.
pub fn epoch_order(n: usize, root_seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let s = seed::derive(seed::derive(root_seed, seed::stream::SHUFFLE), epoch as u64);
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
    order
}

/// Trains a fresh model on `train`. Deterministic given `config.seed`.
pub fn fit(train: &TrainSet, model: &ModelSpec, config: &TrainConfig, scaling: Scaling) -> Result<(ModelState, Vec<EpochRecord>)> {
    let k = train.classes.len();
    if train.is_empty() {
        return Err(Error::DegenerateTrainSet("no training subjects".into()));
    }
    if k < 2 {
        return Err(Error::DegenerateTrainSet(format!("need at least 2 known classes, got {k}")));
    }
    if train.labels.len() != train.features.nrows() || train.domains.len() != train.features.nrows() {
        return Err(Error::Shape("train set labels/domains do not match feature rows".into()));
    }
    for c in 0..k {
        if !train.labels.contains(&c) {
            return Err(Error::DegenerateTrainSet(format!(
                "class `{}` has no training subjects",
                train.classes[c]
            )));
        }
    }
    if let Some(&bad) = train.labels.iter().find(|&&l| l >= k) {
        return Err(Error::Shape(format!("label {bad} outside [0, {k})")));
    }

    let mut state = ModelState::init(
        train.features.ncols(),
        train.classes.clone(),
        train.align_class,
        model.clone(),
        config.clone(),
        scaling,
    )?;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = lr_at(epoch, config);
        let order = epoch_order(train.len(), config.seed, epoch);
        let mut sums = LossBreakdown::default();
        let (mut batches, mut mmd_batches, mut mmd_sum, mut skipped) = (0usize, 0usize, 0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let x = train.features.select(ndarray::Axis(0), chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let d: Vec<Domain> = chunk.iter().map(|&i| train.domains[i]).collect();
            let out = total_loss(&state, &x, &y, &d)?;
            sgd_momentum_step(&mut state, &out.grads, lr)?;
            let b = out.breakdown;
            sums.total += b.total;
            sums.cls += b.cls;
            sums.amc += b.amc;
            sums.recon += b.recon;
            match b.mmd {
                Some(v) => {
                    mmd_sum += v;
                    mmd_batches += 1;
                }
                None if config.mmd.beta > 0.0 && train.align_class.is_some() => skipped += 1,
                None => {}
            }
            batches += 1;
        }
        let n = batches as f64;
        state.epoch = epoch + 1;
        history.push(EpochRecord {
            epoch,
            lr,
            loss_total: sums.total / n,
            loss_cls: sums.cls / n,
            loss_amc: sums.amc / n,
            loss_recon: sums.recon / n,
            loss_mmd: if mmd_batches > 0 { mmd_sum / mmd_batches as f64 } else { 0.0 },
            mmd_skipped_batches: skipped,
        });
    }
    Ok((state, history))
}

/// Scores, closed-set predictions and embeddings for a batch of scaled
/// feature rows.
#[derive(Debug, Clone)]
pub struct Scored {
    pub scores: Vec<f64>,
    pub predicted: Vec<usize>,
    pub embedding: Array2<f64>,
}

pub fn score(state: &ModelState, features: &Array2<f64>) -> Result<Scored> {
    let embedding = autoencoder::encode(&state.params.ae, features)?;
    let rp = state.rp();
    let db = arpl::distances(&embedding, &rp)?;
    let (scores, predicted) = arpl::openset_score(&db, &rp, state.model.score);
    Ok(Scored {
        scores,
        predicted,
        embedding,
    })
}

pub const HISTORY_HEADER: &str = "epoch,lr,loss_total,loss_cls,loss_amc,loss_recon,loss_mmd,mmd_skipped_batches";

pub fn write_history(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut body = String::from(HISTORY_HEADER);
    body.push('\n');
    for r in history {
        body.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.epoch, r.lr, r.loss_total, r.loss_cls, r.loss_amc, r.loss_recon, r.loss_mmd, r.mmd_skipped_batches
        ));
    }
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

/// Unscaled policy, for callers that feed pre-scaled features directly.
pub fn no_scaling() -> Scaling {
    Scaling {
        mode: ScalingMode::None,
        a: -1.0,
        b: 1.0,
        stats: None,
    }
}
