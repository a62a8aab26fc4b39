mod common;

use common::*;
use ndd_osr::ingest::Domain;
use ndd_osr::trainer::{self, checkpoint, ModelSpec, TrainConfig, TrainSet};

/// Two Gaussian blobs 4σ apart along a random direction.
pub fn separable(n: usize, d: usize, seed: u64) -> TrainSet {
    let mut r = rng(seed);
    let dir = gaussian(&mut r, 1, d);
    let dir = &dir / dir.mapv(|v| v * v).sum().sqrt();
    let mut x = gaussian(&mut r, n, d) * 0.5;
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    for (i, &c) in labels.iter().enumerate() {
        let sign = if c == 0 { 1.0 } else { -1.0 };
        x.row_mut(i).scaled_add(sign, &dir.row(0));
    }
    TrainSet {
        features: x,
        labels,
        domains: (0..n).map(|i| if i % 4 < 2 { Domain::Abide1 } else { Domain::Adhd200 }).collect(),
        classes: vec!["TD".into(), "ASD".into()],
        align_class: Some(0),
    }
}

fn small_model() -> ModelSpec {
    ModelSpec {
        hidden_dims: vec![16],
        embedding_dim: 4,
        ..ModelSpec::default()
    }
}

fn train_accuracy(state: &trainer::ModelState, set: &TrainSet) -> f64 {
    let s = trainer::score(state, &set.features).unwrap();
    s.predicted.iter().zip(&set.labels).filter(|(p, l)| p == l).count() as f64 / set.len() as f64
}

#[test]
fn fit_is_bit_deterministic_and_checkpoints_match() {
    let set = separable(37, 8, 1);
    let cfg = TrainConfig {
        epochs: 5,
        seed: 99,
        ..TrainConfig::default()
    };
    let (a, ha) = trainer::fit(&set, &small_model(), &cfg, trainer::no_scaling()).unwrap();
    let (b, hb) = trainer::fit(&set, &small_model(), &cfg, trainer::no_scaling()).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    let dir = tempfile::tempdir().unwrap();
    checkpoint::save_checkpoint(&a, dir.path().join("a")).unwrap();
    checkpoint::save_checkpoint(&b, dir.path().join("b")).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("a")).unwrap(),
        std::fs::read(dir.path().join("b")).unwrap()
    );
    let other = TrainConfig { seed: 100, ..cfg };
    let (c, _) = trainer::fit(&set, &small_model(), &other, trainer::no_scaling()).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn separable_set_is_learned() {
    let set = separable(80, 10, 2);
    let cfg = TrainConfig {
        epochs: 30,
        ..TrainConfig::default()
    };
    let (state, history) = trainer::fit(&set, &small_model(), &cfg, trainer::no_scaling()).unwrap();
    assert_eq!(history.len(), 30);
    let acc = train_accuracy(&state, &set);
    assert!(acc >= 0.95, "training accuracy {acc}");
}

#[test]
fn classification_loss_falls_over_first_epochs() {
    let mut monotone = 0;
    for seed in 0..20 {
        let set = separable(160, 10, 1000 + seed);
        let cfg = TrainConfig {
            epochs: 10,
            seed,
            ..TrainConfig::default()
        };
        let (_, h) = trainer::fit(&set, &small_model(), &cfg, trainer::no_scaling()).unwrap();
        monotone += usize::from(h.windows(2).all(|w| w[1].loss_cls <= w[0].loss_cls));
    }
    assert!(monotone >= 16, "L_c non-increasing in only {monotone}/20 seeds");
}

#[test]
fn pure_classifier_when_other_weights_zero() {
    let set = separable(20, 5, 3);
    let mut cfg = TrainConfig {
        epochs: 2,
        lambda_amc: 0.0,
        alpha_recon: 0.0,
        ..TrainConfig::default()
    };
    cfg.mmd.beta = 0.0;
    let (_, h) = trainer::fit(&set, &small_model(), &cfg, trainer::no_scaling()).unwrap();
    for r in &h {
        assert_eq!((r.loss_amc, r.loss_recon, r.loss_mmd, r.mmd_skipped_batches), (0.0, 0.0, 0.0, 0));
        assert_eq!(r.loss_total, r.loss_cls);
    }
}

#[test]
fn every_epoch_covers_the_set_once_with_last_batch_kept() {
    for n in [1usize, 15, 16, 17, 50] {
        for epoch in 0..3 {
            let mut order = trainer::epoch_order(n, 5, epoch);
            let batches: Vec<&[usize]> = order.chunks(16).collect();
            assert_eq!(batches.len(), n.div_ceil(16));
            order.sort_unstable();
            assert_eq!(order, (0..n).collect::<Vec<_>>());
        }
    }
    assert_ne!(trainer::epoch_order(50, 5, 0), trainer::epoch_order(50, 5, 1));
}

#[test]
fn single_class_rejected() {
    let mut set = separable(10, 4, 4);
    set.labels = vec![0; 10];
    let err = trainer::fit(&set, &small_model(), &TrainConfig::default(), trainer::no_scaling()).unwrap_err();
    assert!(matches!(err, ndd_osr::Error::DegenerateTrainSet(_)));
}

#[test]
fn non_finite_input_rejected() {
    let mut set = separable(10, 4, 5);
    set.features[[3, 1]] = f64::NAN;
    assert!(trainer::fit(&set, &small_model(), &TrainConfig::default(), trainer::no_scaling()).is_err());
}
