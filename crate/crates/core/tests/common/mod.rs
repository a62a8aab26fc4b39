#![allow(dead_code)]

use ndarray::{Array1, Array2};
use ndd_osr::arpl::{self, DistanceKind, RpParams};
use ndd_osr::autoencoder::Activation;
use ndd_osr::ingest::{self, Domain};
use ndd_osr::metrics::{Role, ScoredSample};
use ndd_osr::mmd::{self, Bandwidth, MmdConfig};
use ndd_osr::trainer::{self, ModelSpec, ModelState, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const H: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Norm-wise relative error between an analytic and a numeric gradient.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_grad(x: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + H;
        let up = f(x);
        x[i] = orig - H;
        let down = f(x);
        x[i] = orig;
        out.push((up - down) / (2.0 * H));
    }
    out
}

/// A small random configuration for gradient checks.
#[derive(Debug, Clone)]
pub struct SmallCase {
    pub d: usize,
    pub hidden: Vec<usize>,
    pub m: usize,
    pub k: usize,
    pub b: usize,
    pub activation: Activation,
    pub distance: DistanceKind,
    pub seed: u64,
}

pub fn small_cases(n: usize) -> Vec<SmallCase> {
    let mut r = rng(4242);
    (0..n)
        .map(|i| SmallCase {
            d: r.random_range(3..8),
            hidden: (0..(i % 3)).map(|_| r.random_range(3..7)).collect(),
            m: r.random_range(2..5),
            k: r.random_range(2..4),
            b: r.random_range(3..7),
            activation: if i % 2 == 0 { Activation::Tanh } else { Activation::ReLU },
            distance: if i % 4 == 3 {
                DistanceKind::Euclidean
            } else {
                DistanceKind::Combined
            },
            seed: 100 + i as u64,
        })
        .collect()
}

/// Random points and positive margins for a case.
pub fn random_rp(case: &SmallCase, r: &mut impl Rng) -> RpParams {
    let mut rp = RpParams::init(case.k, case.m, 1.3, case.distance, case.seed).unwrap();
    rp.points = gaussian(r, case.k, case.m);
    rp
}

pub fn labels(b: usize, k: usize) -> Vec<usize> {
    (0..b).map(|i| i % k).collect()
}

/// Model state with every loss component active and a fixed MMD bandwidth.
pub fn composite_state(d: usize, hidden: Vec<usize>, m: usize, activation: Activation, seed: u64) -> ModelState {
    let model = ModelSpec {
        hidden_dims: hidden,
        embedding_dim: m,
        activation,
        gamma: 1.1,
        ..ModelSpec::default()
    };
    let mut cfg = TrainConfig {
        lambda_amc: 0.3,
        alpha_recon: 0.7,
        seed,
        ..TrainConfig::default()
    };
    cfg.mmd = MmdConfig {
        bandwidth: Bandwidth::Fixed(1.7),
        beta: 0.9,
        min_side: 2,
    };
    let mut s = ModelState::init(d, vec!["TD".into(), "ASD".into()], Some(0), model, cfg, trainer::no_scaling()).unwrap();
    let mut g = rng(seed ^ 0x55);
    s.params.points = gaussian(&mut g, 2, m);
    // Margins small enough that every hinge is active and far from the kink.
    s.params.margins = Array1::from(vec![-0.5, -0.4]);
    for layer in s.params.ae.encoder.iter_mut().chain(s.params.ae.decoder.iter_mut()) {
        let n = layer.bias.len();
        layer.bias = gaussian(&mut g, 1, n).row(0).to_owned() * 0.3;
    }
    s
}

pub fn composite_batch(d: usize, b: usize, seed: u64) -> (Array2<f64>, Vec<usize>, Vec<Domain>) {
    let mut g = rng(seed);
    let x = gaussian(&mut g, b, d);
    // Rows 0..4 are TD split across both domains so the MMD term is active.
    let labels: Vec<usize> = (0..b).map(|i| usize::from(i >= 4)).collect();
    let domains: Vec<Domain> = (0..b).map(|i| if i % 2 == 0 { Domain::Abide1 } else { Domain::Adhd200 }).collect();
    (x, labels, domains)
}

/// Cross-entropy over `gamma * distance`, written with explicit loops.
pub fn cls_loss_oracle(emb: &Array2<f64>, points: &Array2<f64>, labels: &[usize], gamma: f64, kind: DistanceKind) -> f64 {
    let (b, m) = emb.dim();
    let k = points.nrows();
    let mut total = 0.0;
    for i in 0..b {
        let mut logits = vec![0.0; k];
        for (c, l) in logits.iter_mut().enumerate() {
            let mut e = 0.0;
            let mut dot = 0.0;
            for j in 0..m {
                e += (emb[[i, j]] - points[[c, j]]).powi(2);
                dot += emb[[i, j]] * points[[c, j]];
            }
            let d = match kind {
                DistanceKind::Combined => (e - dot) / m as f64,
                DistanceKind::Euclidean => e / m as f64,
            };
            *l = gamma * d;
        }
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + logits.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
        total += lse - logits[labels[i]];
    }
    total / b as f64
}

pub fn amc_loss_oracle(emb: &Array2<f64>, points: &Array2<f64>, margins: &[f64], labels: &[usize]) -> f64 {
    let (b, m) = emb.dim();
    let mut total = 0.0;
    for i in 0..b {
        let y = labels[i];
        let e: f64 = (0..m).map(|j| (emb[[i, j]] - points[[y, j]]).powi(2)).sum::<f64>() / m as f64;
        total += (e - margins[y]).max(0.0);
    }
    total / b as f64
}

pub fn mmd_oracle(x: &Array2<f64>, y: &Array2<f64>, sigma: f64) -> f64 {
    let k = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| {
        let d2: f64 = a.iter().zip(b.iter()).map(|(p, q)| (p - q).powi(2)).sum();
        (-d2 / (2.0 * sigma * sigma)).exp()
    };
    let mean = |p: &Array2<f64>, q: &Array2<f64>| {
        let mut s = 0.0;
        for a in p.rows() {
            for b in q.rows() {
                s += k(a, b);
            }
        }
        s / (p.nrows() * q.nrows()) as f64
    };
    mean(x, x) + mean(y, y) - 2.0 * mean(x, y)
}

pub fn arpl_distances(emb: &Array2<f64>, rp: &RpParams) -> arpl::DistanceBundle {
    arpl::distances(emb, rp).unwrap()
}

pub fn mmd_value(x: &Array2<f64>, y: &Array2<f64>, sigma: f64) -> mmd::MmdValue {
    mmd::mmd2_with_sigma(x, y, sigma).unwrap()
}

pub fn sample(role: Role, predicted: usize, score: f64) -> ScoredSample {
    ScoredSample {
        subject_id: String::new(),
        role,
        predicted,
        score,
    }
}

/// Random two-class scored set with heavy ties (scores on a coarse grid).
pub fn random_samples(r: &mut impl Rng, max_len: usize) -> Vec<ScoredSample> {
    let n = r.random_range(2..=max_len);
    let grid = r.random_range(2..12) as f64;
    let mut out: Vec<ScoredSample> = (0..n)
        .map(|_| {
            let role = match r.random_range(0..3) {
                0 => Role::Unknown,
                c => Role::Known(c - 1),
            };
            let score = (r.random::<f64>() * grid).floor() / grid + if r.random_bool(0.3) { 0.0 } else { r.random::<f64>() };
            sample(role, r.random_range(0..2), score)
        })
        .collect();
    out[0].role = Role::Unknown;
    out[1].role = Role::Known(0);
    out
}

pub fn auroc_oracle(s: &[ScoredSample]) -> f64 {
    let id: Vec<f64> = s.iter().filter(|x| x.is_known()).map(|x| x.score).collect();
    let ood: Vec<f64> = s.iter().filter(|x| !x.is_known()).map(|x| x.score).collect();
    let mut wins = 0.0;
    for a in &id {
        for b in &ood {
            wins += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (id.len() * ood.len()) as f64
}

/// Exhaustive threshold sweep: every `score > t` cut for t over the
/// observed scores and ±∞, trapezoids between consecutive operating points.
pub fn oscr_sweep_oracle(s: &[ScoredSample]) -> f64 {
    let n_id = s.iter().filter(|x| x.is_known()).count() as f64;
    let n_ood = s.iter().filter(|x| !x.is_known()).count() as f64;
    let mut ts: Vec<f64> = s.iter().map(|x| x.score).collect();
    ts.push(f64::INFINITY);
    ts.push(f64::NEG_INFINITY);
    ts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ts.dedup();
    let point = |t: f64| {
        let ccr = s.iter().filter(|x| x.is_correct() && x.score > t).count() as f64 / n_id;
        let fpr = s.iter().filter(|x| !x.is_known() && x.score > t).count() as f64 / n_ood;
        (fpr, ccr)
    };
    let pts: Vec<(f64, f64)> = ts.into_iter().map(point).collect();
    pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

/// Pairs of (correct ID, OOD) where the ID sample outscores, ties ½, over
/// all ID × OOD pairs.
pub fn oscr_pairs_oracle(s: &[ScoredSample]) -> f64 {
    let id: Vec<&ScoredSample> = s.iter().filter(|x| x.is_known()).collect();
    let ood: Vec<&ScoredSample> = s.iter().filter(|x| !x.is_known()).collect();
    let mut total = 0.0;
    for a in id.iter().filter(|x| x.is_correct()) {
        for b in &ood {
            total += if a.score > b.score {
                1.0
            } else if a.score == b.score {
                0.5
            } else {
                0.0
            };
        }
    }
    total / (id.len() * ood.len()) as f64
}

/// Enumerates `score ≥ t` operating points, interpolates precision by its
/// envelope over recall and integrates stepwise from recall 0.
pub fn aupr_oracle(s: &[ScoredSample], id_positive: bool) -> f64 {
    let pos = |x: &ScoredSample| x.is_known() == id_positive;
    let key = |x: &ScoredSample| if id_positive { x.score } else { -x.score };
    let n_pos = s.iter().filter(|x| pos(x)).count() as f64;
    let mut ts: Vec<f64> = s.iter().map(key).collect();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup();
    let mut pts: Vec<(f64, f64)> = ts
        .iter()
        .map(|&t| {
            let tp = s.iter().filter(|x| pos(x) && key(x) >= t).count() as f64;
            let k = s.iter().filter(|x| key(x) >= t).count() as f64;
            (tp / n_pos, tp / k)
        })
        .collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut area = 0.0;
    let mut prev = 0.0;
    for (i, &(r, _)) in pts.iter().enumerate() {
        let p = pts[i..].iter().map(|q| q.1).fold(0.0, f64::max);
        area += (r - prev) * p;
        prev = r;
    }
    area
}

/// Leave-one-out nearest-centroid accuracy over FC vectors.
pub fn nearest_centroid_accuracy(features: &[Array1<f64>], labels: &[usize]) -> f64 {
    let k = labels.iter().max().unwrap() + 1;
    let d = features[0].len();
    let mut sums = vec![Array1::<f64>::zeros(d); k];
    let mut counts = vec![0usize; k];
    for (f, &l) in features.iter().zip(labels) {
        sums[l] += f;
        counts[l] += 1;
    }
    let mut correct = 0;
    for (f, &l) in features.iter().zip(labels) {
        let mut best = (f64::INFINITY, 0);
        for c in 0..k {
            let (sum, n) = if c == l {
                (&sums[c] - f, counts[c] - 1)
            } else {
                (sums[c].clone(), counts[c])
            };
            let centroid = sum / n as f64;
            let dist = (&centroid - f).mapv(|v| v * v).sum();
            if dist < best.0 {
                best = (dist, c);
            }
        }
        correct += usize::from(best.1 == l);
    }
    correct as f64 / features.len() as f64
}

pub fn fc_features(series: &[ingest::RoiTimeSeries]) -> Vec<Array1<f64>> {
    series
        .iter()
        .map(|ts| ingest::vectorize_upper(&ingest::pearson_fc(ts).unwrap()).values)
        .collect()
}

/// Central differences for every entry of every tensor exposed by `slices`.
pub fn fd_tensors<P: Clone>(p: &P, slices: impl Fn(&mut P) -> Vec<&mut [f64]>, f: impl Fn(&P) -> f64) -> Vec<Vec<f64>> {
    let mut work = p.clone();
    let shapes: Vec<usize> = slices(&mut work).iter().map(|s| s.len()).collect();
    let mut out = Vec::with_capacity(shapes.len());
    for (t, &len) in shapes.iter().enumerate() {
        let mut g = Vec::with_capacity(len);
        for i in 0..len {
            let orig = slices(&mut work)[t][i];
            slices(&mut work)[t][i] = orig + H;
            let up = f(&work);
            slices(&mut work)[t][i] = orig - H;
            let down = f(&work);
            slices(&mut work)[t][i] = orig;
            g.push((up - down) / (2.0 * H));
        }
        out.push(g);
    }
    out
}

fn ae_case(case: &SmallCase) -> ndd_osr::autoencoder::AeParams {
    let cfg = ndd_osr::autoencoder::AeConfig {
        input_dim: case.d,
        hidden_dims: case.hidden.clone(),
        embedding_dim: case.m,
        activation: case.activation,
        seed: case.seed,
    };
    let mut p = ndd_osr::autoencoder::init_params(&cfg).unwrap();
    // Nonzero biases so every parameter has a generic gradient.
    let mut r = rng(case.seed ^ 7);
    for s in p.tensors_mut() {
        for v in s.iter_mut() {
            *v += 0.1 * r.sample::<f64, _>(StandardNormal);
        }
    }
    p
}

/// Autoencoder backward against FD of `<Ge, emb> + α·mse(recon, x)`.
pub fn ae_checks(case: &SmallCase) -> Vec<(String, f64)> {
    use ndd_osr::autoencoder::{backward, forward, reconstruction_loss};
    let p = ae_case(case);
    let mut r = rng(case.seed ^ 11);
    let x = gaussian(&mut r, case.b, case.d);
    let ge = gaussian(&mut r, case.b, case.m);
    // The reconstruction target stays fixed; only the network input moves.
    let loss = |p: &ndd_osr::autoencoder::AeParams, input: &Array2<f64>| {
        let act = forward(p, input).unwrap();
        (&act.embedding * &ge).sum() + reconstruction_loss(&act, &x).unwrap().0
    };
    let act = forward(&p, &x).unwrap();
    let (_, gr) = reconstruction_loss(&act, &x).unwrap();
    let grads = backward(&p, &act, &ge, &gr).unwrap();
    let numeric = fd_tensors(&p, |q| q.tensors_mut(), |q| loss(q, &x));
    let mut out: Vec<(String, f64)> = grads
        .params
        .tensors()
        .iter()
        .zip(&numeric)
        .map(|((name, _, a), n)| (format!("ae {name}"), rel_err(a, n)))
        .collect();
    let mut xs = x.clone();
    let nx = numeric_grad(xs.as_slice_mut().unwrap(), |v| {
        loss(&p, &Array2::from_shape_vec(x.dim(), v.to_vec()).unwrap())
    });
    out.push(("ae input".into(), rel_err(grads.input.as_slice().unwrap(), &nx)));
    out
}

/// Reconstruction loss alone through the whole network.
pub fn recon_checks(case: &SmallCase) -> Vec<(String, f64)> {
    use ndd_osr::autoencoder::{backward, forward, reconstruction_loss};
    let p = ae_case(case);
    let x = gaussian(&mut rng(case.seed ^ 13), case.b, case.d);
    let act = forward(&p, &x).unwrap();
    let (_, gr) = reconstruction_loss(&act, &x).unwrap();
    let grads = backward(&p, &act, &Array2::zeros(act.embedding.dim()), &gr).unwrap();
    let numeric = fd_tensors(
        &p,
        |q| q.tensors_mut(),
        |q| reconstruction_loss(&forward(q, &x).unwrap(), &x).unwrap().0,
    );
    grads
        .params
        .tensors()
        .iter()
        .zip(&numeric)
        .map(|((name, _, a), n)| (format!("recon {name}"), rel_err(a, n)))
        .collect()
}

#[derive(Clone)]
pub struct RpInputs {
    pub emb: Array2<f64>,
    pub rp: RpParams,
}

fn rp_slices(v: &mut RpInputs) -> Vec<&mut [f64]> {
    vec![
        v.emb.as_slice_mut().unwrap(),
        v.rp.points.as_slice_mut().unwrap(),
        v.rp.margins.as_slice_mut().unwrap(),
    ]
}

/// Classification loss gradients w.r.t. embedding, points and margins.
pub fn cls_checks(case: &SmallCase) -> Vec<(String, f64)> {
    let mut r = rng(case.seed ^ 17);
    let inputs = RpInputs {
        emb: gaussian(&mut r, case.b, case.m),
        rp: random_rp(case, &mut r),
    };
    let y = labels(case.b, case.k);
    let f = |v: &RpInputs| {
        arpl::classification_loss(&v.emb, &arpl_distances(&v.emb, &v.rp), &y, &v.rp)
            .unwrap()
            .loss
    };
    let g = arpl::classification_loss(&inputs.emb, &arpl_distances(&inputs.emb, &inputs.rp), &y, &inputs.rp).unwrap();
    let n = fd_tensors(&inputs, rp_slices, f);
    vec![
        ("cls emb".into(), rel_err(g.grad_emb.as_slice().unwrap(), &n[0])),
        ("cls points".into(), rel_err(g.grad_points.as_slice().unwrap(), &n[1])),
        ("cls margins".into(), rel_err(g.grad_margins.as_slice().unwrap(), &n[2])),
    ]
}

/// Margin loss with half the hinges active; every hinge is at least 0.05
/// from its kink.
pub fn amc_checks(case: &SmallCase) -> Vec<(String, f64)> {
    let mut r = rng(case.seed ^ 19);
    let mut inputs = RpInputs {
        emb: gaussian(&mut r, case.b, case.m),
        rp: random_rp(case, &mut r),
    };
    let y = labels(case.b, case.k);
    let db = arpl_distances(&inputs.emb, &inputs.rp);
    for c in 0..case.k {
        let mut own: Vec<f64> = (0..case.b).filter(|&i| y[i] == c).map(|i| db.euclid[[i, c]]).collect();
        own.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Place the margin in the widest gap so no hinge sits near zero.
        let mut best = (own[0] - 0.5, -1.0);
        for w in own.windows(2) {
            if w[1] - w[0] > best.1 {
                best = ((w[0] + w[1]) / 2.0, w[1] - w[0]);
            }
        }
        inputs.rp.margins[c] = best.0;
    }
    let db = arpl_distances(&inputs.emb, &inputs.rp);
    let min_gap = (0..case.b)
        .map(|i| (db.euclid[[i, y[i]]] - inputs.rp.margins[y[i]]).abs())
        .fold(f64::INFINITY, f64::min);
    assert!(min_gap > 1e-3, "hinge too close to kink: {min_gap}");
    let f = |v: &RpInputs| arpl::amc_loss(&v.emb, &arpl_distances(&v.emb, &v.rp), &y, &v.rp).unwrap().loss;
    let g = arpl::amc_loss(&inputs.emb, &db, &y, &inputs.rp).unwrap();
    let n = fd_tensors(&inputs, rp_slices, f);
    vec![
        ("amc emb".into(), rel_err(g.grad_emb.as_slice().unwrap(), &n[0])),
        ("amc points".into(), rel_err(g.grad_points.as_slice().unwrap(), &n[1])),
        ("amc margins".into(), rel_err(g.grad_margins.as_slice().unwrap(), &n[2])),
    ]
}

pub fn mmd_checks(case: &SmallCase) -> Vec<(String, f64)> {
    let mut r = rng(case.seed ^ 23);
    let x = gaussian(&mut r, case.b, case.m);
    let y = gaussian(&mut r, case.b + 1, case.m) + 0.5;
    let sigma = mmd::median_bandwidth(&x, &y);
    let v = mmd_value(&x, &y, sigma);
    let mut xs = x.clone();
    let nx = numeric_grad(xs.as_slice_mut().unwrap(), |p| {
        mmd_value(&Array2::from_shape_vec(x.dim(), p.to_vec()).unwrap(), &y, sigma).value
    });
    let mut ys = y.clone();
    let ny = numeric_grad(ys.as_slice_mut().unwrap(), |p| {
        mmd_value(&x, &Array2::from_shape_vec(y.dim(), p.to_vec()).unwrap(), sigma).value
    });
    vec![
        ("mmd x".into(), rel_err(v.grad_x.as_slice().unwrap(), &nx)),
        ("mmd y".into(), rel_err(v.grad_y.as_slice().unwrap(), &ny)),
    ]
}

/// Weighted total loss over every learnable tensor.
pub fn composite_checks(d: usize, hidden: Vec<usize>, m: usize, b: usize, activation: Activation, seed: u64) -> Vec<(String, f64)> {
    let state = composite_state(d, hidden, m, activation, seed);
    let (x, y, dom) = composite_batch(d, b, seed ^ 29);
    let out = trainer::total_loss(&state, &x, &y, &dom).unwrap();
    assert!(out.breakdown.mmd.is_some() && out.breakdown.amc > 0.0 && out.breakdown.recon > 0.0);
    let numeric = fd_tensors(
        &state,
        |s| s.params.slices_mut(),
        |s| trainer::total_loss(s, &x, &y, &dom).unwrap().breakdown.total,
    );
    out.grads
        .named()
        .iter()
        .zip(&numeric)
        .map(|((name, _, a), n)| (format!("total {name}"), rel_err(a, n)))
        .collect()
}

pub fn records(td: usize, asd: usize, adhd: usize) -> Vec<ingest::SubjectRecord> {
    use ingest::Label;
    let groups = [(Label::TD, td), (Label::ASD, asd), (Label::ADHD, adhd)];
    let mut out = Vec::new();
    for (label, count) in groups {
        for _ in 0..count {
            let n = out.len();
            out.push(ingest::SubjectRecord {
                subject_id: format!("s{n:04}"),
                label,
                site: "NYU".into(),
                domain: if label == Label::ADHD || (label == Label::TD && n % 2 == 1) {
                    Domain::Adhd200
                } else {
                    Domain::Abide1
                },
                path: format!("ts/s{n:04}.csv").into(),
            });
        }
    }
    out
}

/// Desk-scale model: one hidden layer of 64, embedding 16.
pub fn desk_config(seed: u64) -> ndd_osr::protocol::ExperimentConfig {
    ndd_osr::protocol::ExperimentConfig {
        model: ModelSpec {
            hidden_dims: vec![64],
            embedding_dim: 16,
            ..ModelSpec::default()
        },
        train: TrainConfig {
            seed,
            ..TrainConfig::default()
        },
        ..Default::default()
    }
}

/// 150 TD + 50 ASD + 50 ADHD, 16 regions, 200 timepoints.
pub fn desk_spec(separation: f64, seed: u64) -> ndd_osr::protocol::SyntheticSpec {
    ndd_osr::protocol::SyntheticSpec::standard(150, 50, 50, 16, 200, separation, seed)
}

pub fn synthetic_run(
    spec: &ndd_osr::protocol::SyntheticSpec,
    experiment: ndd_osr::protocol::Experiment,
    cfg: &ndd_osr::protocol::ExperimentConfig,
) -> ndd_osr::protocol::AggregateReport {
    use ndd_osr::protocol::*;
    let cohort = make_synthetic(spec).unwrap();
    let store = FeatureStore::from_series(&cohort.records, &cohort.series).unwrap();
    let plan = build_split_plan(&cohort.records, experiment, spec.seed).unwrap();
    run_experiment(&store, &plan, cfg, 1).unwrap().0
}
