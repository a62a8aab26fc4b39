//! Fully connected autoencoder with hand-derived backpropagation.
//!
//! Layers compute `y = x·W + b` with `W` stored fan_in × fan_out. Hidden
//! layers apply the configured activation; the embedding layer and the
//! reconstruction layer are linear. The decoder mirrors the encoder widths
//! with its own weights.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    ReLU,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::ReLU => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative from the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl AeConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![1024],
            embedding_dim: 128,
            activation: Activation::ReLU,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embedding_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!(
                "autoencoder dimensions must be positive (input {}, hidden {:?}, embedding {})",
                self.input_dim, self.hidden_dims, self.embedding_dim
            )));
        }
        Ok(())
    }

    fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden_dims);
        w.push(self.embedding_dim);
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeParams {
    pub encoder: Vec<Dense>,
    pub decoder: Vec<Dense>,
    pub activation: Activation,
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(cfg: &AeConfig) -> Result<AeParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let enc = cfg.encoder_widths();
    let dec: Vec<usize> = enc.iter().rev().copied().collect();
    let mut build = |widths: &[usize]| -> Vec<Dense> {
        widths
            .windows(2)
            .map(|w| {
                let s = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((w[0], w[1]), || rng.random_range(-s..s));
                Dense {
                    weight,
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect()
    };
    let encoder = build(&enc);
    let decoder = build(&dec);
    Ok(AeParams {
        encoder,
        decoder,
        activation: cfg.activation,
    })
}

impl AeParams {
    pub fn input_dim(&self) -> usize {
        self.encoder[0].weight.nrows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.encoder.last().map(|l| l.weight.ncols()).unwrap_or(0)
    }

    /// Parameters with the same shapes, all zero.
    pub fn zeros_like(&self) -> Self {
        let z = |ls: &[Dense]| ls.iter().map(|l| Dense::zeros(l.weight.nrows(), l.weight.ncols())).collect();
        Self {
            encoder: z(&self.encoder),
            decoder: z(&self.decoder),
            activation: self.activation,
        }
    }

    fn layers(&self) -> impl Iterator<Item = (String, &Dense)> {
        let enc = self.encoder.iter().enumerate().map(|(i, l)| (format!("encoder.{i}"), l));
        let dec = self.decoder.iter().enumerate().map(|(i, l)| (format!("decoder.{i}"), l));
        enc.chain(dec)
    }

    /// Named flat views of every tensor in declared order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (name, l) in self.layers() {
            out.push((
                format!("{name}.weight"),
                l.weight.shape().to_vec(),
                l.weight.as_slice().expect("standard layout"),
            ));
            out.push((
                format!("{name}.bias"),
                l.bias.shape().to_vec(),
                l.bias.as_slice().expect("standard layout"),
            ));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

/// Cached forward pass for one batch.
#[derive(Debug, Clone)]
pub struct Activations {
    /// Layer inputs, encoder then decoder; `inputs[0]` is the batch.
    pub inputs: Vec<Array2<f64>>,
    /// Layer pre-activations in the same order.
    pub pre: Vec<Array2<f64>>,
    pub embedding: Array2<f64>,
    pub reconstruction: Array2<f64>,
}

fn hidden(act: Activation, idx: usize, n_layers: usize) -> Option<Activation> {
    (idx + 1 < n_layers).then_some(act)
}

pub fn forward(params: &AeParams, batch: &Array2<f64>) -> Result<Activations> {
    if batch.ncols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "batch has {} columns, autoencoder expects {}",
            batch.ncols(),
            params.input_dim()
        )));
    }
    if batch.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("autoencoder input".into()));
    }
    let mut inputs = Vec::with_capacity(params.encoder.len() + params.decoder.len());
    let mut pre = Vec::with_capacity(inputs.capacity());
    let mut x = batch.clone();
    let mut embedding = None;
    for (stack_idx, stack) in [&params.encoder, &params.decoder].into_iter().enumerate() {
        for (i, layer) in stack.iter().enumerate() {
            let z = layer.forward(&x);
            let a = match hidden(params.activation, i, stack.len()) {
                Some(f) => z.mapv(|v| f.apply(v)),
                None => z.clone(),
            };
            inputs.push(std::mem::replace(&mut x, a));
            pre.push(z);
        }
        if stack_idx == 0 {
            embedding = Some(x.clone());
        }
    }
    Ok(Activations {
        inputs,
        pre,
        embedding: embedding.expect("encoder has at least one layer"),
        reconstruction: x,
    })
}

/// Embedding only; skips the decoder.
pub fn encode(params: &AeParams, batch: &Array2<f64>) -> Result<Array2<f64>> {
    if batch.ncols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "batch has {} columns, autoencoder expects {}",
            batch.ncols(),
            params.input_dim()
        )));
    }
    let mut x = batch.clone();
    let n = params.encoder.len();
    for (i, layer) in params.encoder.iter().enumerate() {
        let z = layer.forward(&x);
        x = match hidden(params.activation, i, n) {
            Some(f) => z.mapv(|v| f.apply(v)),
            None => z,
        };
    }
    Ok(x)
}

/// Mean squared error over all entries, with its gradient w.r.t. the
/// reconstruction.
pub fn reconstruction_loss(act: &Activations, batch: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
    if act.reconstruction.dim() != batch.dim() {
        return Err(Error::Shape(format!(
            "reconstruction {:?} vs batch {:?}",
            act.reconstruction.dim(),
            batch.dim()
        )));
    }
    let n = batch.len() as f64;
    let resid = &act.reconstruction - batch;
    let loss = resid.iter().map(|r| r * r).sum::<f64>() / n;
    Ok((loss, resid * (2.0 / n)))
}

#[derive(Debug, Clone)]
pub struct AeGradients {
    pub params: AeParams,
    pub input: Array2<f64>,
}

/// Backpropagates upstream gradients on the embedding and reconstruction.
pub fn backward(
    params: &AeParams,
    act: &Activations,
    grad_embedding: &Array2<f64>,
    grad_reconstruction: &Array2<f64>,
) -> Result<AeGradients> {
    if grad_embedding.dim() != act.embedding.dim() || grad_reconstruction.dim() != act.reconstruction.dim() {
        return Err(Error::Shape(format!(
            "upstream gradients {:?}/{:?} vs activations {:?}/{:?}",
            grad_embedding.dim(),
            grad_reconstruction.dim(),
            act.embedding.dim(),
            act.reconstruction.dim()
        )));
    }
    let mut grads = params.zeros_like();
    let n_enc = params.encoder.len();
    let mut delta = grad_reconstruction.clone();

    // Walk decoder then encoder in reverse; cache index matches forward order.
    let stacks = [
        (&params.decoder, &mut grads.decoder, n_enc),
        (&params.encoder, &mut grads.encoder, 0),
    ];
    for (stack_no, (layers, out, offset)) in stacks.into_iter().enumerate() {
        if stack_no == 1 {
            delta += grad_embedding;
        }
        for i in (0..layers.len()).rev() {
            let idx = offset + i;
            if let Some(f) = hidden(params.activation, i, layers.len()) {
                let a = if idx + 1 < act.inputs.len() {
                    &act.inputs[idx + 1]
                } else {
                    &act.reconstruction
                };
                ndarray::Zip::from(&mut delta)
                    .and(&act.pre[idx])
                    .and(a)
                    .for_each(|d, &z, &y| *d *= f.derivative(z, y));
            }
            out[i].weight = act.inputs[idx].t().dot(&delta);
            out[i].bias = delta.sum_axis(Axis(0));
            delta = delta.dot(&layers[i].weight.t());
        }
    }
    Ok(AeGradients {
        params: grads,
        input: delta,
    })
}
