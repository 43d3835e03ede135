//! Coordinate MLP `f_θ` with the two texture-field layouts:
//!
//! * plain: ReLU trunk, embedding re-concatenated at `skip_at`, linear or
//!   sigmoid output;
//! * view-dependent: the same trunk, then the view encoding is concatenated
//!   to the trunk features and passed through one ReLU head layer before the
//!   output.
//!
//! Parameters live in one flat buffer (per layer: weights `fan_in x
//! fan_out` row-major, then biases) so optimizers and finite-difference
//! checks can address any coordinate directly.

mod gradcheck;
mod model;
mod scalar;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gradcheck::{gradient_check, GradCheckReport};
pub use model::{FieldModel, ModelMeta, TensorInfo};
pub use scalar::Scalar;
pub use train::{adam_step, train, EpochStats, TrainConfig, TrainOutcome, TrainingData};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum InitScheme {
    /// Weights `N(0, 2 / fan_in)`, zero biases.
    #[default]
    He,
    /// Weights `N(0, 1 / fan_in)`, biases `N(0, beta²)`: the standard
    /// parameterization of the NTK-parameterized network.
    Ntk { beta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub num_hidden_layers: usize,
    /// Hidden layer whose input is `[previous, embedding]`.
    #[serde(default)]
    pub skip_at: Option<usize>,
    /// Width of the view-direction encoding; enables the view-dependent head.
    #[serde(default)]
    pub view_dim: Option<usize>,
    /// Head layer width; defaults to half the trunk width.
    #[serde(default)]
    pub head_width: Option<usize>,
    pub output_dim: usize,
    pub output_sigmoid: bool,
    pub init_seed: u64,
    #[serde(default)]
    pub init: InitScheme,
}

impl MlpConfig {
    /// Default texture network: 4 x 256 ReLU trunk, skip at layer 2, RGB
    /// sigmoid output.
    pub fn texture(input_dim: usize, init_seed: u64) -> MlpConfig {
        MlpConfig {
            input_dim,
            hidden_width: 256,
            num_hidden_layers: 4,
            skip_at: Some(2),
            view_dim: None,
            head_width: None,
            output_dim: 3,
            output_sigmoid: true,
            init_seed,
            init: InitScheme::He,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_width == 0 || self.output_dim == 0 {
            return Err(Error::invalid("MLP dimensions must be positive"));
        }
        if let Some(s) = self.skip_at {
            if s == 0 || s >= self.num_hidden_layers {
                return Err(Error::invalid(format!(
                    "skip_at = {s} must lie in 1..{}",
                    self.num_hidden_layers
                )));
            }
        }
        if self.view_dim == Some(0) {
            return Err(Error::invalid("view_dim must be positive when present"));
        }
        if self.view_dim.is_some() && self.num_hidden_layers == 0 {
            return Err(Error::invalid("view-dependent head needs a trunk"));
        }
        Ok(())
    }

    fn plan(&self) -> Vec<LayerShape> {
        let mut layers = Vec::new();
        let mut offset = 0;
        let mut push = |fan_in: usize, fan_out: usize, prev: usize, extra: Extra, act: Activation| {
            layers.push(LayerShape {
                fan_in,
                fan_out,
                prev_width: prev,
                extra,
                activation: act,
                weight_offset: offset,
                bias_offset: offset + fan_in * fan_out,
            });
            offset += fan_in * fan_out + fan_out;
        };
        let w = self.hidden_width;
        let mut width = 0;
        for k in 0..self.num_hidden_layers {
            if k == 0 {
                push(self.input_dim, w, 0, Extra::Embedding, Activation::Relu);
            } else if self.skip_at == Some(k) {
                push(w + self.input_dim, w, w, Extra::Embedding, Activation::Relu);
            } else {
                push(w, w, w, Extra::None, Activation::Relu);
            }
            width = w;
        }
        if let Some(vd) = self.view_dim {
            let hw = self.head_width.unwrap_or((w / 2).max(1));
            push(width + vd, hw, width, Extra::View, Activation::Relu);
            width = hw;
        }
        let out_act = if self.output_sigmoid {
            Activation::Sigmoid
        } else {
            Activation::Identity
        };
        if self.num_hidden_layers == 0 {
            push(self.input_dim, self.output_dim, 0, Extra::Embedding, out_act);
        } else {
            push(width, self.output_dim, width, Extra::None, out_act);
        }
        layers
    }

    pub fn num_params(&self) -> usize {
        self.plan().iter().map(|l| l.fan_in * l.fan_out + l.fan_out).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extra {
    None,
    Embedding,
    View,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

/// One dense layer. Its input is `[previous output (prev_width), extra]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    pub prev_width: usize,
    pub extra: Extra,
    pub activation: Activation,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T: Scalar = f32> {
    pub config: MlpConfig,
    layers: Vec<LayerShape>,
    pub values: Vec<T>,
    pub adam: AdamState<T>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean absolute error over samples and channels.
    #[default]
    L1,
    /// Mean squared error over samples and channels.
    L2,
}

/// Activations kept for the backward pass.
pub struct ForwardCache<T> {
    batch: usize,
    /// Concatenated layer inputs where a layer has an extra part.
    inputs: Vec<Option<Vec<T>>>,
    /// Post-activation outputs per layer.
    outputs: Vec<Vec<T>>,
    embedding: Vec<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn output(&self) -> &[T] {
        self.outputs.last().expect("at least one layer")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl MlpParams<f32> {
    /// Seeded initialization; zero optimizer state.
    pub fn init(config: &MlpConfig) -> Result<MlpParams<f32>> {
        MlpParams::<f32>::init_as(config)
    }
}

impl<T: Scalar> MlpParams<T> {
    pub fn init_as(config: &MlpConfig) -> Result<MlpParams<T>> {
        config.validate()?;
        let layers = config.plan();
        let total = layers.last().map_or(0, |l| l.bias_offset + l.fan_out);
        let mut values = vec![T::ZERO; total];
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        for l in &layers {
            let (gain, bias_std) = match config.init {
                InitScheme::He => (2.0, 0.0),
                InitScheme::Ntk { beta } => (1.0, beta),
            };
            let normal = Normal::new(0.0, (gain / l.fan_in as f64).sqrt()).expect("finite std");
            for w in &mut values[l.weight_offset..l.bias_offset] {
                *w = T::from_f64(normal.sample(&mut rng));
            }
            if bias_std > 0.0 {
                let bn = Normal::new(0.0, bias_std).expect("finite std");
                for b in &mut values[l.bias_offset..l.bias_offset + l.fan_out] {
                    *b = T::from_f64(bn.sample(&mut rng));
                }
            }
        }
        Ok(MlpParams {
            config: config.clone(),
            adam: AdamState {
                m: vec![T::ZERO; total],
                v: vec![T::ZERO; total],
                step: 0,
            },
            layers,
            values,
        })
    }

    /// Rebuilds parameters from a flat value buffer.
    pub fn from_values(config: &MlpConfig, values: Vec<T>) -> Result<MlpParams<T>> {
        config.validate()?;
        let layers = config.plan();
        let total = config.num_params();
        if values.len() != total {
            return Err(Error::shape(format!("expected {total} parameters, got {}", values.len())));
        }
        Ok(MlpParams {
            config: config.clone(),
            adam: AdamState {
                m: vec![T::ZERO; total],
                v: vec![T::ZERO; total],
                step: 0,
            },
            layers,
            values,
        })
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.values.len()
    }

    pub fn weights(&self, layer: usize) -> &[T] {
        let l = &self.layers[layer];
        &self.values[l.weight_offset..l.bias_offset]
    }

    pub fn bias(&self, layer: usize) -> &[T] {
        let l = &self.layers[layer];
        &self.values[l.bias_offset..l.bias_offset + l.fan_out]
    }

    /// Same network in another float type; optimizer state is converted too.
    pub fn cast<U: Scalar>(&self) -> MlpParams<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64(x.to_f64())).collect::<Vec<U>>();
        MlpParams {
            config: self.config.clone(),
            layers: self.layers.clone(),
            values: conv(&self.values),
            adam: AdamState {
                m: conv(&self.adam.m),
                v: conv(&self.adam.v),
                step: self.adam.step,
            },
        }
    }

    fn check_inputs(&self, embedding: &[T], view: Option<&[T]>, batch: usize) -> Result<()> {
        let c = &self.config;
        if batch == 0 || embedding.len() != batch * c.input_dim {
            return Err(Error::shape(format!(
                "embedding buffer has {} values, expected {batch} x {}",
                embedding.len(),
                c.input_dim
            )));
        }
        match (c.view_dim, view) {
            (None, None) => Ok(()),
            (Some(vd), Some(v)) if v.len() == batch * vd => Ok(()),
            (Some(vd), Some(v)) => Err(Error::shape(format!(
                "view buffer has {} values, expected {batch} x {vd}",
                v.len()
            ))),
            (Some(_), None) => Err(Error::shape("view-dependent network needs a view input")),
            (None, Some(_)) => Err(Error::shape("network does not take a view input")),
        }
    }

    /// Batched forward pass over `batch` rows.
    pub fn forward(&self, embedding: &[T], view: Option<&[T]>, batch: usize) -> Result<Vec<T>> {
        let mut cache = self.forward_cached(embedding, view, batch)?;
        Ok(cache.outputs.pop().expect("at least one layer"))
    }

    pub fn forward_cached(&self, embedding: &[T], view: Option<&[T]>, batch: usize) -> Result<ForwardCache<T>> {
        self.check_inputs(embedding, view, batch)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let prev = outputs.last().map(Vec::as_slice);
            let concat = match (l.prev_width, l.extra) {
                (0, Extra::Embedding) => None,
                (_, Extra::None) => None,
                (pw, extra) => {
                    let (src, w) = match extra {
                        Extra::Embedding => (embedding, self.config.input_dim),
                        Extra::View => (view.expect("checked"), self.config.view_dim.expect("checked")),
                        Extra::None => unreachable!(),
                    };
                    let prev = prev.expect("layer has a predecessor");
                    let mut buf = Vec::with_capacity(batch * l.fan_in);
                    for r in 0..batch {
                        buf.extend_from_slice(&prev[r * pw..(r + 1) * pw]);
                        buf.extend_from_slice(&src[r * w..(r + 1) * w]);
                    }
                    Some(buf)
                }
            };
            let x: &[T] = match (&concat, l.prev_width) {
                (Some(buf), _) => buf,
                (None, 0) => embedding,
                (None, _) => prev.expect("layer has a predecessor"),
            };
            let mut z = Vec::with_capacity(batch * l.fan_out);
            let bias = &self.values[l.bias_offset..l.bias_offset + l.fan_out];
            for _ in 0..batch {
                z.extend_from_slice(bias);
            }
            T::gemm(batch, l.fan_in, l.fan_out, T::ONE, x, false, &self.values[l.weight_offset..l.bias_offset], false, T::ONE, &mut z);
            match l.activation {
                Activation::Relu => z.iter_mut().for_each(|v| {
                    if !(*v > T::ZERO) {
                        *v = T::ZERO
                    }
                }),
                Activation::Sigmoid => z.iter_mut().for_each(|v| *v = T::ONE / (T::ONE + (-*v).exp())),
                Activation::Identity => {}
            }
            inputs.push(concat);
            outputs.push(z);
        }
        Ok(ForwardCache {
            batch,
            inputs,
            outputs,
            embedding: embedding.to_vec(),
        })
    }

    /// Gradient of `Σ d_out ⊙ output` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache<T>, d_out: &[T]) -> Vec<T> {
        let batch = cache.batch;
        let mut grads = vec![T::ZERO; self.values.len()];
        let last = self.layers.len() - 1;
        let mut dz: Vec<T> = d_out.to_vec();
        if self.layers[last].activation == Activation::Sigmoid {
            for (g, y) in dz.iter_mut().zip(&cache.outputs[last]) {
                *g = *g * *y * (T::ONE - *y);
            }
        }
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let x: &[T] = match (&cache.inputs[li], l.prev_width) {
                (Some(buf), _) => buf,
                (None, 0) => &cache.embedding,
                (None, _) => &cache.outputs[li - 1],
            };
            let (w_grad, rest) = grads[l.weight_offset..].split_at_mut(l.fan_in * l.fan_out);
            T::gemm(l.fan_in, batch, l.fan_out, T::ONE, x, true, &dz, false, T::ZERO, w_grad);
            let b_grad = &mut rest[..l.fan_out];
            for row in dz.chunks_exact(l.fan_out) {
                for (g, v) in b_grad.iter_mut().zip(row) {
                    *g += *v;
                }
            }
            if li == 0 {
                break;
            }
            let mut dx = vec![T::ZERO; batch * l.fan_in];
            T::gemm(batch, l.fan_out, l.fan_in, T::ONE, &dz, false, &self.values[l.weight_offset..l.bias_offset], true, T::ZERO, &mut dx);
            let pw = l.prev_width;
            let mut dprev = if pw == l.fan_in {
                dx
            } else {
                let mut v = Vec::with_capacity(batch * pw);
                for r in 0..batch {
                    v.extend_from_slice(&dx[r * l.fan_in..r * l.fan_in + pw]);
                }
                v
            };
            // all earlier layers are ReLU
            for (g, y) in dprev.iter_mut().zip(&cache.outputs[li - 1]) {
                if !(*y > T::ZERO) {
                    *g = T::ZERO;
                }
            }
            dz = dprev;
        }
        grads
    }

    /// Loss over a batch and its parameter gradient.
    ///
    /// Both losses are means over samples and channels; the L1 subgradient
    /// at zero residual is zero.
    pub fn loss_and_grad(&self, embedding: &[T], view: Option<&[T]>, targets: &[T], batch: usize, loss: LossKind) -> Result<(f64, Vec<T>)> {
        let cache = self.forward_cached(embedding, view, batch)?;
        let out = cache.output();
        if targets.len() != out.len() {
            return Err(Error::shape(format!(
                "targets have {} values, outputs {}",
                targets.len(),
                out.len()
            )));
        }
        if let Some(bad) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("network output {bad}")));
        }
        let scale = 1.0 / out.len() as f64;
        let mut total = 0.0;
        let d_out: Vec<T> = out
            .iter()
            .zip(targets)
            .map(|(&y, &t)| {
                let r = y - t;
                match loss {
                    LossKind::L1 => {
                        total += r.abs().to_f64();
                        let s = if r > T::ZERO {
                            1.0
                        } else if r < T::ZERO {
                            -1.0
                        } else {
                            0.0
                        };
                        T::from_f64(s * scale)
                    }
                    LossKind::L2 => {
                        total += (r * r).to_f64();
                        r * T::from_f64(2.0 * scale)
                    }
                }
            })
            .collect();
        let grads = self.backward(&cache, &d_out);
        Ok((total * scale, grads))
    }
}
