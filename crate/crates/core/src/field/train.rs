//! Adam training loop over pre-embedded samples.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LossKind, MlpParams, Scalar};
use crate::error::{Error, Result};

/// Rows per gradient shard. Fixed so the reduction order, and therefore the
/// result, does not depend on the worker count.
const SHARD_ROWS: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Overrides `epochs` with an exact number of optimizer steps.
    pub steps: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub shuffle_seed: u64,
    pub loss: LossKind,
    /// Learning rate at the last step relative to the first; the rate decays
    /// exponentially in between. 1 keeps it constant.
    pub final_lr_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 4096,
            learning_rate: 5e-4,
            epochs: 1,
            steps: None,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            shuffle_seed: 0,
            loss: LossKind::L1,
            final_lr_ratio: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::invalid("Adam parameters out of range"));
        }
        if !(self.final_lr_ratio > 0.0 && self.final_lr_ratio <= 1.0) {
            return Err(Error::invalid("final_lr_ratio must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Learning rate used at `step` of a run of `total_steps`.
    pub fn learning_rate_at(&self, step: usize, total_steps: usize) -> f64 {
        if self.final_lr_ratio == 1.0 || total_steps < 2 {
            return self.learning_rate;
        }
        let t = step as f64 / (total_steps - 1) as f64;
        self.learning_rate * self.final_lr_ratio.powf(t)
    }
}

/// Network inputs and targets, one row per sample.
#[derive(Clone, Debug, Default)]
pub struct TrainingData {
    pub inputs: Vec<f32>,
    pub input_dim: usize,
    pub views: Option<Vec<f32>>,
    pub view_dim: usize,
    pub targets: Vec<f32>,
    pub output_dim: usize,
}

impl TrainingData {
    pub fn new(inputs: Vec<f32>, input_dim: usize, targets: Vec<f32>, output_dim: usize) -> Result<TrainingData> {
        let data = TrainingData {
            inputs,
            input_dim,
            views: None,
            view_dim: 0,
            targets,
            output_dim,
        };
        data.check()?;
        Ok(data)
    }

    pub fn with_views(mut self, views: Vec<f32>, view_dim: usize) -> Result<TrainingData> {
        self.views = Some(views);
        self.view_dim = view_dim;
        self.check()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        if self.input_dim == 0 {
            0
        } else {
            self.inputs.len() / self.input_dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self) -> Result<()> {
        let n = self.len();
        if self.input_dim == 0 || self.inputs.len() != n * self.input_dim {
            return Err(Error::shape("input buffer is not a whole number of rows"));
        }
        if self.targets.len() != n * self.output_dim {
            return Err(Error::shape(format!("{} targets for {n} samples", self.targets.len())));
        }
        if let Some(v) = &self.views {
            if v.len() != n * self.view_dim {
                return Err(Error::shape(format!("{} view values for {n} samples", v.len())));
            }
        }
        Ok(())
    }

    fn gather(&self, rows: &[usize]) -> (Vec<f32>, Option<Vec<f32>>, Vec<f32>) {
        let pick = |buf: &[f32], w: usize| {
            let mut out = Vec::with_capacity(rows.len() * w);
            for &r in rows {
                out.extend_from_slice(&buf[r * w..(r + 1) * w]);
            }
            out
        };
        (
            pick(&self.inputs, self.input_dim),
            self.views.as_ref().map(|v| pick(v, self.view_dim)),
            pick(&self.targets, self.output_dim),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: MlpParams<f32>,
    pub history: Vec<EpochStats>,
    pub step_losses: Vec<f64>,
}

/// One bias-corrected Adam update at the base learning rate.
pub fn adam_step<T: Scalar>(params: &mut MlpParams<T>, grads: &[T], tcfg: &TrainConfig) {
    adam_update(params, grads, tcfg, tcfg.learning_rate);
}

fn adam_update<T: Scalar>(params: &mut MlpParams<T>, grads: &[T], tcfg: &TrainConfig, lr: f64) {
    let a = &mut params.adam;
    a.step += 1;
    let t = a.step as i32;
    let (b1, b2) = (tcfg.beta1, tcfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = T::from_f64(lr);
    let (b1t, b2t) = (T::from_f64(b1), T::from_f64(b2));
    let (ob1, ob2) = (T::from_f64(1.0 - b1), T::from_f64(1.0 - b2));
    let (c1, c2) = (T::from_f64(c1), T::from_f64(c2));
    let eps = T::from_f64(tcfg.eps);
    for (((w, m), v), &g) in params.values.iter_mut().zip(&mut a.m).zip(&mut a.v).zip(grads) {
        *m = b1t * *m + ob1 * g;
        *v = b2t * *v + ob2 * g * g;
        let update = lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        *w = *w - update;
    }
}

/// Batch loss and gradient, sharded over fixed-size row blocks and summed
/// in shard order.
pub(crate) fn batch_loss_and_grad(params: &MlpParams<f32>, data: &TrainingData, rows: &[usize], loss: LossKind) -> Result<(f64, Vec<f32>)> {
    let shards: Vec<Result<(f64, Vec<f32>)>> = rows
        .par_chunks(SHARD_ROWS)
        .map(|chunk| {
            let (x, v, t) = data.gather(chunk);
            let (l, mut g) = params.loss_and_grad(&x, v.as_deref(), &t, chunk.len(), loss)?;
            let w = chunk.len() as f32 / rows.len() as f32;
            if w != 1.0 {
                g.iter_mut().for_each(|x| *x *= w);
            }
            Ok((l * chunk.len() as f64 / rows.len() as f64, g))
        })
        .collect();
    let mut total = 0.0;
    let mut grads: Option<Vec<f32>> = None;
    for s in shards {
        let (l, g) = s?;
        total += l;
        match &mut grads {
            None => grads = Some(g),
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
        }
    }
    Ok((total, grads.expect("non-empty batch")))
}

/// Trains with Adam. The dataset is reshuffled at every epoch; the last
/// partial batch of an epoch is kept. `on_step` sees `(step, loss)`.
///
/// A non-finite loss or parameter aborts with [`Error::Diverged`] carrying
/// the parameters from before the failing step.
pub fn train(mut params: MlpParams<f32>, data: &TrainingData, tcfg: &TrainConfig, mut on_step: impl FnMut(usize, f64)) -> Result<TrainOutcome> {
    tcfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if data.input_dim != params.config.input_dim
        || data.output_dim != params.config.output_dim
        || data.views.is_some() != params.config.view_dim.is_some()
    {
        return Err(Error::shape("training data does not match the network shape"));
    }
    let n = data.len();
    let batch = tcfg.batch_size.min(n);
    let per_epoch = n.div_ceil(batch);
    let total_steps = tcfg.steps.unwrap_or(tcfg.epochs * per_epoch);
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.shuffle_seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::new();
    let mut step_losses = Vec::with_capacity(total_steps);
    let (mut epoch, mut epoch_sum, mut epoch_steps) = (0, 0.0, 0);
    for step in 0..total_steps {
        let k = step % per_epoch;
        if k == 0 {
            order.shuffle(&mut rng);
        }
        let rows = &order[k * batch..((k + 1) * batch).min(n)];
        let diverged = |params: &MlpParams<f32>| Error::Diverged {
            step,
            last_good: Box::new(params.clone()),
        };
        let (loss, grads) = match batch_loss_and_grad(&params, data, rows, tcfg.loss) {
            Ok(r) => r,
            Err(Error::NonFinite(_)) => return Err(diverged(&params)),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(diverged(&params));
        }
        let before = params.clone();
        adam_update(&mut params, &grads, tcfg, tcfg.learning_rate_at(step, total_steps));
        if params.values.iter().any(|w| !w.is_finite()) {
            return Err(diverged(&before));
        }
        step_losses.push(loss);
        on_step(step, loss);
        epoch_sum += loss;
        epoch_steps += 1;
        if k + 1 == per_epoch || step + 1 == total_steps {
            history.push(EpochStats {
                epoch,
                steps: epoch_steps,
                mean_loss: epoch_sum / epoch_steps as f64,
            });
            epoch += 1;
            epoch_sum = 0.0;
            epoch_steps = 0;
        }
    }
    Ok(TrainOutcome {
        params,
        history,
        step_losses,
    })
}
