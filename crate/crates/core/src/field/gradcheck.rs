//! Central finite-difference check of [`MlpParams::loss_and_grad`] in `f64`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{LossKind, MlpConfig, MlpParams};
use crate::error::Result;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// Parameter index with the largest error.
    pub worst_index: usize,
    /// Coordinates whose difference quotient straddled a ReLU or `|·|` kink
    /// even at the smallest step and were left out.
    pub skipped: usize,
}

/// ReLU on/off pattern of every hidden unit plus the sign of every residual.
fn kink_pattern(params: &MlpParams<f64>, x: &[f64], v: Option<&[f64]>, t: &[f64], batch: usize) -> Result<Vec<i8>> {
    let cache = params.forward_cached(x, v, batch)?;
    let n = cache.outputs.len();
    let mut pattern: Vec<i8> = cache.outputs[..n - 1].iter().flatten().map(|&a| (a > 0.0) as i8).collect();
    pattern.extend(cache.output().iter().zip(t).map(|(y, t)| (y - t).signum() as i8));
    Ok(pattern)
}

/// Compares analytic gradients with `(L(θ+h) − L(θ−h)) / 2h` on random
/// inputs, targets and biases. `coordinates = None` checks every parameter.
///
/// The relative error of one entry is `|g − fd| / max(|g|, |fd|, 1e-8)`.
/// When `θ ± h` lands on different sides of a kink the step is shrunk by
/// 10x, at most twice; coordinates that still straddle one are skipped.
pub fn gradient_check(config: &MlpConfig, loss: LossKind, batch: usize, coordinates: Option<usize>, h: f64, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = MlpParams::<f64>::init_as(config)?;
    for l in params.layers().to_vec() {
        for b in &mut params.values[l.bias_offset..l.bias_offset + l.fan_out] {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    let x: Vec<f64> = (0..batch * config.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v: Option<Vec<f64>> = config
        .view_dim
        .map(|vd| (0..batch * vd).map(|_| rng.random_range(-1.0..1.0)).collect());
    let t: Vec<f64> = (0..batch * config.output_dim).map(|_| rng.random_range(0.0..1.0)).collect();
    let (_, grads) = params.loss_and_grad(&x, v.as_deref(), &t, batch, loss)?;

    let p = params.num_params();
    let idx: Vec<usize> = match coordinates {
        Some(k) if k < p => sample(&mut rng, p, k).into_vec(),
        _ => (0..p).collect(),
    };
    let mut report = GradCheckReport {
        checked: idx.len(),
        max_relative_error: 0.0,
        worst_index: 0,
        skipped: 0,
    };
    for i in idx {
        let w = params.values[i];
        let mut fd = None;
        for step in [h, h / 10.0, h / 100.0] {
            params.values[i] = w + step;
            let (lp, _) = params.loss_and_grad(&x, v.as_deref(), &t, batch, loss)?;
            let pp = kink_pattern(&params, &x, v.as_deref(), &t, batch)?;
            params.values[i] = w - step;
            let (lm, _) = params.loss_and_grad(&x, v.as_deref(), &t, batch, loss)?;
            let pm = kink_pattern(&params, &x, v.as_deref(), &t, batch)?;
            params.values[i] = w;
            if pp == pm {
                fd = Some((lp - lm) / (2.0 * step));
                break;
            }
        }
        let Some(fd) = fd else {
            report.skipped += 1;
            report.checked -= 1;
            continue;
        };
        let g = grads[i];
        let err = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-8);
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_index = i;
        }
    }
    Ok(report)
}
