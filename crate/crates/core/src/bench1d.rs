//! Signal reconstruction on a closed curve from sparse samples, comparing
//! extrinsic, random-Fourier and intrinsic embeddings.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{ExtrinsicEmbedding, IntrinsicEmbedding, IntrinsicSpec, RffEmbedding, RffSpec};
use crate::error::{Error, Result};
use crate::field::{train, LossKind, MlpConfig, MlpParams, TrainConfig, TrainingData};
use crate::mesh::shapes::circle;
use crate::mesh::{TriMesh, Vec3};
use crate::ntk::{embed_vertices, ntk_matrix, KernelMatrix, NtkConfig};
use crate::spectrum::EigenBasis;

/// Neck half-width of the pinched curve relative to its lobe height.
const PINCH: f64 = 0.03;
const PINCH_HEIGHT: f64 = 0.6;
/// Samples of the dense polyline that gets resampled by arc length.
const FINE: usize = 65536;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvePreset {
    /// Regular n-gon of perimeter 2π.
    Circle,
    /// Peanut `(cos t, 0.6 sin t (0.03 + 0.97 cos² t))`: two lobes joined by
    /// a neck whose sides pass within 0.036 of each other.
    Pinched,
}

/// Closed polyline with its arc-length parameter at each vertex.
#[derive(Debug)]
pub struct Curve1D {
    pub mesh: TriMesh,
    /// Cumulative arc length at each vertex, starting at 0.
    pub arclength: Vec<f64>,
    pub length: f64,
}

fn pinched_point(t: f64) -> Vec3 {
    let c = t.cos();
    Vec3::new(c, PINCH_HEIGHT * t.sin() * (PINCH + (1.0 - PINCH) * c * c), 0.0)
}

pub fn make_curve(preset: CurvePreset, n: usize) -> Result<Curve1D> {
    if n < 3 {
        return Err(Error::invalid("a closed curve needs at least 3 vertices"));
    }
    let mesh = match preset {
        CurvePreset::Circle => circle(n, TAU),
        CurvePreset::Pinched => {
            let fine: Vec<Vec3> = (0..=FINE).map(|i| pinched_point(TAU * i as f64 / FINE as f64)).collect();
            let mut cum = vec![0.0; FINE + 1];
            for i in 1..=FINE {
                cum[i] = cum[i - 1] + (fine[i] - fine[i - 1]).norm();
            }
            let total = cum[FINE];
            let mut verts = Vec::with_capacity(n);
            let mut j = 0;
            for k in 0..n {
                let s = total * k as f64 / n as f64;
                while cum[j + 1] < s {
                    j += 1;
                }
                let f = (s - cum[j]) / (cum[j + 1] - cum[j]);
                verts.push(fine[j] * (1.0 - f) + fine[j + 1] * f);
            }
            TriMesh::new_loop(verts)?
        }
    };
    let v = mesh.vertices();
    let mut arclength = vec![0.0; v.len()];
    for i in 1..v.len() {
        arclength[i] = arclength[i - 1] + (v[i] - v[i - 1]).norm();
    }
    let length = arclength[v.len() - 1] + (v[0] - v[v.len() - 1]).norm();
    Ok(Curve1D { mesh, arclength, length })
}

impl Curve1D {
    pub fn n(&self) -> usize {
        self.arclength.len()
    }

    /// Shorter way around the curve between two vertices.
    pub fn arc_gap(&self, i: usize, j: usize) -> f64 {
        let d = (self.arclength[i] - self.arclength[j]).abs();
        d.min(self.length - d)
    }

    /// Smallest Euclidean distance between vertices whose arc gap exceeds
    /// `min_gap`.
    pub fn min_far_distance(&self, min_gap: f64) -> f64 {
        let v = self.mesh.vertices();
        let mut best = f64::INFINITY;
        for i in 0..self.n() {
            for j in i + 1..self.n() {
                if self.arc_gap(i, j) > min_gap {
                    best = best.min((v[i] - v[j]).norm());
                }
            }
        }
        best
    }

    /// Vertices within `radius` (Euclidean) of some vertex that is more than
    /// a quarter of the curve away along it.
    pub fn near_touch(&self, radius: f64) -> Vec<usize> {
        let v = self.mesh.vertices();
        (0..self.n())
            .filter(|&i| (0..self.n()).any(|j| self.arc_gap(i, j) > 0.25 * self.length && (v[i] - v[j]).norm() < radius))
            .collect()
    }
}

/// `offset + Σ amplitude · sin(2π · frequency · s / L)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    /// `(frequency, amplitude)` pairs.
    pub terms: Vec<(f64, f64)>,
    #[serde(default)]
    pub offset: f64,
}

impl Default for Signal {
    fn default() -> Self {
        Signal {
            terms: vec![(3.0, 1.0), (7.0, 0.5)],
            offset: 0.0,
        }
    }
}

impl Signal {
    pub fn constant(value: f64) -> Signal {
        Signal {
            terms: Vec::new(),
            offset: value,
        }
    }

    pub fn eval(&self, s: f64, length: f64) -> f64 {
        self.offset + self.terms.iter().map(|(f, a)| a * (TAU * f * s / length).sin()).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BenchEmbedding {
    Extrinsic,
    Rff { d: usize, sigma: f64, seed: u64 },
    /// First `d` eigenfunctions of the polyline Laplacian, unit scales.
    Intrinsic { d: usize },
}

impl BenchEmbedding {
    pub fn name(&self) -> String {
        match self {
            BenchEmbedding::Extrinsic => "extrinsic".into(),
            BenchEmbedding::Rff { d, sigma, .. } => format!("rff-d{d}-sigma{sigma}"),
            BenchEmbedding::Intrinsic { d } => format!("intrinsic-d{d}"),
        }
    }

    /// The four embeddings compared in the benchmark.
    pub fn standard_set() -> Vec<BenchEmbedding> {
        vec![
            BenchEmbedding::Extrinsic,
            BenchEmbedding::Rff { d: 8, sigma: 0.5, seed: 0 },
            BenchEmbedding::Intrinsic { d: 2 },
            BenchEmbedding::Intrinsic { d: 8 },
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub preset: CurvePreset,
    pub n: usize,
    pub train_count: usize,
    pub signal: Signal,
    pub embeddings: Vec<BenchEmbedding>,
    pub hidden_width: usize,
    pub num_hidden_layers: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub init_seed: u64,
    pub basis_seed: u64,
    /// Near-touch radius as a fraction of the curve length.
    pub near_touch_fraction: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            preset: CurvePreset::Pinched,
            n: 256,
            train_count: 32,
            signal: Signal::default(),
            embeddings: BenchEmbedding::standard_set(),
            hidden_width: 1024,
            num_hidden_layers: 3,
            steps: 1000,
            learning_rate: 1e-4,
            init_seed: 0,
            basis_seed: 0,
            near_touch_fraction: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResult {
    pub name: String,
    pub train_mse: f64,
    pub eval_mse: f64,
    /// Largest `|prediction − target|` over the near-touch vertices.
    pub near_touch_max_error: f64,
    pub predictions: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub arclength: Vec<f64>,
    pub length: f64,
    pub target: Vec<f64>,
    pub train_vertices: Vec<usize>,
    pub near_touch: Vec<usize>,
    pub results: Vec<EmbeddingResult>,
}

/// Per-vertex embedding rows for the curve.
fn embed_curve(curve: &Curve1D, basis: &EigenBasis, e: &BenchEmbedding) -> Result<DMatrix<f64>> {
    Ok(match e {
        BenchEmbedding::Extrinsic => embed_vertices(&ExtrinsicEmbedding, &curve.mesh),
        BenchEmbedding::Rff { d, sigma, seed } => {
            let spec = RffSpec::new(*d, *sigma, *seed, 3)?;
            embed_vertices(&RffEmbedding(&spec), &curve.mesh)
        }
        BenchEmbedding::Intrinsic { d } => {
            let spec = IntrinsicSpec::ones(*d);
            embed_vertices(&IntrinsicEmbedding::new(&spec, basis, &curve.mesh)?, &curve.mesh)
        }
    })
}

fn max_intrinsic_d(config: &BenchConfig) -> usize {
    config
        .embeddings
        .iter()
        .filter_map(|e| match e {
            BenchEmbedding::Intrinsic { d } => Some(*d),
            _ => None,
        })
        .max()
        .unwrap_or(1)
}

/// Trains one network per embedding on `train_count` evenly spaced vertices
/// (L2 loss, full batch) and evaluates every vertex.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    let curve = make_curve(config.preset, config.n)?;
    if config.train_count == 0 || config.train_count > curve.n() {
        return Err(Error::invalid(format!("train_count must lie in 1..={}", curve.n())));
    }
    let basis = EigenBasis::compute(&curve.mesh, max_intrinsic_d(config).max(2), config.basis_seed)?.bound_to(&curve.mesh);
    let target: Vec<f64> = curve.arclength.iter().map(|&s| config.signal.eval(s, curve.length)).collect();
    let train_vertices: Vec<usize> = (0..config.train_count).map(|k| k * curve.n() / config.train_count).collect();
    let near = curve.near_touch(config.near_touch_fraction * curve.length);
    let results = config
        .embeddings
        .par_iter()
        .map(|e| {
            let x = embed_curve(&curve, &basis, e)?;
            run_one(config, &x, &target, &train_vertices, &near, e.name())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport {
        arclength: curve.arclength.clone(),
        length: curve.length,
        target,
        train_vertices,
        near_touch: near,
        results,
    })
}

fn run_one(config: &BenchConfig, x: &DMatrix<f64>, target: &[f64], train_idx: &[usize], near: &[usize], name: String) -> Result<EmbeddingResult> {
    let d = x.ncols();
    let rows = |idx: &mut dyn Iterator<Item = usize>| -> Vec<f32> { idx.flat_map(|i| x.row(i).iter().map(|&v| v as f32).collect::<Vec<_>>()).collect() };
    let data = TrainingData::new(
        rows(&mut train_idx.iter().copied()),
        d,
        train_idx.iter().map(|&i| target[i] as f32).collect(),
        1,
    )?;
    let mlp = MlpConfig {
        input_dim: d,
        hidden_width: config.hidden_width,
        num_hidden_layers: config.num_hidden_layers,
        skip_at: None,
        view_dim: None,
        head_width: None,
        output_dim: 1,
        output_sigmoid: false,
        init_seed: config.init_seed,
        init: Default::default(),
    };
    let tcfg = TrainConfig {
        batch_size: train_idx.len(),
        learning_rate: config.learning_rate,
        steps: Some(config.steps),
        loss: LossKind::L2,
        ..Default::default()
    };
    let out = train(MlpParams::init(&mlp)?, &data, &tcfg, |_, _| {})?;
    let all = rows(&mut (0..x.nrows()));
    let pred: Vec<f64> = out.params.forward(&all, None, x.nrows())?.into_iter().map(f64::from).collect();
    let mse = |idx: &mut dyn Iterator<Item = usize>| {
        let (s, c) = idx.fold((0.0, 0usize), |(s, c), i| (s + (pred[i] - target[i]).powi(2), c + 1));
        s / c as f64
    };
    Ok(EmbeddingResult {
        name,
        train_mse: mse(&mut train_idx.iter().copied()),
        eval_mse: mse(&mut (0..x.nrows())),
        near_touch_max_error: near.iter().map(|&i| (pred[i] - target[i]).abs()).fold(0.0, f64::max),
        predictions: pred,
    })
}

/// NTK of each benchmark embedding over all curve vertices.
pub fn bench_kernels(config: &BenchConfig, ntk: &NtkConfig) -> Result<Vec<KernelMatrix>> {
    let curve = make_curve(config.preset, config.n)?;
    let basis = EigenBasis::compute(&curve.mesh, max_intrinsic_d(config).max(2), config.basis_seed)?.bound_to(&curve.mesh);
    config
        .embeddings
        .iter()
        .map(|e| ntk_matrix(&embed_curve(&curve, &basis, e)?, ntk, &e.name()))
        .collect()
}

impl BenchReport {
    /// Columns `s, target, <prediction per embedding>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,target");
        for r in &self.results {
            write!(out, ",{}", r.name).expect("writing to a String");
        }
        out.push('\n');
        for (i, s) in self.arclength.iter().enumerate() {
            write!(out, "{s},{}", self.target[i]).expect("writing to a String");
            for r in &self.results {
                write!(out, ",{}", r.predictions[i]).expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }

    /// Line plot of the target (black) and each prediction over arc length;
    /// training samples are marked with dots.
    pub fn save_plot(&self, path: impl AsRef<Path>, width: usize, height: usize) -> Result<()> {
        const PALETTE: [[u8; 3]; 6] = [[31, 119, 180], [255, 127, 14], [44, 160, 44], [214, 39, 40], [148, 103, 189], [140, 86, 75]];
        let mut img = vec![255u8; width * height * 3];
        let series: Vec<&[f64]> = std::iter::once(self.target.as_slice())
            .chain(self.results.iter().map(|r| r.predictions.as_slice()))
            .collect();
        let (lo, hi) = series
            .iter()
            .flat_map(|s| s.iter())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let px = |s: f64| (s / self.length * (width - 1) as f64).round();
        let py = |v: f64| ((1.0 - (v - lo) / span) * 0.9 * (height - 1) as f64 + 0.05 * (height - 1) as f64).round();
        let mut put = |x: f64, y: f64, c: [u8; 3]| {
            if x >= 0.0 && y >= 0.0 && (x as usize) < width && (y as usize) < height {
                let i = 3 * (y as usize * width + x as usize);
                img[i..i + 3].copy_from_slice(&c);
            }
        };
        for (k, s) in series.iter().enumerate().rev() {
            let color = if k == 0 { [0, 0, 0] } else { PALETTE[(k - 1) % PALETTE.len()] };
            for i in 0..s.len() {
                let j = (i + 1) % s.len();
                let (x0, y0) = (px(self.arclength[i]), py(s[i]));
                let (x1, y1) = if j == 0 { (px(self.length), py(s[0])) } else { (px(self.arclength[j]), py(s[j])) };
                let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1.0) as usize;
                for t in 0..=steps {
                    let f = t as f64 / steps as f64;
                    put((x0 + f * (x1 - x0)).round(), (y0 + f * (y1 - y0)).round(), color);
                }
            }
        }
        for &i in &self.train_vertices {
            let (x, y) = (px(self.arclength[i]), py(self.target[i]));
            for dx in -2..=2 {
                for dy in -2..=2 {
                    put(x + dx as f64, y + dy as f64, [0, 0, 0]);
                }
            }
        }
        image::save_buffer(path, &img, width as u32, height as u32, image::ColorType::Rgb8)?;
        Ok(())
    }
}
