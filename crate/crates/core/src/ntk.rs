//! Infinite-width NNGP/NTK of ReLU MLPs over embedded points, and the
//! stationarity diagnostic obtained by projecting a kernel onto the
//! Laplace–Beltrami basis.
//!
//! Recursion, with `n₀` the embedding width:
//!
//! ```text
//! Σ¹(x, x')   = xᵀx' / n₀ + β²
//! Σˡ⁺¹(x, x') = E[σ(u)σ(v)] + β²
//! Σ̇ˡ⁺¹(x, x') = E[σ̇(u)σ̇(v)] + β²      (β² dropped when `beta_in_derivative` is off)
//! Θ¹ = Σ¹,    Θˡ⁺¹ = Θˡ Σ̇ˡ⁺¹ + Σˡ⁺¹
//! ```
//!
//! where `(u, v) ~ N(0, Λˡ)` and `Λˡ` is the 2x2 restriction of `Σˡ`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{Reader, Writer, COEFFS_MAGIC, KERNEL_MAGIC};
use crate::embedding::PointEmbedding;
use crate::error::{Error, Result};
use crate::field::{InitScheme, MlpConfig, MlpParams};
use crate::mesh::TriMesh;
use crate::spectrum::EigenBasis;

const PSD_TOL: f64 = 1e-10;
const RHO_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NtkConfig {
    /// Number of layers `L >= 1`; `L = 1` is the linear model.
    pub depth: usize,
    pub beta: f64,
    /// Add `β²` to `Σ̇` as well. Off gives the kernel of the finite network
    /// with `N(0, β²)` biases exactly.
    pub beta_in_derivative: bool,
}

impl Default for NtkConfig {
    fn default() -> Self {
        NtkConfig {
            depth: 3,
            beta: 0.1,
            beta_in_derivative: true,
        }
    }
}

/// Closed-form ReLU expectations `(E[σ(u)σ(v)], E[σ̇(u)σ̇(v)])` for
/// `(u, v) ~ N(0, [[sxx, sxy], [sxy, syy]])`.
///
/// A zero variance makes the pair independent: `(0, 1/4)`.
pub fn relu_duals(sxx: f64, sxy: f64, syy: f64) -> Result<(f64, f64)> {
    if !(sxx >= -PSD_TOL && syy >= -PSD_TOL) || !sxy.is_finite() {
        return Err(Error::invalid(format!("covariance [[{sxx}, {sxy}], [{sxy}, {syy}]] is not PSD")));
    }
    let norm = (sxx.max(0.0) * syy.max(0.0)).sqrt();
    if norm == 0.0 {
        if sxy.abs() > PSD_TOL {
            return Err(Error::invalid("non-zero covariance with zero variance"));
        }
        return Ok((0.0, 0.25));
    }
    let rho = sxy / norm;
    if rho.abs() > 1.0 + RHO_TOL {
        return Err(Error::invalid(format!("correlation {rho} outside [-1, 1]")));
    }
    let rho = rho.clamp(-1.0, 1.0);
    let theta = rho.acos();
    let ss = norm / (2.0 * PI) * (theta.sin() + (PI - theta) * rho);
    let dd = (PI - theta) / (2.0 * PI);
    Ok((ss, dd))
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    pub values: DMatrix<f64>,
    pub config: NtkConfig,
    /// Name of the embedding the points came from.
    pub embedding: String,
}

#[derive(Serialize, Deserialize)]
struct KernelTrailer {
    config: NtkConfig,
    embedding: String,
}

/// NTK `Θ^(L)` between all rows of `points` (one embedded point per row).
pub fn ntk_matrix(points: &DMatrix<f64>, config: &NtkConfig, embedding: &str) -> Result<KernelMatrix> {
    if config.depth == 0 {
        return Err(Error::invalid("NTK depth must be at least 1"));
    }
    if !(config.beta >= 0.0) {
        return Err(Error::invalid("beta must be non-negative"));
    }
    let n = points.nrows();
    let n0 = points.ncols().max(1) as f64;
    let b2 = config.beta * config.beta;
    let db2 = if config.beta_in_derivative { b2 } else { 0.0 };
    let sigma1 = points * points.transpose() / n0;
    let diag: Vec<f64> = (0..n).map(|i| sigma1[(i, i)] + b2).collect();

    // Σ(x,x) follows its own recursion, independent of the other point.
    let mut diags = vec![diag];
    for _ in 1..config.depth {
        let prev = diags.last().expect("non-empty");
        let next = prev
            .iter()
            .map(|&s| Ok(relu_duals(s, s, s)?.0 + b2))
            .collect::<Result<Vec<f64>>>()?;
        diags.push(next);
    }

    let rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; n - i];
            for j in i..n {
                let mut sigma = sigma1[(i, j)] + b2;
                let mut theta = sigma;
                for l in 1..config.depth {
                    let (ss, dd) = relu_duals(diags[l - 1][i], sigma, diags[l - 1][j])?;
                    sigma = ss + b2;
                    theta = theta * (dd + db2) + sigma;
                }
                row[j - i] = theta;
            }
            Ok(row)
        })
        .collect();
    let mut values = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (k, v) in row?.into_iter().enumerate() {
            values[(i, i + k)] = v;
            values[(i + k, i)] = v;
        }
    }
    Ok(KernelMatrix {
        values,
        config: config.clone(),
        embedding: embedding.to_string(),
    })
}

/// Embedding of every mesh vertex, one row per vertex.
pub fn embed_vertices(embedding: &dyn PointEmbedding, mesh: &TriMesh) -> DMatrix<f64> {
    let d = embedding.dim();
    let rows: Vec<Vec<f64>> = mesh.vertex_points().par_iter().map(|p| embedding.embed(p)).collect();
    DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j])
}

impl KernelMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let n = self.n();
        let mut w = Writer::new(KERNEL_MAGIC);
        w.u64(n as u64).u64(n as u64);
        w.f64s(&row_major(&self.values));
        w.json_trailer(&KernelTrailer {
            config: self.config.clone(),
            embedding: self.embedding.clone(),
        })?;
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<KernelMatrix> {
        let mut r = Reader::new(bytes, KERNEL_MAGIC)?;
        let (rows, cols) = (r.len()?, r.len()?);
        if rows != cols {
            return Err(Error::Container(format!("kernel is {rows}x{cols}, not square")));
        }
        let data = r.f64s(rows * cols)?;
        let t: KernelTrailer = r.json_trailer()?;
        Ok(KernelMatrix {
            values: DMatrix::from_row_slice(rows, cols, &data),
            config: t.config,
            embedding: t.embedding,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<KernelMatrix> {
        KernelMatrix::from_bytes(&std::fs::read(path)?)
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationarityCoeffs {
    pub c: DMatrix<f64>,
    pub basis_hash: String,
}

#[derive(Serialize, Deserialize)]
struct CoeffsTrailer {
    basis_hash: String,
}

/// `c_ij = Σ_{u,v} φ_i(u) m_u K_uv m_v φ_j(v)`.
pub fn stationarity_coeffs(kernel: &DMatrix<f64>, basis: &EigenBasis) -> Result<StationarityCoeffs> {
    let n = basis.n();
    if kernel.nrows() != n || kernel.ncols() != n {
        return Err(Error::shape(format!(
            "kernel is {}x{}, basis has {n} vertices",
            kernel.nrows(),
            kernel.ncols()
        )));
    }
    let mut mphi = basis.to_matrix();
    for (mut row, m) in mphi.row_iter_mut().zip(basis.mass()) {
        row *= *m;
    }
    let c = mphi.transpose() * kernel * &mphi;
    Ok(StationarityCoeffs {
        c,
        basis_hash: basis.content_hash(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityScore {
    /// `Σ_{i≠j} c_ij² / Σ_i c_ii²`.
    pub offdiag_ratio: f64,
    pub min_diag: f64,
}

pub fn stationarity_score(coeffs: &StationarityCoeffs) -> StationarityScore {
    let c = &coeffs.c;
    let (mut on, mut off) = (0.0, 0.0);
    let mut min_diag = f64::INFINITY;
    for i in 0..c.nrows() {
        for j in 0..c.ncols() {
            if i == j {
                on += c[(i, i)] * c[(i, i)];
                min_diag = min_diag.min(c[(i, i)]);
            } else {
                off += c[(i, j)] * c[(i, j)];
            }
        }
    }
    StationarityScore {
        offdiag_ratio: if on > 0.0 { off / on } else { f64::INFINITY },
        min_diag,
    }
}

impl StationarityCoeffs {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let d = self.c.nrows();
        let mut w = Writer::new(COEFFS_MAGIC);
        w.u64(d as u64).u64(self.c.ncols() as u64);
        w.f64s(&row_major(&self.c));
        w.json_trailer(&CoeffsTrailer {
            basis_hash: self.basis_hash.clone(),
        })?;
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<StationarityCoeffs> {
        let mut r = Reader::new(bytes, COEFFS_MAGIC)?;
        let (rows, cols) = (r.len()?, r.len()?);
        let data = r.f64s(rows * cols)?;
        let t: CoeffsTrailer = r.json_trailer()?;
        Ok(StationarityCoeffs {
            c: DMatrix::from_row_slice(rows, cols, &data),
            basis_hash: t.basis_hash,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<StationarityCoeffs> {
        StationarityCoeffs::from_bytes(&std::fs::read(path)?)
    }
}

/// Empirical NTK of one randomly initialized finite ReLU network of the
/// given width, in the NTK parameterization matching the recursion with
/// `beta_in_derivative` off:
/// `Θ(x, x') = Σ_layers (1/fan_in) ⟨∂f/∂W(x), ∂f/∂W(x')⟩ + β² ⟨∂f/∂b(x), ∂f/∂b(x')⟩`
/// with gradients taken in the standard parameterization.
pub fn empirical_ntk(points: &DMatrix<f64>, depth: usize, width: usize, beta: f64, seed: u64) -> Result<DMatrix<f64>> {
    if depth == 0 {
        return Err(Error::invalid("NTK depth must be at least 1"));
    }
    let config = MlpConfig {
        input_dim: points.ncols(),
        hidden_width: width,
        num_hidden_layers: depth - 1,
        skip_at: None,
        view_dim: None,
        head_width: None,
        output_dim: 1,
        output_sigmoid: false,
        init_seed: seed,
        init: InitScheme::Ntk { beta },
    };
    let params = MlpParams::<f64>::init_as(&config)?;
    let n = points.nrows();
    let jac: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x: Vec<f64> = points.row(i).iter().copied().collect();
            let cache = params.forward_cached(&x, None, 1)?;
            let mut g = params.backward(&cache, &[1.0]);
            for l in params.layers() {
                let ws = (1.0 / l.fan_in as f64).sqrt();
                g[l.weight_offset..l.bias_offset].iter_mut().for_each(|v| *v *= ws);
                g[l.bias_offset..l.bias_offset + l.fan_out].iter_mut().for_each(|v| *v *= beta);
            }
            Ok(g)
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(n, n, |i, j| jac[i].iter().zip(&jac[j]).map(|(a, b)| a * b).sum()))
}

/// `‖A − B‖_F / ‖B‖_F`.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Fixed viridis-like colormap sampled at `t ∈ [0, 1]`.
pub fn colormap(t: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 5] = [
        [0.267, 0.005, 0.329],
        [0.230, 0.322, 0.546],
        [0.128, 0.567, 0.551],
        [0.369, 0.789, 0.383],
        [0.993, 0.906, 0.144],
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (STOPS.len() - 1) as f64;
    let k = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - k as f64;
    std::array::from_fn(|c| ((STOPS[k][c] * (1.0 - f) + STOPS[k + 1][c] * f) * 255.0).round() as u8)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapInfo {
    pub rows: usize,
    pub cols: usize,
    pub min: f64,
    pub max: f64,
}

/// Writes a matrix as a PNG heatmap (one pixel per entry, min to max
/// mapped across the colormap) and a JSON sidecar with the range next to
/// it (`<path>.json`).
pub fn save_heatmap(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<HeatmapInfo> {
    let path = path.as_ref();
    let (lo, hi) = m.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut bytes = Vec::with_capacity(m.len() * 3);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            bytes.extend(colormap((m[(i, j)] - lo) / span));
        }
    }
    image::save_buffer(path, &bytes, m.ncols() as u32, m.nrows() as u32, image::ColorType::Rgb8)?;
    let info = HeatmapInfo {
        rows: m.nrows(),
        cols: m.ncols(),
        min: lo,
        max: hi,
    };
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".json");
    std::fs::write(sidecar, serde_json::to_vec_pretty(&info)?)?;
    Ok(info)
}
