//! Point encodings fed to the field network.
//!
//! * intrinsic: scaled Laplace–Beltrami eigenfunctions, interpolated
//!   barycentrically inside faces;
//! * random Fourier features of extrinsic coordinates;
//! * raw extrinsic coordinates;
//! * octave sine/cosine encoding of unit view directions.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{SurfacePoint, TriMesh, Vec3};
use crate::spectrum::{EigenBasis, DEGENERACY_TOL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingSpec {
    Intrinsic(IntrinsicSpec),
    Rff(RffSpec),
    Extrinsic,
    Posenc(PosencSpec),
}

impl EmbeddingSpec {
    pub fn output_dim(&self) -> usize {
        match self {
            EmbeddingSpec::Intrinsic(s) => s.d(),
            EmbeddingSpec::Rff(s) => s.d,
            EmbeddingSpec::Extrinsic => 3,
            EmbeddingSpec::Posenc(s) => s.output_dim(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            EmbeddingSpec::Intrinsic(s) => format!("intrinsic-d{}", s.d()),
            EmbeddingSpec::Rff(s) => format!("rff-d{}-sigma{}", s.d, s.sigma),
            EmbeddingSpec::Extrinsic => "extrinsic".into(),
            EmbeddingSpec::Posenc(s) => format!("posenc-{}", s.num_bands),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicSpec {
    /// Scale `a_i >= 0` per eigenfunction; the length is the embedding width.
    pub coefficients: Vec<f64>,
}

impl IntrinsicSpec {
    /// `a_i = 1` for the first `d` eigenfunctions.
    pub fn ones(d: usize) -> IntrinsicSpec {
        IntrinsicSpec {
            coefficients: vec![1.0; d],
        }
    }

    pub fn new(coefficients: Vec<f64>) -> Result<IntrinsicSpec> {
        if coefficients.is_empty() || coefficients.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::invalid("intrinsic coefficients must be finite and >= 0"));
        }
        Ok(IntrinsicSpec { coefficients })
    }

    /// Unit coefficients on the first `d` eigenfunctions, except that a
    /// degenerate group cut by the truncation gets zeros so that equal
    /// eigenvalues always share a coefficient. Needs `basis.d() > d` to see
    /// past the cut.
    pub fn respecting_degeneracy(basis: &EigenBasis, d: usize) -> Result<IntrinsicSpec> {
        if d > basis.d() {
            return Err(Error::shape(format!("basis has {} eigenpairs, asked for {d}", basis.d())));
        }
        let mut a = vec![1.0; d];
        for g in basis.degenerate_groups(DEGENERACY_TOL) {
            if g.start < d && g.end > d {
                a[g.start..d].iter_mut().for_each(|x| *x = 0.0);
            }
        }
        Ok(IntrinsicSpec { coefficients: a })
    }

    pub fn d(&self) -> usize {
        self.coefficients.len()
    }

    /// Checks `λ_i = λ_j ⇒ a_i = a_j` against the basis eigenvalues.
    pub fn check_degeneracy(&self, basis: &EigenBasis) -> Result<()> {
        for g in basis.degenerate_groups(DEGENERACY_TOL) {
            let inside: Vec<f64> = g.filter(|&i| i < self.d()).map(|i| self.coefficients[i]).collect();
            if inside.windows(2).any(|w| (w[0] - w[1]).abs() > 1e-12) {
                return Err(Error::invalid(
                    "coefficients differ inside a degenerate eigenvalue group",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RffSpec {
    /// Output width; even.
    pub d: usize,
    pub sigma: f64,
    pub seed: u64,
    pub input_dim: usize,
    /// Frequency matrix `B`, `(d/2) x input_dim`, row-major. Drawn at
    /// construction and stored so the encoding survives serialization.
    pub frequencies: Vec<f64>,
}

impl RffSpec {
    /// Draws rows of `B` from `N(0, (2πσ)² I)` with a seeded ChaCha8 stream.
    pub fn new(d: usize, sigma: f64, seed: u64, input_dim: usize) -> Result<RffSpec> {
        if d == 0 || d % 2 != 0 {
            return Err(Error::invalid("RFF width must be even and positive"));
        }
        if !(sigma > 0.0) || input_dim == 0 {
            return Err(Error::invalid("RFF needs sigma > 0 and input_dim > 0"));
        }
        let normal = Normal::new(0.0, 2.0 * PI * sigma).expect("finite std");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frequencies = (0..d / 2 * input_dim).map(|_| normal.sample(&mut rng)).collect();
        Ok(RffSpec {
            d,
            sigma,
            seed,
            input_dim,
            frequencies,
        })
    }

    pub fn frequency(&self, row: usize) -> &[f64] {
        &self.frequencies[row * self.input_dim..(row + 1) * self.input_dim]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosencSpec {
    pub num_bands: usize,
    /// Band `b` uses frequency `2^(min_exponent + b) π`.
    #[serde(default)]
    pub min_exponent: i32,
}

impl Default for PosencSpec {
    fn default() -> Self {
        PosencSpec {
            num_bands: 4,
            min_exponent: 0,
        }
    }
}

impl PosencSpec {
    pub fn output_dim(&self) -> usize {
        6 * self.num_bands
    }

    pub fn max_exponent(&self) -> i32 {
        self.min_exponent + self.num_bands as i32 - 1
    }
}

/// `[cos(b_1ᵀx), sin(b_1ᵀx), …]` with unit amplitudes.
pub fn embed_rff(spec: &RffSpec, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != spec.input_dim {
        return Err(Error::shape(format!(
            "RFF expects {} inputs, got {}",
            spec.input_dim,
            x.len()
        )));
    }
    let mut out = Vec::with_capacity(spec.d);
    for r in 0..spec.d / 2 {
        let phase: f64 = spec.frequency(r).iter().zip(x).map(|(b, x)| b * x).sum();
        out.push(phase.cos());
        out.push(phase.sin());
    }
    Ok(out)
}

/// Per band `b`, per coordinate `c`: `sin(2^b π v_c), cos(2^b π v_c)`.
pub fn embed_posenc(spec: &PosencSpec, v: &Vec3) -> Result<Vec<f64>> {
    if (v.norm() - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("view direction has norm {}", v.norm())));
    }
    let mut out = Vec::with_capacity(spec.output_dim());
    for b in 0..spec.num_bands {
        let f = 2f64.powi(spec.min_exponent + b as i32) * PI;
        for c in 0..3 {
            out.push((f * v[c]).sin());
            out.push((f * v[c]).cos());
        }
    }
    Ok(out)
}

/// Anything that maps surface points to network inputs.
pub trait PointEmbedding: Sync {
    fn dim(&self) -> usize;

    fn embed(&self, p: &SurfacePoint) -> Vec<f64>;

    fn embed_f32(&self, p: &SurfacePoint, out: &mut [f32]) {
        for (o, v) in out.iter_mut().zip(self.embed(p)) {
            *o = v as f32;
        }
    }
}

/// Intrinsic embedding bound to a basis and the mesh it was computed on.
pub struct IntrinsicEmbedding<'a> {
    spec: &'a IntrinsicSpec,
    basis: &'a EigenBasis,
    mesh: &'a TriMesh,
}

impl<'a> IntrinsicEmbedding<'a> {
    pub fn new(spec: &'a IntrinsicSpec, basis: &'a EigenBasis, mesh: &'a TriMesh) -> Result<Self> {
        if basis.d() < spec.d() {
            return Err(Error::shape(format!(
                "basis has {} eigenpairs, embedding needs {}",
                basis.d(),
                spec.d()
            )));
        }
        basis.ensure_mesh(mesh)?;
        if basis.n() != mesh.num_vertices() {
            return Err(Error::shape("basis and mesh vertex counts differ"));
        }
        Ok(IntrinsicEmbedding { spec, basis, mesh })
    }

    pub fn spec(&self) -> &IntrinsicSpec {
        self.spec
    }

    /// Embedding at vertex `v`: `a_i φ_i(v)`.
    pub fn at_vertex(&self, v: usize) -> Vec<f64> {
        self.basis.row(v)[..self.spec.d()]
            .iter()
            .zip(&self.spec.coefficients)
            .map(|(p, a)| p * a)
            .collect()
    }
}

impl PointEmbedding for IntrinsicEmbedding<'_> {
    fn dim(&self) -> usize {
        self.spec.d()
    }

    fn embed(&self, p: &SurfacePoint) -> Vec<f64> {
        let d = self.spec.d();
        let idx = self.mesh.element(p.face);
        let mut out = vec![0.0; d];
        for k in 0..3 {
            let w = p.bary[k];
            if w == 0.0 {
                continue;
            }
            for (o, phi) in out.iter_mut().zip(&self.basis.row(idx[k])[..d]) {
                *o += w * phi;
            }
        }
        for (o, a) in out.iter_mut().zip(&self.spec.coefficients) {
            *o *= a;
        }
        out
    }
}

/// One-shot intrinsic embedding of a single point.
pub fn embed_intrinsic(spec: &IntrinsicSpec, basis: &EigenBasis, mesh: &TriMesh, p: &SurfacePoint) -> Result<Vec<f64>> {
    Ok(IntrinsicEmbedding::new(spec, basis, mesh)?.embed(p))
}

/// RFF of the point's 3-D position.
pub struct RffEmbedding<'a>(pub &'a RffSpec);

impl PointEmbedding for RffEmbedding<'_> {
    fn dim(&self) -> usize {
        self.0.d
    }

    fn embed(&self, p: &SurfacePoint) -> Vec<f64> {
        embed_rff(self.0, p.position.as_slice()).expect("RFF over 3-D positions")
    }
}

/// Raw 3-D position.
pub struct ExtrinsicEmbedding;

impl PointEmbedding for ExtrinsicEmbedding {
    fn dim(&self) -> usize {
        3
    }

    fn embed(&self, p: &SurfacePoint) -> Vec<f64> {
        p.position.as_slice().to_vec()
    }
}

/// Binds a spec to its data. Intrinsic specs need the basis.
pub fn bind<'a>(spec: &'a EmbeddingSpec, basis: Option<&'a EigenBasis>, mesh: &'a TriMesh) -> Result<Box<dyn PointEmbedding + 'a>> {
    Ok(match spec {
        EmbeddingSpec::Intrinsic(s) => {
            let basis = basis.ok_or_else(|| Error::invalid("intrinsic embedding needs an eigenbasis"))?;
            Box::new(IntrinsicEmbedding::new(s, basis, mesh)?)
        }
        EmbeddingSpec::Rff(s) => {
            if s.input_dim != 3 {
                return Err(Error::shape("surface RFF needs input_dim = 3"));
            }
            Box::new(RffEmbedding(s))
        }
        EmbeddingSpec::Extrinsic => Box::new(ExtrinsicEmbedding),
        EmbeddingSpec::Posenc(_) => {
            return Err(Error::invalid("positional encoding applies to view directions, not surface points"))
        }
    })
}
