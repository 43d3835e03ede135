use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::container::{Reader, Writer, BASIS_MAGIC};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Relative eigenvalue gap under which two eigenpairs count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverInfo {
    pub method: String,
    pub shift: f64,
    pub seed: u64,
    pub iterations: usize,
    /// Relative residual per eigenpair.
    pub residuals: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Trailer {
    mesh_hash: String,
    solver: SolverInfo,
}

/// The first `d` Laplace–Beltrami eigenpairs sampled at mesh vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenBasis {
    lambdas: Vec<f64>,
    /// `n x d`, row-major: row `v` holds every eigenfunction at vertex `v`.
    phis: Vec<f64>,
    mass: Vec<f64>,
    mesh_hash: String,
    solver: SolverInfo,
}

impl EigenBasis {
    pub(crate) fn from_columns(lambdas: Vec<f64>, columns: &[Vec<f64>], mass: Vec<f64>, solver: SolverInfo) -> EigenBasis {
        let n = mass.len();
        let d = lambdas.len();
        let mut phis = vec![0.0; n * d];
        for (i, col) in columns.iter().enumerate() {
            for v in 0..n {
                phis[v * d + i] = col[v];
            }
        }
        EigenBasis {
            lambdas,
            phis,
            mass,
            mesh_hash: String::new(),
            solver,
        }
    }

    /// Builds a basis from raw parts (`phis` row-major `n x d`).
    pub fn from_parts(lambdas: Vec<f64>, phis: Vec<f64>, mass: Vec<f64>, mesh_hash: String) -> Result<EigenBasis> {
        if phis.len() != lambdas.len() * mass.len() {
            return Err(Error::shape("phis must hold n * d values"));
        }
        Ok(EigenBasis {
            lambdas,
            phis,
            mass,
            mesh_hash,
            solver: SolverInfo::default(),
        })
    }

    /// Assembles the mesh Laplacian and solves for `d` eigenpairs.
    pub fn compute(mesh: &TriMesh, d: usize, seed: u64) -> Result<EigenBasis> {
        let (l, mass) = super::laplacian(mesh)?;
        let basis = super::smallest_eigenpairs(&l, &mass, d, seed)?;
        Ok(basis.bound_to(mesh))
    }

    pub fn bound_to(mut self, mesh: &TriMesh) -> EigenBasis {
        self.mesh_hash = mesh.content_hash();
        self
    }

    pub fn with_mesh_hash(mut self, hash: String) -> EigenBasis {
        self.mesh_hash = hash;
        self
    }

    pub fn n(&self) -> usize {
        self.mass.len()
    }

    pub fn d(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn mesh_hash(&self) -> &str {
        &self.mesh_hash
    }

    pub fn solver(&self) -> &SolverInfo {
        &self.solver
    }

    /// Row-major `n x d` eigenfunction values.
    pub fn phis(&self) -> &[f64] {
        &self.phis
    }

    pub fn phi(&self, vertex: usize, i: usize) -> f64 {
        self.phis[vertex * self.d() + i]
    }

    /// All eigenfunctions at one vertex.
    pub fn row(&self, vertex: usize) -> &[f64] {
        let d = self.d();
        &self.phis[vertex * d..(vertex + 1) * d]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.n()).map(|v| self.phi(v, i)).collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n(), self.d(), &self.phis)
    }

    /// Keeps the first `d` eigenpairs.
    pub fn truncated(&self, d: usize) -> Result<EigenBasis> {
        if d > self.d() {
            return Err(Error::shape(format!("cannot truncate {} eigenpairs to {d}", self.d())));
        }
        let phis = (0..self.n()).flat_map(|v| self.row(v)[..d].to_vec()).collect();
        let mut solver = self.solver.clone();
        solver.residuals.truncate(d);
        Ok(EigenBasis {
            lambdas: self.lambdas[..d].to_vec(),
            phis,
            mass: self.mass.clone(),
            mesh_hash: self.mesh_hash.clone(),
            solver,
        })
    }

    /// Mass-weighted inner product `⟨f, g⟩_M`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.mass.iter().zip(f).zip(g).map(|((m, a), b)| m * a * b).sum()
    }

    /// Expansion coefficients `⟨f, φ_i⟩_M`.
    pub fn project(&self, f: &[f64]) -> Vec<f64> {
        let d = self.d();
        let mut c = vec![0.0; d];
        for v in 0..self.n() {
            let w = self.mass[v] * f[v];
            for (ci, p) in c.iter_mut().zip(self.row(v)) {
                *ci += w * p;
            }
        }
        c
    }

    /// `Σ c_i φ_i` at every vertex.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|v| self.row(v).iter().zip(coeffs).map(|(p, c)| p * c).sum())
            .collect()
    }

    /// Maximal runs of eigenvalues within `tol * (1 + λ)` of their neighbor.
    pub fn degenerate_groups(&self, tol: f64) -> Vec<Range<usize>> {
        degenerate_groups(&self.lambdas, tol)
    }

    /// Checks the eigenbasis invariants and reports the worst violations.
    pub fn check(&self) -> BasisReport {
        let d = self.d();
        let mut ortho: f64 = 0.0;
        let cols: Vec<Vec<f64>> = (0..d).map(|i| self.column(i)).collect();
        for i in 0..d {
            for j in i..d {
                let target = if i == j { 1.0 } else { 0.0 };
                ortho = ortho.max((self.inner(&cols[i], &cols[j]) - target).abs());
            }
        }
        let first = &cols[0];
        let mean = first.iter().sum::<f64>() / first.len() as f64;
        let spread = first.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max) / mean.abs();
        let monotone = self.lambdas.windows(2).all(|w| w[0] <= w[1]) && self.lambdas.iter().all(|&l| l >= -1e-10);
        BasisReport {
            orthonormality_error: ortho,
            constant_mode_variation: spread,
            monotone,
            max_residual: self.solver.residuals.iter().cloned().fold(0.0, f64::max),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new(BASIS_MAGIC);
        w.u64(self.n() as u64)
            .u64(self.d() as u64)
            .f64s(&self.lambdas)
            .f64s(&self.mass)
            .f64s(&self.phis)
            .json_trailer(&Trailer {
                mesh_hash: self.mesh_hash.clone(),
                solver: self.solver.clone(),
            })?;
        Ok(w.finish())
    }

    /// SHA-256 of eigenvalues, mass and eigenfunctions (solver metadata
    /// excluded), hex encoded.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        h.update((self.d() as u64).to_le_bytes());
        for v in self.lambdas.iter().chain(&self.mass).chain(&self.phis) {
            h.update(v.to_le_bytes());
        }
        h.update(self.mesh_hash.as_bytes());
        crate::mesh::hex(&h.finalize())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<EigenBasis> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<EigenBasis> {
        let mut r = Reader::new(bytes, BASIS_MAGIC)?;
        let n = r.len()?;
        let d = r.len()?;
        let lambdas = r.f64s(d)?;
        let mass = r.f64s(n)?;
        let phis = r.f64s(n.checked_mul(d).ok_or_else(|| Error::Container("size overflow".into()))?)?;
        let trailer: Trailer = r.json_trailer()?;
        Ok(EigenBasis {
            lambdas,
            phis,
            mass,
            mesh_hash: trailer.mesh_hash,
            solver: trailer.solver,
        })
    }

    pub fn ensure_mesh(&self, mesh: &TriMesh) -> Result<()> {
        let found = mesh.content_hash();
        if found != self.mesh_hash {
            return Err(Error::HashMismatch {
                expected: self.mesh_hash.clone(),
                found,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct BasisReport {
    pub orthonormality_error: f64,
    pub constant_mode_variation: f64,
    pub monotone: bool,
    pub max_residual: f64,
}

pub fn degenerate_groups(lambdas: &[f64], tol: f64) -> Vec<Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=lambdas.len() {
        let split = i == lambdas.len() || (lambdas[i] - lambdas[i - 1]).abs() >= tol * (1.0 + lambdas[i - 1].abs());
        if split {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

/// Resolves the sign (and, inside degenerate groups, rotation) ambiguity of
/// `other` relative to `reference`.
///
/// `vertex_map[v]` is the vertex of `other` corresponding to reference vertex
/// `v`. Each degenerate group is aligned by orthogonal Procrustes in the
/// reference mass inner product; singleton groups reduce to a sign flip.
pub fn align_signs(reference: &EigenBasis, other: &EigenBasis, vertex_map: &[usize]) -> Result<EigenBasis> {
    let d = reference.d();
    if other.d() != d {
        return Err(Error::shape(format!("bases have {} and {} eigenpairs", d, other.d())));
    }
    if vertex_map.len() != reference.n() || vertex_map.iter().any(|&v| v >= other.n()) {
        return Err(Error::shape("vertex map does not match the bases"));
    }
    let mut rotation = DMatrix::<f64>::identity(d, d);
    for g in reference.degenerate_groups(DEGENERACY_TOL) {
        let k = g.len();
        // cross Gram matrix G[a][b] = ⟨φ_other,a ∘ map, φ_ref,b⟩_M
        let mut gram = DMatrix::<f64>::zeros(k, k);
        for (v, &w) in vertex_map.iter().enumerate() {
            let m = reference.mass[v];
            let ro = other.row(w);
            let rr = reference.row(v);
            for a in 0..k {
                for b in 0..k {
                    gram[(a, b)] += m * ro[g.start + a] * rr[g.start + b];
                }
            }
        }
        let r = if k == 1 {
            DMatrix::from_element(1, 1, if gram[(0, 0)] < 0.0 { -1.0 } else { 1.0 })
        } else {
            let svd = gram.svd(true, true);
            svd.u.unwrap() * svd.v_t.unwrap()
        };
        rotation.view_mut((g.start, g.start), (k, k)).copy_from(&r);
    }
    let aligned = other.to_matrix() * rotation;
    let mut out = other.clone();
    out.phis = aligned.transpose().as_slice().to_vec();
    Ok(out)
}
