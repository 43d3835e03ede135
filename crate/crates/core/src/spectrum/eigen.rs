//! Smallest eigenpairs of the pencil `L φ = λ M φ` with diagonal `M`.
//!
//! The iterative path is a block Lanczos process on the shift-inverted
//! operator `(L - σM)^{-1} M`, kept M-orthonormal by full
//! reorthogonalization and restarted from the current Ritz vectors when the
//! basis reaches its size cap. Ritz values come from projecting `L` itself
//! onto the Krylov basis. Blocks, rather than single vectors, let exactly
//! repeated eigenvalues (common on symmetric meshes) come out with their
//! full multiplicity.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::basis::{EigenBasis, SolverInfo};
use super::cholesky::EnvelopeCholesky;
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub shift: f64,
    pub tolerance: f64,
    /// Iteration budget as a multiple of `d`; one iteration is one
    /// application of the shift-inverted operator to a vector.
    pub max_iterations_per_pair: usize,
    pub block_size: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            shift: -1e-8,
            tolerance: 1e-8,
            max_iterations_per_pair: 50,
            block_size: None,
        }
    }
}

fn m_dot(mass: &[f64], a: &[f64], b: &[f64]) -> f64 {
    mass.iter().zip(a).zip(b).map(|((m, x), y)| m * x * y).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `‖Lφ - λMφ‖ / max(‖Lφ‖, λ_floor ‖Mφ‖)`, where `λ_floor` is the smallest
/// clearly positive eigenvalue among `lambdas` (so the constant mode does not
/// divide by a vanishing `‖Lφ‖`).
pub fn relative_residuals(l: &CsrMatrix, mass: &[f64], lambdas: &[f64], columns: &[Vec<f64>]) -> Vec<f64> {
    let floor = positive_floor(lambdas);
    lambdas
        .iter()
        .zip(columns)
        .map(|(&lam, phi)| residual_of(l.apply(phi).as_slice(), mass, lam, phi, floor))
        .collect()
}

fn residual_of(lphi: &[f64], mass: &[f64], lam: f64, phi: &[f64], floor: f64) -> f64 {
    let mphi: Vec<f64> = mass.iter().zip(phi).map(|(m, p)| m * p).collect();
    let r: f64 = lphi
        .iter()
        .zip(&mphi)
        .map(|(a, b)| (a - lam * b).powi(2))
        .sum::<f64>()
        .sqrt();
    r / norm(lphi).max(floor * norm(&mphi)).max(f64::MIN_POSITIVE)
}

fn positive_floor(lambdas: &[f64]) -> f64 {
    let top = lambdas.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    lambdas
        .iter()
        .copied()
        .filter(|&l| l > 1e-8 * top)
        .reduce(f64::min)
        .unwrap_or(1.0)
}

/// Deterministic sign convention: the constant-like first mode has positive
/// sum, every other column has its largest-magnitude entry positive.
fn normalize_signs(columns: &mut [Vec<f64>]) {
    for (i, col) in columns.iter_mut().enumerate() {
        let flip = if i == 0 {
            col.iter().sum::<f64>() < 0.0
        } else {
            let (mut best, mut val) = (0.0f64, 0.0f64);
            for &x in col.iter() {
                if x.abs() > best {
                    best = x.abs();
                    val = x;
                }
            }
            val < 0.0
        };
        if flip {
            col.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

pub fn smallest_eigenpairs(l: &CsrMatrix, mass: &[f64], d: usize, seed: u64) -> Result<EigenBasis> {
    smallest_eigenpairs_with(l, mass, d, seed, &SolverOptions::default())
}

pub fn smallest_eigenpairs_with(
    l: &CsrMatrix,
    mass: &[f64],
    d: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<EigenBasis> {
    let n = l.dim();
    check_problem(l, mass, d)?;
    let p = opts.block_size.unwrap_or(d.clamp(4, 16)).min(n - d).max(1);
    let cap = n.min((d + 3 * p).max(3 * d));
    if cap < d + p {
        // too small for a meaningful Krylov space
        return dense_eigenpairs(l, mass, d);
    }

    let mut shift = opts.shift;
    let chol = loop {
        match EnvelopeCholesky::factor(&l.add_diagonal(-shift, mass)) {
            Ok(c) => break c,
            Err(Error::NotPositiveDefinite { .. }) if shift > -1e-3 => {
                log::warn!("shifted Laplacian not positive definite at σ = {shift:e}; retrying");
                shift *= 10.0;
            }
            Err(e) => return Err(e),
        }
    };
    let apply_op = |v: &[f64]| -> Vec<f64> {
        let mv: Vec<f64> = mass.iter().zip(v).map(|(m, x)| m * x).collect();
        chol.solve(&mv)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random_block = |k: usize| -> Vec<Vec<f64>> {
        (0..k)
            .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    };

    let mut space = KrylovSpace::new(mass);
    let mut last = space.extend(l, random_block(p));
    let mut iterations = 0usize;
    let max_iterations = opts.max_iterations_per_pair * d;

    loop {
        if space.len() >= d {
            let ritz = space.ritz(mass, (d + p).min(space.len()));
            let floor = positive_floor(&ritz.values);
            let residuals: Vec<f64> = (0..ritz.values.len())
                .map(|i| residual_of(&ritz.lvectors[i], mass, ritz.values[i], &ritz.vectors[i], floor))
                .collect();
            let worst = residuals[..d].iter().cloned().fold(0.0, f64::max);
            log::debug!("eigensolve: basis {} iterations {iterations} worst residual {worst:e}", space.len());
            if worst < opts.tolerance {
                let mut columns: Vec<Vec<f64>> = ritz.vectors[..d].to_vec();
                normalize_signs(&mut columns);
                let lambdas = ritz.values[..d].to_vec();
                let residuals = relative_residuals(l, mass, &lambdas, &columns);
                return Ok(EigenBasis::from_columns(
                    lambdas,
                    &columns,
                    mass.to_vec(),
                    SolverInfo {
                        method: "block-lanczos-shift-invert".into(),
                        shift,
                        seed,
                        iterations,
                        residuals,
                    },
                ));
            }
            if iterations >= max_iterations {
                return Err(Error::NoConvergence {
                    iterations,
                    worst_residual: worst,
                    residuals: residuals[..d].to_vec(),
                });
            }
            // expand with the least converged wanted Ritz vectors, topped up
            // with the next ones past d
            let mut targets: Vec<usize> = (0..d).filter(|&i| residuals[i] >= opts.tolerance).collect();
            targets.sort_by(|&a, &b| residuals[b].total_cmp(&residuals[a]));
            targets.truncate(p);
            targets.extend((d..ritz.values.len()).take(p - targets.len()));
            last = targets.iter().map(|&i| ritz.vectors[i].clone()).collect();
            if space.len() + p > cap {
                let keep = ritz.values.len();
                space.restart(ritz.vectors, ritz.lvectors, &ritz.values[..keep]);
            }
        }
        let block: Vec<Vec<f64>> = last.iter().map(|v| apply_op(v)).collect();
        iterations += block.len();
        last = space.extend(l, block);
        if last.is_empty() {
            last = space.extend(l, random_block(p));
        }
        if space.len() < d && iterations >= max_iterations {
            return Err(Error::NoConvergence {
                iterations,
                worst_residual: f64::INFINITY,
                residuals: vec![],
            });
        }
    }
}

fn check_problem(l: &CsrMatrix, mass: &[f64], d: usize) -> Result<()> {
    let n = l.dim();
    if mass.len() != n {
        return Err(Error::shape(format!("mass has {} entries, matrix is {n}x{n}", mass.len())));
    }
    if d == 0 || d >= n {
        return Err(Error::invalid(format!("need 0 < d < n, got d = {d}, n = {n}")));
    }
    if mass.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::invalid("mass weights must be positive"));
    }
    Ok(())
}

struct Ritz {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    lvectors: Vec<Vec<f64>>,
}

/// M-orthonormal basis with cached `L q` products and projection `Qᵀ L Q`.
struct KrylovSpace<'m> {
    mass: &'m [f64],
    q: Vec<Vec<f64>>,
    lq: Vec<Vec<f64>>,
    t: Vec<Vec<f64>>,
}

impl<'m> KrylovSpace<'m> {
    fn new(mass: &'m [f64]) -> Self {
        KrylovSpace {
            mass,
            q: Vec::new(),
            lq: Vec::new(),
            t: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.q.len()
    }

    /// Orthonormalizes `block` against the space (two Gram–Schmidt passes)
    /// and appends the survivors, which are also returned.
    fn extend(&mut self, l: &CsrMatrix, block: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        let mut added = Vec::new();
        for mut w in block {
            let start = m_dot(self.mass, &w, &w).sqrt();
            for _ in 0..2 {
                for q in &self.q {
                    let c = m_dot(self.mass, q, &w);
                    axpy(-c, q, &mut w);
                }
            }
            let nrm = m_dot(self.mass, &w, &w).sqrt();
            if !(nrm > 1e-10 * start) || !nrm.is_finite() {
                continue;
            }
            w.iter_mut().for_each(|x| *x /= nrm);
            let lw = l.apply(&w);
            let row: Vec<f64> = self.q.iter().map(|q| dot(q, &lw)).collect();
            for (k, r) in self.t.iter_mut().enumerate() {
                r.push(row[k]);
            }
            let mut own = row;
            own.push(dot(&w, &lw));
            self.t.push(own);
            self.q.push(w.clone());
            self.lq.push(lw);
            added.push(w);
        }
        added
    }

    fn ritz(&self, mass: &[f64], count: usize) -> Ritz {
        let m = self.q.len();
        let t = DMatrix::from_fn(m, m, |i, j| 0.5 * (self.t[i][j] + self.t[j][i]));
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let n = mass.len();
        let mut values = Vec::with_capacity(count);
        let mut vectors = Vec::with_capacity(count);
        let mut lvectors = Vec::with_capacity(count);
        for &k in order.iter().take(count) {
            let mut y = vec![0.0; n];
            let mut ly = vec![0.0; n];
            for a in 0..m {
                let s = eig.eigenvectors[(a, k)];
                axpy(s, &self.q[a], &mut y);
                axpy(s, &self.lq[a], &mut ly);
            }
            values.push(eig.eigenvalues[k]);
            vectors.push(y);
            lvectors.push(ly);
        }
        Ritz {
            values,
            vectors,
            lvectors,
        }
    }

    /// Replaces the basis with Ritz vectors, whose projection is diagonal.
    fn restart(&mut self, vectors: Vec<Vec<f64>>, lvectors: Vec<Vec<f64>>, values: &[f64]) {
        let k = values.len();
        self.t = (0..k)
            .map(|i| (0..k).map(|j| if i == j { values[i] } else { 0.0 }).collect())
            .collect();
        self.q = vectors;
        self.lq = lvectors;
    }
}

/// Dense reference solve through `M^{-1/2} L M^{-1/2}`. Cubic cost; meant
/// for small meshes and as the oracle for the iterative path.
pub fn dense_eigenpairs(l: &CsrMatrix, mass: &[f64], d: usize) -> Result<EigenBasis> {
    check_problem(l, mass, d)?;
    let n = l.dim();
    let inv_sqrt: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut a = l.to_dense();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let mut columns: Vec<Vec<f64>> = order[..d]
        .iter()
        .map(|&k| (0..n).map(|i| eig.eigenvectors[(i, k)] * inv_sqrt[i]).collect())
        .collect();
    normalize_signs(&mut columns);
    let lambdas: Vec<f64> = order[..d].iter().map(|&k| eig.eigenvalues[k]).collect();
    let residuals = relative_residuals(l, mass, &lambdas, &columns);
    Ok(EigenBasis::from_columns(
        lambdas,
        &columns,
        mass.to_vec(),
        SolverInfo {
            method: "dense".into(),
            shift: 0.0,
            seed: 0,
            iterations: 0,
            residuals,
        },
    ))
}
