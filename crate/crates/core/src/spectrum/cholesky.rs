//! Envelope (skyline) Cholesky factorization under a reverse Cuthill–McKee
//! ordering. Fill stays inside the row envelopes, which RCM keeps narrow on
//! surface meshes.

use std::collections::VecDeque;

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

pub struct EnvelopeCholesky {
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// First stored column of each (permuted) row.
    first: Vec<usize>,
    /// Offset of each row's envelope inside `data`; row `i` holds columns
    /// `first[i]..=i`.
    offset: Vec<usize>,
    data: Vec<f64>,
}

/// Reverse Cuthill–McKee ordering; `result[new] = old`.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        // start from a pseudo-peripheral node: the last BFS layer of the seed
        let start = last_bfs_node(adj, seed, &degree);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (degree[u], u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

fn last_bfs_node(adj: &[Vec<usize>], seed: usize, degree: &[usize]) -> usize {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[seed] = 0;
    let mut queue = VecDeque::from([seed]);
    let mut best = seed;
    while let Some(v) = queue.pop_front() {
        if (dist[v], std::cmp::Reverse(degree[v])) > (dist[best], std::cmp::Reverse(degree[best])) {
            best = v;
        }
        for &u in &adj[v] {
            if dist[u] == usize::MAX {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
        }
    }
    best
}

impl EnvelopeCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<EnvelopeCholesky> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(&a.adjacency());
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inv[old];
            for (j_old, _) in a.row(old) {
                let j = inv[j_old];
                if j < i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut offset = vec![0; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; offset[n]];
        for old in 0..n {
            let i = inv[old];
            for (j_old, v) in a.row(old) {
                let j = inv[j_old];
                if j <= i {
                    data[offset[i] + j - first[i]] += v;
                }
            }
        }
        let mut f = EnvelopeCholesky {
            perm,
            first,
            offset,
            data,
        };
        f.factor_in_place()?;
        Ok(f)
    }

    fn factor_in_place(&mut self) -> Result<()> {
        let n = self.first.len();
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offset[i];
            for j in fi..i {
                let fj = self.first[j];
                let oj = self.offset[j];
                let k0 = fi.max(fj);
                let mut s = self.data[oi + j - fi];
                let row_i = &self.data[oi + k0 - fi..oi + j - fi];
                let row_j = &self.data[oj + k0 - fj..oj + j - fj];
                s -= row_i.iter().zip(row_j).map(|(a, b)| a * b).sum::<f64>();
                let djj = self.data[oj + j - fj];
                self.data[oi + j - fi] = s / djj;
            }
            let row = &self.data[oi..oi + i - fi];
            let d = self.data[oi + i - fi] - row.iter().map(|x| x * x).sum::<f64>();
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite {
                    pivot: self.perm[i],
                    value: d,
                });
            }
            self.data[oi + i - fi] = d.sqrt();
        }
        Ok(())
    }

    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.first.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offset[i];
            let s: f64 = self.data[oi..oi + i - fi]
                .iter()
                .zip(&y[fi..i])
                .map(|(l, y)| l * y)
                .sum();
            y[i] = (y[i] - s) / self.data[oi + i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let oi = self.offset[i];
            y[i] /= self.data[oi + i - fi];
            let yi = y[i];
            for (k, l) in (fi..i).zip(&self.data[oi..oi + i - fi]) {
                y[k] -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}
