//! Sparse symmetric matrices on the vertex graph and a preconditioned CG solver.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Topology;

/// Compressed-row sparsity pattern of a vertex-vertex operator.
///
/// `tri_slots[t][i][j]` is the storage index of entry `(tri[i], tri[j])`, so
/// per-triangle element matrices scatter without searching.
#[derive(Debug)]
pub struct CsrPattern {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    diag: Vec<usize>,
    tri_slots: Vec<[[usize; 3]; 3]>,
}

impl CsrPattern {
    pub fn from_topology(topology: &Topology) -> Self {
        let n = topology.n_vertices();
        let mut neighbors: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
        for &[a, b] in topology.edges() {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut diag = Vec::with_capacity(n);
        row_ptr.push(0);
        for (v, row) in neighbors.iter_mut().enumerate() {
            row.sort_unstable();
            diag.push(col_idx.len() + row.binary_search(&v).unwrap());
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let find = |i: usize, j: usize| -> usize {
            let row = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            row_ptr[i] + row.binary_search(&j).expect("edge in pattern")
        };
        let tri_slots = topology
            .triangles()
            .iter()
            .map(|tri| {
                let mut s = [[0usize; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        s[i][j] = find(tri[i], tri[j]);
                    }
                }
                s
            })
            .collect();
        Self { row_ptr, col_idx, diag, tri_slots }
    }

    pub fn n_rows(&self) -> usize {
        self.diag.len()
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn triangle_slots(&self, t: usize) -> &[[usize; 3]; 3] {
        &self.tri_slots[t]
    }
}

/// Sparse matrix sharing a [`CsrPattern`].
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pattern: Arc<CsrPattern>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<CsrPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    pub fn n_rows(&self) -> usize {
        self.pattern.n_rows()
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let p = &self.pattern;
        let row = &p.col_idx[p.row_ptr[i]..p.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.values[p.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn add_diagonal(&mut self, d: &[f64]) {
        for (v, &x) in d.iter().enumerate() {
            self.values[self.pattern.diag[v]] += x;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.pattern.diag.iter().map(|&k| self.values[k]).collect()
    }

    /// `self * alpha + diag(d)`, keeping the pattern.
    pub fn scaled_plus_diagonal(&self, alpha: f64, d: &[f64]) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|x| *x *= alpha);
        out.add_diagonal(d);
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let p = &self.pattern;
        (0..self.n_rows()).map(|i| self.values[p.row_ptr[i]..p.row_ptr[i + 1]].iter().sum()).collect()
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        let p = &self.pattern;
        for i in 0..self.n_rows() {
            let mut s = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                s += self.values[k] * x[p.col_idx[k]];
            }
            y[i] = s;
        }
    }

    /// Row-wise off-diagonal entries, used by the M-matrix checks.
    pub fn off_diagonal(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let p = &self.pattern;
        (0..self.n_rows()).flat_map(move |i| {
            (p.row_ptr[i]..p.row_ptr[i + 1])
                .filter(move |&k| p.col_idx[k] != i)
                .map(move |k| (i, p.col_idx[k], self.values[k]))
        })
    }
}

/// Outcome of a converged solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// definite `a`. `x` holds the initial guess and receives the solution.
pub fn pcg(a: &CsrMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats> {
    let n = a.n_rows();
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    a.mul_vec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / b_norm;
    for it in 0..max_iter {
        if res <= tol {
            return Ok(SolveStats { iterations: it, relative_residual: res });
        }
        a.mul_vec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if res <= tol {
        return Ok(SolveStats { iterations: max_iter, relative_residual: res });
    }
    Err(Error::SolverFailure { residual: res, iterations: max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::builtin::icosphere;

    fn shifted_graph_laplacian(subdiv: u32) -> CsrMatrix {
        let m = icosphere(subdiv, 1.0).unwrap();
        let pattern = Arc::new(CsrPattern::from_topology(m.topology_arc()));
        let mut a = CsrMatrix::zeros(pattern.clone());
        for t in 0..m.topology_arc().n_triangles() {
            let s = *pattern.triangle_slots(t);
            for i in 0..3 {
                for j in 0..3 {
                    a.values_mut()[s[i][j]] += if i == j { 1.0 } else { -0.5 };
                }
            }
        }
        a.add_diagonal(&vec![0.3; m.n_vertices()]);
        a
    }

    #[test]
    fn pcg_solves_shifted_graph_laplacian() {
        let a = shifted_graph_laplacian(2);
        let n = a.n_rows();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; n];
        a.mul_vec(&x_true, &mut b);
        let mut x = vec![0.0; n];
        let stats = pcg(&a, &b, &mut x, 1e-13, 500).unwrap();
        assert!(stats.relative_residual <= 1e-13);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn pcg_reports_failure() {
        let a = shifted_graph_laplacian(2);
        let b: Vec<f64> = (0..a.n_rows()).map(|i| (i % 7) as f64).collect();
        let mut x = vec![0.0; a.n_rows()];
        assert!(matches!(pcg(&a, &b, &mut x, 1e-14, 2), Err(Error::SolverFailure { .. })));
    }
}
