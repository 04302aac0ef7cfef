//! Small sparse helpers on top of `nalgebra-sparse`.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};

pub fn csr_from_triplets(
    nrows: usize,
    ncols: usize,
    triplets: impl IntoIterator<Item = (usize, usize, f64)>,
) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(nrows, ncols);
    for (i, j, v) in triplets {
        coo.push(i, j, v);
    }
    CsrMatrix::from(&coo)
}

pub fn matvec(a: &CsrMatrix<f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.ncols(), x.len());
    a.row_iter()
        .map(|row| {
            row.col_indices()
                .iter()
                .zip(row.values())
                .map(|(&j, &v)| v * x[j])
                .sum()
        })
        .collect()
}

pub fn matvec_t(a: &CsrMatrix<f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.nrows(), x.len());
    let mut out = vec![0.0; a.ncols()];
    for (i, row) in a.row_iter().enumerate() {
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            out[j] += v * x[i];
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `x^T A y`
pub fn inner(a: &CsrMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    dot(x, &matvec(a, y))
}

pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn to_dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        d[(i, j)] += *v;
    }
    d
}

/// Reverse Cuthill-McKee ordering of a structurally symmetric matrix.
fn reverse_cuthill_mckee(a: &CsrMatrix<f64>) -> Vec<usize> {
    let n = a.nrows();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).nnz()).collect();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    let mut queue = VecDeque::new();
    for &start in &by_degree {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = a
                .row(v)
                .col_indices()
                .iter()
                .copied()
                .filter(|&w| !seen[w])
                .collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order.reverse();
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotPositiveDefinite;

/// Sparse Cholesky factorization of an SPD matrix with a bandwidth-reducing
/// ordering.
pub struct SpdSolver {
    order: Vec<usize>,
    chol: Option<CscCholesky<f64>>,
}

impl SpdSolver {
    pub fn new(a: &CsrMatrix<f64>) -> Result<Self, NotPositiveDefinite> {
        assert_eq!(a.nrows(), a.ncols());
        let n = a.nrows();
        if n == 0 {
            return Ok(Self {
                order: Vec::new(),
                chol: None,
            });
        }
        let order = reverse_cuthill_mckee(a);
        let mut position = vec![0; n];
        for (p, &i) in order.iter().enumerate() {
            position[i] = p;
        }
        let mut coo = CooMatrix::new(n, n);
        for (i, j, v) in a.triplet_iter() {
            coo.push(position[i], position[j], *v);
        }
        let csc = CscMatrix::from(&coo);
        let chol = CscCholesky::factor(&csc).map_err(|_| NotPositiveDefinite)?;
        Ok(Self {
            order,
            chol: Some(chol),
        })
    }

    pub fn dim(&self) -> usize {
        self.order.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let Some(chol) = &self.chol else {
            return Vec::new();
        };
        let pb = DMatrix::from_iterator(b.len(), 1, self.order.iter().map(|&i| b[i]));
        let px = chol.solve(&pb);
        let mut x = vec![0.0; b.len()];
        for (p, &i) in self.order.iter().enumerate() {
            x[i] = px[(p, 0)];
        }
        x
    }
}
