//! Ridge Gram matrices and weighted least squares on small dense problems.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Gram {
    pub matrix: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
}

impl Gram {
    pub fn ridge(dim: usize, alpha: f64) -> Self {
        Self { matrix: DMatrix::identity(dim, dim) * alpha, inverse: DMatrix::identity(dim, dim) / alpha }
    }

    /// αI + Σ c·x xᵀ. Returns `None` if the result is not positive definite.
    pub fn build<'a, I>(dim: usize, alpha: f64, rows: I) -> Option<Self>
    where
        I: IntoIterator<Item = (&'a [f64], f64)>,
    {
        let mut m = DMatrix::identity(dim, dim) * alpha;
        for (x, c) in rows {
            add_outer(&mut m, x, c);
        }
        let inverse = m.clone().cholesky()?.inverse();
        Some(Self { matrix: m, inverse })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Rank-one update with Sherman–Morrison on the inverse.
    pub fn add(&mut self, x: &[f64], c: f64) {
        add_outer(&mut self.matrix, x, c);
        let v = DVector::from_column_slice(x);
        let u = &self.inverse * &v;
        let denom = 1.0 + c * v.dot(&u);
        self.inverse -= (&u * u.transpose()) * (c / denom);
    }

    /// ‖x‖²_{Σ⁻¹}.
    pub fn inv_norm_sq(&self, x: &[f64]) -> f64 {
        quad(&self.inverse, x).max(0.0)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        (&self.inverse * DVector::from_column_slice(b)).iter().copied().collect()
    }
}

pub fn add_outer(m: &mut DMatrix<f64>, x: &[f64], c: f64) {
    let d = x.len();
    for i in 0..d {
        if x[i] == 0.0 {
            continue;
        }
        let ci = c * x[i];
        for j in 0..d {
            m[(i, j)] += ci * x[j];
        }
    }
}

/// xᵀ A x.
pub fn quad(a: &DMatrix<f64>, x: &[f64]) -> f64 {
    let d = x.len();
    let mut total = 0.0;
    for i in 0..d {
        if x[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in 0..d {
            row += a[(i, j)] * x[j];
        }
        total += x[i] * row;
    }
    total
}

/// argmin α‖θ‖² + Σ c (⟨x, θ⟩ − y)² via the normal equations.
pub fn ridge_solve<'a, I>(dim: usize, alpha: f64, rows: I) -> Option<Vec<f64>>
where
    I: IntoIterator<Item = (&'a [f64], f64, f64)>,
{
    let mut m = DMatrix::identity(dim, dim) * alpha;
    let mut b = DVector::zeros(dim);
    for (x, y, c) in rows {
        add_outer(&mut m, x, c);
        for (bi, xi) in b.iter_mut().zip(x) {
            *bi += c * y * xi;
        }
    }
    let sol = m.cholesky()?.solve(&b);
    Some(sol.iter().copied().collect())
}

/// Unit eigenvector of the smallest eigenvalue of a symmetric matrix, with its
/// first non-negligible entry made positive so the choice is deterministic.
pub fn min_eigenvector(m: &DMatrix<f64>) -> Vec<f64> {
    let eig = m.clone().symmetric_eigen();
    let (mut idx, mut best) = (0, f64::INFINITY);
    for (i, &v) in eig.eigenvalues.iter().enumerate() {
        if v < best - 1e-12 {
            best = v;
            idx = i;
        }
    }
    let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    v
}
