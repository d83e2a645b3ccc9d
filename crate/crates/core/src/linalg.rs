//! Dense linear algebra helpers on top of `faer`.
//!
//! Vectors are plain `Vec<f64>` / `&[f64]`; matrices are column-major `faer::Mat<f64>`.

use faer::linalg::solvers::PartialPivLu;
use faer::prelude::*;
use faer::{Mat, Side};

/// `y = A x`.
pub fn mat_vec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.ncols(), x.len());
    let mut y = vec![0.0; a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        for (yi, aij) in y.iter_mut().zip(a.col_as_slice(j)) {
            *yi += aij * xj;
        }
    }
    y
}

/// `y = Aᵀ x`.
pub fn mat_t_vec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.nrows(), x.len());
    (0..a.ncols()).map(|j| dot(a.col_as_slice(j), x)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Row `i` of `a` as an owned vector.
pub fn row(a: &Mat<f64>, i: usize) -> Vec<f64> {
    (0..a.ncols()).map(|j| a.read(i, j)).collect()
}

/// Stacks the selected rows of several matrices (all with the same column count).
pub fn stack_rows(ncols: usize, blocks: &[(&Mat<f64>, &[usize])]) -> Mat<f64> {
    let nrows: usize = blocks.iter().map(|(_, rows)| rows.len()).sum();
    let mut out = Mat::zeros(nrows, ncols);
    let mut r = 0;
    for (m, rows) in blocks {
        debug_assert_eq!(m.ncols(), ncols);
        for &i in rows.iter() {
            for j in 0..ncols {
                out.write(r, j, m.read(i, j));
            }
            r += 1;
        }
    }
    out
}

/// LU factorization with partial pivoting plus a 1-norm condition estimate.
pub struct Lu {
    lu: PartialPivLu<f64>,
    norm1: f64,
    dim: usize,
}

impl Lu {
    pub fn factor(a: &Mat<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "LU needs a square matrix");
        let norm1 = (0..a.ncols())
            .map(|j| a.col_as_slice(j).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Lu {
            lu: a.partial_piv_lu(),
            norm1,
            dim: a.nrows(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let x = self.lu.solve(faer::col::from_slice(b));
        x.as_slice().to_vec()
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let x = self.lu.solve_transpose(faer::col::from_slice(b));
        x.as_slice().to_vec()
    }

    /// Reciprocal 1-norm condition number estimate, `1 / (‖A‖₁ · est(‖A⁻¹‖₁))`.
    ///
    /// Uses Hager's power iteration on `‖A⁻¹‖₁` with Higham's alternating-sign
    /// safeguard vector. Exactly singular or non-finite factorizations give `0`.
    pub fn rcond(&self) -> f64 {
        let n = self.dim;
        if n == 0 {
            return 1.0;
        }
        if self.norm1 == 0.0 || !self.norm1.is_finite() {
            return 0.0;
        }
        let inv_norm = self.inverse_norm1_estimate();
        if !inv_norm.is_finite() {
            return 0.0;
        }
        if inv_norm == 0.0 {
            return 0.0;
        }
        1.0 / (self.norm1 * inv_norm)
    }

    fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.dim;
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for iter in 0..5 {
            let y = self.solve(&x);
            if y.iter().any(|v| !v.is_finite()) {
                return f64::INFINITY;
            }
            let y_norm: f64 = y.iter().map(|v| v.abs()).sum();
            if iter > 0 && y_norm <= est {
                break;
            }
            est = y_norm;
            let xi: Vec<f64> = y.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_transpose(&xi);
            if z.iter().any(|v| !v.is_finite()) {
                return f64::INFINITY;
            }
            let (j, zj) = z
                .iter()
                .enumerate()
                .fold((0, 0.0), |(bj, bv), (i, &v)| if v.abs() > bv { (i, v.abs()) } else { (bj, bv) });
            if iter > 0 && (zj <= dot(&z, &x) || j == last_j) {
                break;
            }
            last_j = j;
            x.iter_mut().for_each(|v| *v = 0.0);
            x[j] = 1.0;
        }
        let alt: Vec<f64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
            })
            .collect();
        let y = self.solve(&alt);
        if y.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        let alt_est = 2.0 * y.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
        est.max(alt_est)
    }
}

/// Singular values in non-increasing order.
pub fn singular_values(a: &Mat<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s = a.singular_values();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(a: &Mat<f64>, rel_tol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        None => 0,
        Some(0.0) => 0,
        Some(&smax) => s.iter().filter(|&&v| v > rel_tol * smax).count(),
    }
}

pub fn has_full_row_rank(a: &Mat<f64>, rel_tol: f64) -> bool {
    a.nrows() == 0 || (a.nrows() <= a.ncols() && numerical_rank(a, rel_tol) == a.nrows())
}

/// Orthonormal basis (as columns) of the null space of `a` with `ncols` columns.
pub fn kernel_basis(a: &Mat<f64>, ncols: usize, rel_tol: f64) -> Mat<f64> {
    if a.nrows() == 0 {
        return Mat::from_fn(ncols, ncols, |i, j| if i == j { 1.0 } else { 0.0 });
    }
    let svd = a.svd();
    let s = svd.s_diagonal();
    let smax = (0..s.nrows()).map(|i| s.read(i)).fold(0.0, f64::max);
    let rank = (0..s.nrows()).filter(|&i| s.read(i) > rel_tol * smax && smax > 0.0).count();
    let v = svd.v();
    Mat::from_fn(ncols, ncols - rank, |i, j| v.read(i, rank + j))
}

/// Smallest eigenvalue of a symmetric matrix (lower triangle is read).
pub fn symmetric_min_eigenvalue(a: &Mat<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    a.selfadjoint_eigenvalues(Side::Lower)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// `Zᵀ A Z`.
pub fn congruence(a: &Mat<f64>, z: &Mat<f64>) -> Mat<f64> {
    z.transpose() * a * z
}
