//! Small dense linear algebra with respect to an SPD metric: inner
//! products, modified Gram-Schmidt, projections, and Gauss-Jordan
//! inversion over jets.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::jet::Jet2;
use crate::error::{GeomError, Result};

/// Vectors whose post-projection g-norm falls below this are dropped
/// during orthonormalization; one order above accumulated jet round-off.
pub const RANK_TOL: f64 = 1e-10;

/// Maximum deviation from the identity Gram matrix accepted when a caller
/// passes a basis it claims is g-orthonormal.
pub const ORTHO_TOL: f64 = 1e-8;

/// aᵀ G b
pub fn g_dot(metric: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(&(metric * b))
}

pub fn g_norm(metric: &DMatrix<f64>, a: &DVector<f64>) -> f64 {
    g_dot(metric, a, a).max(0.0).sqrt()
}

pub fn spd_cholesky(metric: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(metric.clone()).ok_or(GeomError::MetricNotSpd)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Modified Gram-Schmidt with one re-orthogonalization pass, with respect
/// to the metric `g`. Returns the g-orthonormal basis of the span together
/// with its dimension; dependent vectors are dropped, not reported as
/// errors.
pub fn orthonormalize(
    vectors: &[DVector<f64>],
    metric: &DMatrix<f64>,
) -> Result<(Vec<DVector<f64>>, usize)> {
    spd_cholesky(metric)?;
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = g_dot(metric, &w, b);
                w -= b * c;
            }
        }
        let norm = g_norm(metric, &w);
        if norm >= RANK_TOL {
            basis.push(w / norm);
        }
    }
    let rank = basis.len();
    Ok((basis, rank))
}

/// Check that `basis` is g-orthonormal to [`ORTHO_TOL`].
fn check_orthonormal(basis: &[DVector<f64>], metric: &DMatrix<f64>) -> Result<()> {
    let mut dev = 0.0f64;
    for (i, a) in basis.iter().enumerate() {
        for (j, b) in basis.iter().enumerate() {
            let expect = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((g_dot(metric, a, b) - expect).abs());
        }
    }
    if dev > ORTHO_TOL {
        return Err(GeomError::NonOrthonormalBasis { deviation: dev });
    }
    Ok(())
}

/// Split `v` into its component in the span of a g-orthonormal `basis`
/// and the g-orthogonal residual, so `v = component + residual`.
pub fn metric_project(
    v: &DVector<f64>,
    basis: &[DVector<f64>],
    metric: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_orthonormal(basis, metric)?;
    let mut component = DVector::zeros(v.len());
    for b in basis {
        let c = g_dot(metric, v, b);
        component += b * c;
    }
    let residual = v - &component;
    Ok((component, residual))
}

/// Extend a g-orthonormal partial basis to a full g-orthonormal basis of
/// the ambient space using the coordinate directions, returning only the
/// new vectors (the g-orthocomplement basis).
pub fn complete_basis(
    partial: &[DVector<f64>],
    metric: &DMatrix<f64>,
) -> Result<Vec<DVector<f64>>> {
    let dim = metric.nrows();
    let mut candidates: Vec<DVector<f64>> = partial.to_vec();
    for i in 0..dim {
        let mut e = DVector::zeros(dim);
        e[i] = 1.0;
        candidates.push(e);
    }
    let (full, rank) = orthonormalize(&candidates, metric)?;
    if rank != dim {
        return Err(GeomError::RankDeficient {
            rank,
            expected: dim,
        });
    }
    Ok(full[partial.len()..].to_vec())
}

/// Gauss-Jordan inversion of a matrix with jet entries, pivoting on the
/// value part. Returns `None` when a pivot value falls below 1e-13.
pub fn invert_jet_matrix(m: &[Vec<Jet2>]) -> Option<Vec<Vec<Jet2>>> {
    let n = m.len();
    if n == 0 || m.iter().any(|row| row.len() != n) {
        return None;
    }
    let k = m[0][0].arity();
    let mut a: Vec<Vec<Jet2>> = m.to_vec();
    let mut inv: Vec<Vec<Jet2>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| Jet2::constant(if i == j { 1.0 } else { 0.0 }, k))
                .collect()
        })
        .collect();
    for col in 0..n {
        let pivot_row = (col..n).max_by(|&r, &s| {
            a[r][col]
                .value
                .abs()
                .partial_cmp(&a[s][col].value.abs())
                .unwrap()
        })?;
        if a[pivot_row][col].value.abs() < 1e-13 {
            return None;
        }
        a.swap(col, pivot_row);
        inv.swap(col, pivot_row);
        let pivot = a[col][col].clone();
        for j in 0..n {
            a[col][j] = a[col][j].div(&pivot).ok()?;
            inv[col][j] = inv[col][j].div(&pivot).ok()?;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[r][col].clone();
            if factor.value == 0.0 && factor.grad.iter().all(|&x| x == 0.0) {
                continue;
            }
            for j in 0..n {
                let t = factor.mul(&a[col][j]);
                a[r][j] = a[r][j].sub(&t);
                let t = factor.mul(&inv[col][j]);
                inv[r][j] = inv[r][j].sub(&t);
            }
        }
    }
    Some(inv)
}
