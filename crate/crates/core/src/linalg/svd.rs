//! Full singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! Jacobi is slower than Golub-Kahan for large inputs but gives high relative
//! accuracy and a simple, fully deterministic operation order. Both `U` and
//! `V` are returned square; left vectors that the rotations do not determine
//! (zero singular values, or `m > n`) are completed from the standard basis.

use super::matrix::{dot, norm2, DenseMatrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;
const ORTHO_TOL: f64 = 1e-15;

/// `W = U diag(sigma) V^T` with square orthogonal `U` (m x m) and `V` (n x n).
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdFactors {
    pub fn m(&self) -> usize {
        self.u.rows()
    }

    pub fn n(&self) -> usize {
        self.v.rows()
    }

    /// `U diag(sigma) V^T`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let (m, n) = (self.m(), self.n());
        let k = self.sigma.len();
        let us = DenseMatrix::from_fn(m, k, |i, j| self.u.get(i, j) * self.sigma[j]);
        let vt = DenseMatrix::from_fn(k, n, |i, j| self.v.get(j, i));
        us.matmul(&vt).expect("factor shapes agree")
    }
}

/// Full SVD with canonical signs: within each column of `U` the entry of
/// largest magnitude (lowest row on ties) is non-negative, and the paired
/// column of `V` is flipped with it.
pub fn svd_full(w: &DenseMatrix) -> Result<SvdFactors> {
    if w.is_empty() {
        return Err(Error::Empty("svd_full"));
    }
    let (m, n) = w.shape();
    let (mut ucols, sigma, mut vcols) = if m >= n {
        let (u, s, v) = jacobi_tall(w)?;
        (u, s, v)
    } else {
        let (u, s, v) = jacobi_tall(&w.transpose())?;
        (v, s, u)
    };

    let k = sigma.len();
    for j in 0..ucols.len() {
        if leading_sign_negative(&ucols[j]) {
            negate(&mut ucols[j]);
            if j < k {
                negate(&mut vcols[j]);
            }
        }
    }
    for col in vcols.iter_mut().skip(k) {
        if leading_sign_negative(col) {
            negate(col);
        }
    }

    Ok(SvdFactors {
        u: DenseMatrix::from_columns(m, &ucols),
        sigma,
        v: DenseMatrix::from_columns(n, &vcols),
    })
}

/// Thin Jacobi on an `m x n` input with `m >= n`. Returns `m` left columns
/// (completed), `n` singular values in non-increasing order and `n` right columns.
fn jacobi_tall(a: &DenseMatrix) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>)> {
    let (m, n) = a.shape();
    let mut cols = a.columns();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = n < 2;
    for _sweep in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= ORTHO_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence {
            iterations: MAX_SWEEPS,
        });
    }

    let norms: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps lower index first on ties
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let vcols: Vec<Vec<f64>> = order.iter().map(|&j| v[j].clone()).collect();

    let smax = sigma.first().copied().unwrap_or(0.0);
    let cutoff = smax * (m as f64) * f64::EPSILON;
    let mut ucols: Vec<Option<Vec<f64>>> = order
        .iter()
        .zip(&sigma)
        .map(|(&j, &s)| {
            if s > cutoff && s > 0.0 {
                Some(cols[j].iter().map(|x| x / s).collect())
            } else {
                None
            }
        })
        .collect();
    ucols.resize(m, None);
    let ucols = complete_orthonormal(m, ucols);
    Ok((ucols, sigma, vcols))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills the `None` slots with unit vectors orthogonal to every other slot.
///
/// Candidates are standard basis vectors taken in order; one is accepted when
/// its residual after two Gram-Schmidt passes is at least `0.5/sqrt(m)`. A
/// counting argument on `sum_i |P e_i|^2 = m - dim` guarantees enough accepts.
pub(crate) fn complete_orthonormal(m: usize, slots: Vec<Option<Vec<f64>>>) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = slots.iter().flatten().cloned().collect();
    let missing = slots.iter().filter(|s| s.is_none()).count();
    let mut fresh = Vec::with_capacity(missing);
    let threshold = 0.5 / (m as f64).sqrt();
    let mut candidate = 0;
    while fresh.len() < missing && candidate < m {
        let mut e = vec![0.0; m];
        e[candidate] = 1.0;
        candidate += 1;
        for _ in 0..2 {
            for b in &basis {
                let proj = dot(b, &e);
                for (x, y) in e.iter_mut().zip(b) {
                    *x -= proj * y;
                }
            }
        }
        let nrm = norm2(&e);
        if nrm >= threshold {
            e.iter_mut().for_each(|x| *x /= nrm);
            basis.push(e.clone());
            fresh.push(e);
        }
    }
    assert_eq!(fresh.len(), missing, "orthonormal completion ran out of candidates");
    let mut fresh = fresh.into_iter();
    slots
        .into_iter()
        .map(|s| s.unwrap_or_else(|| fresh.next().expect("counted above")))
        .collect()
}

fn leading_sign_negative(col: &[f64]) -> bool {
    let mut best = 0;
    for (i, x) in col.iter().enumerate() {
        if x.abs() > col[best].abs() {
            best = i;
        }
    }
    col.get(best).is_some_and(|&x| x < 0.0)
}

fn negate(col: &mut [f64]) {
    col.iter_mut().for_each(|x| *x = -*x);
}
