use rayon::prelude::*;

use super::matrix::{dot, DenseMatrix};
use crate::error::{Error, Result};

/// Relative pivot size below which an unregularized Gram matrix is treated as singular.
const SINGULAR_PIVOT: f64 = 1e-12;
/// Ridge used on retry, as a fraction of the mean Gram diagonal.
const FALLBACK_RIDGE: f64 = 1e-10;

/// Solution of a (possibly ridge-regularized) least-squares problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub solution: Vec<f64>,
    /// Ridge actually applied to the Gram diagonal.
    pub ridge: f64,
    /// True when the requested ridge was zero but the Gram matrix was singular,
    /// so the solve was retried with `1e-10 * trace(G) / q`.
    pub regularized: bool,
}

/// `argmin_x |design x - target|^2 + ridge |x|^2` through the `q x q` Gram
/// system and a Cholesky factorization.
pub fn solve_least_squares(design: &DenseMatrix, target: &[f64], ridge: f64) -> Result<LeastSquares> {
    let (p, q) = design.shape();
    if p == 0 || q == 0 {
        return Err(Error::Empty("solve_least_squares"));
    }
    if target.len() != p {
        return Err(Error::DimensionMismatch {
            op: "solve_least_squares",
            left: design.shape(),
            right: (target.len(), 1),
        });
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Invalid(format!("ridge must be finite and >= 0, got {ridge}")));
    }

    let columns = design.columns();
    let gram = gram_matrix(&columns);
    let rhs: Vec<f64> = columns.iter().map(|c| dot(c, target)).collect();
    solve_gram(&gram, &rhs, ridge)
}

/// Solves `(G + ridge I) x = rhs` for a symmetric positive semi-definite `G`
/// given as dense rows, applying the singular-Gram fallback.
pub(crate) fn solve_gram(gram: &[Vec<f64>], rhs: &[f64], ridge: f64) -> Result<LeastSquares> {
    let q = rhs.len();
    if ridge > 0.0 {
        return match cholesky_solve(gram, rhs, ridge, false) {
            Some(solution) => Ok(LeastSquares {
                solution,
                ridge,
                regularized: false,
            }),
            None => Err(Error::Singular("ridge-regularized Gram matrix")),
        };
    }
    if let Some(solution) = cholesky_solve(gram, rhs, 0.0, true) {
        return Ok(LeastSquares {
            solution,
            ridge: 0.0,
            regularized: false,
        });
    }
    let trace: f64 = (0..q).map(|i| gram[i][i]).sum();
    if trace == 0.0 {
        // all-zero design: every x is a minimizer, return the minimum-norm one
        return Ok(LeastSquares {
            solution: vec![0.0; q],
            ridge: 0.0,
            regularized: true,
        });
    }
    let fallback = FALLBACK_RIDGE * trace / q as f64;
    cholesky_solve(gram, rhs, fallback, false)
        .map(|solution| LeastSquares {
            solution,
            ridge: fallback,
            regularized: true,
        })
        .ok_or(Error::Singular("Gram matrix after ridge fallback"))
}

pub(crate) fn gram_matrix(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let q = columns.len();
    let upper: Vec<Vec<f64>> = (0..q)
        .into_par_iter()
        .map(|a| (a..q).map(|b| dot(&columns[a], &columns[b])).collect())
        .collect();
    let mut gram = vec![vec![0.0; q]; q];
    for a in 0..q {
        for b in a..q {
            let v = upper[a][b - a];
            gram[a][b] = v;
            gram[b][a] = v;
        }
    }
    gram
}

fn cholesky_solve(gram: &[Vec<f64>], rhs: &[f64], ridge: f64, strict: bool) -> Option<Vec<f64>> {
    let q = rhs.len();
    let max_diag = (0..q).map(|i| gram[i][i] + ridge).fold(0.0_f64, f64::max);
    let floor = if strict { SINGULAR_PIVOT * max_diag } else { 0.0 };
    let mut l = vec![vec![0.0; q]; q];
    for j in 0..q {
        let mut d = gram[j][j] + ridge;
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > floor) {
            return None;
        }
        let djj = d.sqrt();
        l[j][j] = djj;
        for i in j + 1..q {
            let mut s = gram[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / djj;
        }
    }
    let mut y = vec![0.0; q];
    for i in 0..q {
        let mut s = rhs[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; q];
    for i in (0..q).rev() {
        let mut s = y[i];
        for k in i + 1..q {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}
