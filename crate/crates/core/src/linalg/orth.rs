use super::matrix::{dot, norm2, DenseMatrix};

/// Orthonormal basis for the numerically significant column span of `y`.
///
/// Column-pivoted Gram-Schmidt with a second orthogonalization pass. At each
/// step the remaining column with the largest residual norm is taken (lowest
/// index on ties); the process stops once that norm is at most `tol`. The
/// number of returned columns is the numerical rank of `y` at `tol`.
pub fn orthonormalize(y: &DenseMatrix, tol: f64) -> DenseMatrix {
    let m = y.rows();
    let mut residual = y.columns();
    let mut taken = vec![false; residual.len()];
    let mut basis: Vec<Vec<f64>> = Vec::new();

    while basis.len() < m {
        let mut pick: Option<(usize, f64)> = None;
        for (j, col) in residual.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let nrm = norm2(col);
            if pick.is_none_or(|(_, best)| nrm > best) {
                pick = Some((j, nrm));
            }
        }
        let Some((j, nrm)) = pick else { break };
        if !(nrm > tol) {
            break;
        }
        taken[j] = true;
        let mut q = residual[j].clone();
        for b in &basis {
            let proj = dot(b, &q);
            for (x, y) in q.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
        let qn = norm2(&q);
        if !(qn > tol) {
            continue;
        }
        q.iter_mut().for_each(|x| *x /= qn);
        for (k, col) in residual.iter_mut().enumerate() {
            if taken[k] {
                continue;
            }
            let proj = dot(&q, col);
            for (x, y) in col.iter_mut().zip(&q) {
                *x -= proj * y;
            }
        }
        basis.push(q);
    }
    DenseMatrix::from_columns(m, &basis)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_input() {
        let y = DenseMatrix::from_rows(&[[2.0, 0.0], [0.0, 0.0]]).unwrap();
        let q = orthonormalize(&y, 1e-12);
        assert_eq!(q, DenseMatrix::from_rows(&[[1.0], [0.0]]).unwrap());
    }

    #[test]
    fn identity_stays_identity() {
        assert_eq!(orthonormalize(&DenseMatrix::identity(3), 1e-12), DenseMatrix::identity(3));
    }

    #[test]
    fn zero_matrix_is_empty() {
        let q = orthonormalize(&DenseMatrix::zeros(4, 3), 1e-12);
        assert_eq!(q.shape(), (4, 0));
    }

    #[test]
    fn wide_input_caps_at_row_count() {
        let mut rng = crate::basis::RngStream::from_sub_seed(4);
        let y = DenseMatrix::from_fn(3, 6, |_, _| rng.next_gaussian());
        let q = orthonormalize(&y, 1e-12);
        assert_eq!(q.shape(), (3, 3));
    }
}
