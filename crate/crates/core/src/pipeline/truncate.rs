use super::AdapterPair;
use crate::error::{Error, Result};
use crate::linalg::{svd_full, DenseMatrix, SvdFactors};

/// Best rank-`t` factorization of an update together with its discarded energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    /// `B = U_t diag(s_t)`, `A = V_t^T`. Rank 0 gives empty factors.
    pub adapter: AdapterPair,
    /// `sqrt(sum_{i > t} s_i^2)`.
    pub residual: f64,
}

/// Rank-`t` truncated SVD of `delta_w`.
pub fn svd_truncate(delta_w: &DenseMatrix, rank: usize) -> Result<Truncation> {
    let (m, n) = delta_w.shape();
    if rank > m.min(n) {
        return Err(Error::Invalid(format!(
            "truncation rank {rank} exceeds min(m, n) = {}",
            m.min(n)
        )));
    }
    let svd = svd_full(delta_w)?;
    Ok(svd_truncate_from(&svd, rank))
}

pub(crate) fn svd_truncate_from(svd: &SvdFactors, rank: usize) -> Truncation {
    let (m, n) = (svd.m(), svd.n());
    let residual = svd.sigma[rank..].iter().map(|s| s * s).sum::<f64>().sqrt();
    if rank == 0 {
        return Truncation {
            adapter: AdapterPair::zero(m, n),
            residual,
        };
    }
    let b = DenseMatrix::from_fn(m, rank, |i, j| svd.u.get(i, j) * svd.sigma[j]);
    let a = DenseMatrix::from_fn(rank, n, |i, j| svd.v.get(j, i));
    Truncation {
        adapter: AdapterPair::from_parts_unchecked(a, b),
        residual,
    }
}

/// Count of singular values above `tol`, defaulting to `s_max * dim * eps`.
pub fn numerical_rank(sigma: &[f64], dim: usize, tol: Option<f64>) -> usize {
    let s_max = sigma.first().copied().unwrap_or(0.0);
    let tol = tol.unwrap_or(s_max * dim as f64 * f64::EPSILON);
    sigma.iter().filter(|&&s| s > tol).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::RngStream;

    #[test]
    fn diagonal_examples() {
        let d = DenseMatrix::from_rows(&[[4.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let t = svd_truncate(&d, 1).unwrap();
        let expect = DenseMatrix::from_rows(&[[4.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        assert!(t.adapter.delta().sub(&expect).unwrap().frobenius_norm() < 1e-12);
        assert!((t.residual - 5f64.sqrt()).abs() < 1e-12);

        let zero = svd_truncate(&d, 0).unwrap();
        assert_eq!(zero.adapter.rank(), 0);
        assert_eq!(zero.adapter.delta(), DenseMatrix::zeros(3, 3));
        assert!((zero.residual - 21f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn full_rank_is_exact_and_residual_matches() {
        let mut rng = RngStream::from_sub_seed(3);
        let w = DenseMatrix::from_fn(5, 4, |_, _| rng.next_gaussian());
        let full = svd_truncate(&w, 4).unwrap();
        assert!(full.adapter.delta().sub(&w).unwrap().frobenius_norm() < 1e-10);
        for t in 0..4 {
            let tr = svd_truncate(&w, t).unwrap();
            let err = tr.adapter.delta().sub(&w).unwrap().frobenius_norm();
            assert!((err - tr.residual).abs() < 1e-10);
        }
        assert!(svd_truncate(&w, 5).is_err());
    }

    #[test]
    fn from_delta_uses_numerical_rank() {
        let b = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]]).unwrap();
        let a = DenseMatrix::from_rows(&[[1.0, 2.0, 0.0, 1.0], [0.0, 1.0, 1.0, 0.0]]).unwrap();
        let pair = AdapterPair::from_delta(&b.matmul(&a).unwrap()).unwrap();
        assert_eq!(pair.rank(), 2);
        assert!(pair.delta().sub(&b.matmul(&a).unwrap()).unwrap().frobenius_norm() < 1e-10);
    }
}
