//! The compression pipeline: project an adapter into the foundation weight's
//! singular bases, fit each factor against a seeded basis pool, keep the
//! top-k coefficients, and reconstruct from seed plus coefficients alone.

mod compress;
mod fit;
mod truncate;

pub use compress::{
    compress, compress_with_svd, reconstruct, svd_fingerprint, Budget, CoefficientBlock,
    CompressConfig, Compression, FitDiagnostics, SolarArtifact,
};
pub use fit::{
    combine, fit_coefficients, fit_residual, hard_threshold, refit_on_support, SparseCoefficients,
};
pub use truncate::{numerical_rank, svd_truncate, Truncation};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SvdFactors};

/// A low-rank update `delta W = B A` with `A` (`r x n`) and `B` (`m x r`).
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterPair {
    a: DenseMatrix,
    b: DenseMatrix,
}

impl AdapterPair {
    pub fn new(a: DenseMatrix, b: DenseMatrix) -> Result<Self> {
        if a.rows() != b.cols() {
            return Err(Error::DimensionMismatch {
                op: "adapter pair (A.rows must equal B.cols)",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let rank = a.rows();
        if rank == 0 {
            return Err(Error::Invalid("adapter rank must be at least 1".into()));
        }
        if rank > a.cols().min(b.rows()) {
            return Err(Error::Invalid(format!(
                "adapter rank {rank} exceeds min(m, n) = {}",
                a.cols().min(b.rows())
            )));
        }
        Ok(Self { a, b })
    }

    /// Rank-0 pair, the result of truncating to nothing.
    pub fn zero(m: usize, n: usize) -> Self {
        Self {
            a: DenseMatrix::zeros(0, n),
            b: DenseMatrix::zeros(m, 0),
        }
    }

    pub(crate) fn from_parts_unchecked(a: DenseMatrix, b: DenseMatrix) -> Self {
        debug_assert_eq!(a.rows(), b.cols());
        Self { a, b }
    }

    /// Factors a dense update at its numerical rank (`B = U_t S_t`, `A = V_t^T`).
    pub fn from_delta(delta_w: &DenseMatrix) -> Result<Self> {
        let svd = crate::linalg::svd_full(delta_w)?;
        let rank = numerical_rank(&svd.sigma, delta_w.rows().max(delta_w.cols()), None);
        Ok(svd_truncate_from(&svd, rank).adapter)
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    pub fn rank(&self) -> usize {
        self.a.rows()
    }

    /// Output dimension `m`.
    pub fn m(&self) -> usize {
        self.b.rows()
    }

    /// Input dimension `n`.
    pub fn n(&self) -> usize {
        self.a.cols()
    }

    pub fn delta(&self) -> DenseMatrix {
        delta(self)
    }
}

/// `delta W = B A`.
pub fn delta(adapter: &AdapterPair) -> DenseMatrix {
    adapter.b.matmul(&adapter.a).expect("adapter factors agree")
}

/// Factors expressed in the foundation weight's singular bases.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedAdapter {
    /// `A V`, `r x n`.
    pub a_proj: DenseMatrix,
    /// `U^T B`, `m x r`.
    pub b_proj: DenseMatrix,
}

pub fn project(svd: &SvdFactors, adapter: &AdapterPair) -> Result<ProjectedAdapter> {
    if svd.v.rows() != adapter.n() || svd.u.rows() != adapter.m() {
        return Err(Error::DimensionMismatch {
            op: "project (weight vs adapter delta)",
            left: (svd.u.rows(), svd.v.rows()),
            right: (adapter.m(), adapter.n()),
        });
    }
    Ok(ProjectedAdapter {
        a_proj: adapter.a.matmul(&svd.v)?,
        b_proj: svd.u.transpose().matmul(&adapter.b)?,
    })
}

/// `|approx - reference|_F / |reference|_F`, or the absolute error when the reference is zero.
pub fn relative_error(approx: &DenseMatrix, reference: &DenseMatrix) -> Result<f64> {
    let err = approx.sub(reference)?.frobenius_norm();
    let base = reference.frobenius_norm();
    Ok(if base > 0.0 { err / base } else { err })
}

pub(crate) use truncate::svd_truncate_from;
