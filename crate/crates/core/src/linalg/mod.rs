//! Dense linear-algebra kernels: matrices, full SVD, Gram-system least
//! squares and pivoted orthonormalization. Everything here is `f64` and
//! single-threaded per output entry, so results are reproducible bit for bit.

mod lstsq;
mod matrix;
mod orth;
mod svd;

pub use lstsq::{solve_least_squares, LeastSquares};
pub(crate) use lstsq::{gram_matrix, solve_gram};
pub use matrix::{frobenius_norm, matmul, DenseMatrix};
pub(crate) use matrix::dot;
pub use orth::orthonormalize;
pub use svd::{svd_full, SvdFactors};
