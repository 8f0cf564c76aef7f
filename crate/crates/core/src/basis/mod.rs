//! Seeded basis pools. A pool is never stored: `(master_seed, spec)` and the
//! foundation SVD regenerate every basis bit for bit.

mod pool;
mod rng;

pub use pool::{generate_basis, generate_pool, generate_subset, BasisMatrix, BasisMode, BasisPoolSpec};
pub use rng::{derive_substream, sample_index_set, splitmix64_mix, PoolTag, RngStream, POOL_B_TAG};
pub(crate) use rng::trial_substream;
