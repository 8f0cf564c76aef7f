use rayon::prelude::*;

use super::rng::{derive_substream, sample_index_set, PoolTag};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SvdFactors};

/// How basis matrices are populated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum BasisMode {
    /// Singular-vector slices of the foundation weight plus Gaussian noise.
    #[default]
    Aligned,
    /// Gaussian noise only, drawn from the identical streams (NOLA-like baseline).
    Random,
}

impl BasisMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BasisMode::Aligned => "aligned",
            BasisMode::Random => "random",
        }
    }
}

impl std::fmt::Display for BasisMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BasisMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aligned" => Ok(BasisMode::Aligned),
            "random" => Ok(BasisMode::Random),
            other => Err(Error::Invalid(format!(
                "basis mode must be 'aligned' or 'random', got '{other}'"
            ))),
        }
    }
}

/// Everything needed to regenerate one pool anywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisPoolSpec {
    pub master_seed: u64,
    pub tag: PoolTag,
    /// Number of bases `N`.
    pub count: usize,
    /// Singular vectors drawn per basis; equals the adapter rank in the pipeline.
    pub slice_width: usize,
    /// `n` for pool A, `m` for pool B.
    pub ambient: usize,
    pub noise_sigma: f64,
    pub mode: BasisMode,
}

impl BasisPoolSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Invalid("basis pool must hold at least one basis".into()));
        }
        if self.slice_width == 0 || self.slice_width > self.ambient {
            return Err(Error::Invalid(format!(
                "slice width {} must lie in 1..={}",
                self.slice_width, self.ambient
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Invalid(format!(
                "noise sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        if self.mode == BasisMode::Random && self.noise_sigma == 0.0 {
            return Err(Error::Invalid("random basis mode needs noise sigma > 0".into()));
        }
        Ok(())
    }

    /// Shape of every basis in this pool.
    pub fn basis_shape(&self) -> (usize, usize) {
        match self.tag {
            PoolTag::A => (self.slice_width, self.ambient),
            PoolTag::B => (self.ambient, self.slice_width),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub tag: PoolTag,
    pub index: usize,
    /// Sampled singular-vector indices in draw order.
    pub indices: Vec<usize>,
    pub matrix: DenseMatrix,
}

/// Basis `basis_index` of the pool. Pool A: `V[:, I]^T + eps` (`r x n`);
/// pool B: `U[:, J] + eps` (`m x r`). The index set is drawn first, then the
/// noise entries in row-major order, from the basis' own substream.
pub fn generate_basis(spec: &BasisPoolSpec, svd: &SvdFactors, basis_index: usize) -> Result<BasisMatrix> {
    spec.validate()?;
    let vectors = match spec.tag {
        PoolTag::A => &svd.v,
        PoolTag::B => &svd.u,
    };
    if vectors.rows() != spec.ambient {
        return Err(Error::DimensionMismatch {
            op: "generate_basis",
            left: vectors.shape(),
            right: (spec.ambient, spec.ambient),
        });
    }
    Ok(build_basis(spec, vectors, basis_index))
}

fn build_basis(spec: &BasisPoolSpec, vectors: &DenseMatrix, basis_index: usize) -> BasisMatrix {
    let mut stream = derive_substream(spec.master_seed, spec.tag, basis_index as u64);
    let indices = sample_index_set(&mut stream, spec.ambient, spec.slice_width);
    let (rows, cols) = spec.basis_shape();
    let sigma = spec.noise_sigma;
    let aligned = spec.mode == BasisMode::Aligned;
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let slice = match (aligned, spec.tag) {
                (true, PoolTag::A) => vectors.get(j, indices[i]),
                (true, PoolTag::B) => vectors.get(i, indices[j]),
                (false, _) => 0.0,
            };
            let noise = if sigma > 0.0 { sigma * stream.next_gaussian() } else { 0.0 };
            data.push(slice + noise);
        }
    }
    BasisMatrix {
        tag: spec.tag,
        index: basis_index,
        indices,
        matrix: DenseMatrix::from_raw(rows, cols, data),
    }
}

/// All `count` bases. Substreams are per basis, so the parallel fan-out
/// returns exactly what a serial loop would.
pub fn generate_pool(spec: &BasisPoolSpec, svd: &SvdFactors) -> Result<Vec<BasisMatrix>> {
    generate_basis(spec, svd, 0)?;
    let vectors = match spec.tag {
        PoolTag::A => &svd.v,
        PoolTag::B => &svd.u,
    };
    Ok((0..spec.count)
        .into_par_iter()
        .map(|i| build_basis(spec, vectors, i))
        .collect())
}

/// Regenerates only the listed bases.
pub fn generate_subset(spec: &BasisPoolSpec, svd: &SvdFactors, indices: &[usize]) -> Result<Vec<BasisMatrix>> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= spec.count) {
        return Err(Error::Invalid(format!(
            "basis index {bad} outside pool of {}",
            spec.count
        )));
    }
    if indices.is_empty() {
        spec.validate()?;
        return Ok(Vec::new());
    }
    generate_basis(spec, svd, indices[0])?;
    let vectors = match spec.tag {
        PoolTag::A => &svd.v,
        PoolTag::B => &svd.u,
    };
    Ok(indices
        .par_iter()
        .map(|&i| build_basis(spec, vectors, i))
        .collect())
}
