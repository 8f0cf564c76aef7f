//! Diagnostics: subspace similarity between a weight and its update, spectral
//! tails, the closed-form compression-error bound and its rangefinder
//! ingredient, checked by Monte-Carlo.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::basis::{trial_substream, BasisMatrix, PoolTag};
use crate::error::{Error, Result};
use crate::linalg::{orthonormalize, svd_full, DenseMatrix};

/// Which singular vectors a similarity compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Side {
    #[default]
    Left,
    Right,
}

fn side_vectors(matrix: &DenseMatrix, side: Side) -> Result<DenseMatrix> {
    let svd = svd_full(matrix)?;
    Ok(match side {
        Side::Left => svd.u,
        Side::Right => svd.v,
    })
}

/// `phi(W, dW, i, j) = |U_W[:, :i]^T U_dW[:, :j]|_F^2` (or with `V` for [`Side::Right`]).
/// Either count being 0 gives 0.
pub fn subspace_similarity(w: &DenseMatrix, delta_w: &DenseMatrix, i: usize, j: usize) -> Result<f64> {
    subspace_similarity_side(w, delta_w, i, j, Side::Left)
}

pub fn subspace_similarity_side(w: &DenseMatrix, delta_w: &DenseMatrix, i: usize, j: usize, side: Side) -> Result<f64> {
    let grid = similarity_grid(w, delta_w, i, j, side)?;
    Ok(grid.get(i, j))
}

/// `phi(i, j)` for every `1 <= i <= max_i`, `1 <= j <= max_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGrid {
    pub max_i: usize,
    pub max_j: usize,
    /// Row `i - 1`, column `j - 1` holds `phi(i, j)`.
    pub values: Vec<Vec<f64>>,
}

impl SimilarityGrid {
    /// `phi(i, j)`, 1-based; 0 when either index is 0.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == 0 || j == 0 {
            0.0
        } else {
            self.values[i - 1][j - 1]
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,phi\n");
        for i in 1..=self.max_i {
            for j in 1..=self.max_j {
                let _ = writeln!(out, "{i},{j},{}", self.get(i, j));
            }
        }
        out
    }
}

pub fn similarity_grid(w: &DenseMatrix, delta_w: &DenseMatrix, max_i: usize, max_j: usize, side: Side) -> Result<SimilarityGrid> {
    if w.shape() != delta_w.shape() {
        return Err(Error::DimensionMismatch {
            op: "subspace similarity",
            left: w.shape(),
            right: delta_w.shape(),
        });
    }
    let dim = match side {
        Side::Left => w.rows(),
        Side::Right => w.cols(),
    };
    if max_i > dim || max_j > dim {
        return Err(Error::Invalid(format!(
            "similarity indices ({max_i}, {max_j}) exceed the {dim} available singular vectors"
        )));
    }
    if max_i == 0 || max_j == 0 {
        return Ok(SimilarityGrid {
            max_i,
            max_j,
            values: vec![Vec::new(); max_i],
        });
    }
    let uw = side_vectors(w, side)?;
    let ud = side_vectors(delta_w, side)?;
    // cross[a][b] = <u_W,a, u_dW,b>^2, then 2-D prefix sums
    let mut values = vec![vec![0.0; max_j]; max_i];
    for a in 0..max_i {
        for b in 0..max_j {
            let ip: f64 = (0..dim).map(|t| uw.get(t, a) * ud.get(t, b)).sum();
            let up = if a > 0 { values[a - 1][b] } else { 0.0 };
            let left = if b > 0 { values[a][b - 1] } else { 0.0 };
            let diag = if a > 0 && b > 0 { values[a - 1][b - 1] } else { 0.0 };
            values[a][b] = ip * ip + up + left - diag;
        }
    }
    Ok(SimilarityGrid { max_i, max_j, values })
}

/// `sqrt(sum_{s > t} sigma_s^2)` with 1-based `s`; 0 once `t` covers the spectrum.
pub fn tail_energy(sigma: &[f64], t: usize) -> f64 {
    sigma.iter().skip(t).map(|s| s * s).sum::<f64>().sqrt()
}

/// Optional terms of the training-error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingTerms {
    pub r_star: usize,
    pub kappa: f64,
    pub lambda_r_star: f64,
    pub eta: f64,
    pub t_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    /// Singular values of the update, descending.
    pub sigma: Vec<f64>,
    pub n_a: usize,
    pub n_b: usize,
    pub r_a: usize,
    pub r_b: usize,
    /// Total sparsity budget.
    pub k: usize,
    pub training: Option<TrainingTerms>,
}

/// The three terms of the compression-error bound and their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C2Bound {
    pub prefactor_a: f64,
    pub prefactor_b: f64,
    pub term_a: f64,
    pub term_b: f64,
    pub term_k: f64,
    pub total: f64,
}

/// `sqrt(1 + r/(N - r - 1)) * tail(r)`: the expected one-sided rangefinder error
/// for `N` Gaussian probes and target rank `r`.
pub fn halko_bound(sigma: &[f64], r: usize, probes: usize) -> Result<f64> {
    Ok(oversampling_prefactor(r, probes, "probes")? * tail_energy(sigma, r))
}

fn oversampling_prefactor(r: usize, n: usize, what: &str) -> Result<f64> {
    if n <= r + 1 {
        return Err(Error::BoundInvalid(format!(
            "{what} N = {n} must exceed r + 1 = {}",
            r + 1
        )));
    }
    Ok((1.0 + r as f64 / (n - r - 1) as f64).sqrt())
}

fn check_spectrum(sigma: &[f64]) -> Result<()> {
    if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::BoundInvalid("singular values must be finite and non-negative".into()));
    }
    if sigma.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::BoundInvalid("singular values must be sorted descending".into()));
    }
    Ok(())
}

pub fn c2_bound(inputs: &BoundInputs) -> Result<C2Bound> {
    check_spectrum(&inputs.sigma)?;
    let prefactor_a = oversampling_prefactor(inputs.r_a, inputs.n_a, "pool A size")?;
    let prefactor_b = oversampling_prefactor(inputs.r_b, inputs.n_b, "pool B size")?;
    let term_a = prefactor_a * tail_energy(&inputs.sigma, inputs.r_a);
    let term_b = prefactor_b * tail_energy(&inputs.sigma, inputs.r_b);
    let term_k = tail_energy(&inputs.sigma, inputs.k);
    Ok(C2Bound {
        prefactor_a,
        prefactor_b,
        term_a,
        term_b,
        term_k,
        total: term_a + term_b + term_k,
    })
}

/// `sqrt(2 r*) (1 - eta lambda / (64 kappa))^t lambda`.
pub fn c1_training_bound(r_star: usize, kappa: f64, lambda_r_star: f64, eta: f64, t_steps: u64) -> Result<f64> {
    let contraction = eta * lambda_r_star / (64.0 * kappa);
    if !(contraction > 0.0 && contraction < 1.0) {
        return Err(Error::BoundInvalid(format!(
            "contraction eta * lambda / (64 kappa) = {contraction} must lie in (0, 1)"
        )));
    }
    let steps = i32::try_from(t_steps).unwrap_or(i32::MAX);
    Ok((2.0 * r_star as f64).sqrt() * (1.0 - contraction).powi(steps) * lambda_r_star)
}

/// Both bound components; `c1` is present when training terms were supplied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalBound {
    pub c1: Option<f64>,
    pub c2: C2Bound,
    pub total: f64,
}

pub fn total_bound(inputs: &BoundInputs) -> Result<TotalBound> {
    let c2 = c2_bound(inputs)?;
    let c1 = inputs
        .training
        .map(|t| c1_training_bound(t.r_star, t.kappa, t.lambda_r_star, t.eta, t.t_steps))
        .transpose()?;
    Ok(TotalBound {
        c1,
        c2,
        total: c1.unwrap_or(0.0) + c2.total,
    })
}

fn default_tol(y: &DenseMatrix) -> f64 {
    // Frobenius norm stands in for the spectral norm as the scale
    y.frobenius_norm() * y.rows().max(y.cols()) as f64 * f64::EPSILON
}

/// Numerical rank of the sketch `dW Omega` (pool A) or `dW^T Omega` (pool B),
/// one probe per basis: the basis' slice directions summed (`M^T 1` or `M 1`).
pub fn effective_sketch_rank(delta_w: &DenseMatrix, pool: &[BasisMatrix], tol: Option<f64>) -> Result<usize> {
    let Some(first) = pool.first() else {
        return Ok(0);
    };
    let tag = first.tag;
    let (m, n) = delta_w.shape();
    let probe_len = match tag {
        PoolTag::A => n,
        PoolTag::B => m,
    };
    let mut probes = Vec::with_capacity(pool.len());
    for basis in pool {
        let (rows, cols) = basis.matrix.shape();
        let ok = basis.tag == tag
            && match tag {
                PoolTag::A => cols == n,
                PoolTag::B => rows == m,
            };
        if !ok {
            return Err(Error::DimensionMismatch {
                op: "effective_sketch_rank (basis vs update)",
                left: basis.matrix.shape(),
                right: delta_w.shape(),
            });
        }
        let probe: Vec<f64> = match tag {
            PoolTag::A => (0..cols).map(|j| (0..rows).map(|i| basis.matrix.get(i, j)).sum()).collect(),
            PoolTag::B => (0..rows).map(|i| basis.matrix.row(i).iter().sum()).collect(),
        };
        probes.push(probe);
    }
    let omega = DenseMatrix::from_columns(probe_len, &probes);
    let y = match tag {
        PoolTag::A => delta_w.matmul(&omega)?,
        PoolTag::B => delta_w.transpose().matmul(&omega)?,
    };
    let tol = tol.unwrap_or_else(|| default_tol(&y));
    Ok(orthonormalize(&y, tol).cols())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangefinderReport {
    pub mean_error: f64,
    pub bound: f64,
    pub target_rank: usize,
    pub num_probes: usize,
    pub trials: usize,
}

/// Monte-Carlo mean of `|dW - Q Q^T dW|_F` over Gaussian sketches `Q = orth(dW Omega)`,
/// next to the closed-form expectation bound at `target_rank`. Trial `t` draws
/// `Omega` (row-major) from its own substream, so the result is independent
/// of thread scheduling.
pub fn empirical_rangefinder_error(
    delta_w: &DenseMatrix,
    num_probes: usize,
    trials: usize,
    seed: u64,
    target_rank: usize,
) -> Result<RangefinderReport> {
    if trials == 0 {
        return Err(Error::Invalid("rangefinder needs at least one trial".into()));
    }
    let sigma = svd_full(delta_w)?.sigma;
    let bound = halko_bound(&sigma, target_rank, num_probes)?;
    let n = delta_w.cols();
    let errors: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_substream(seed, t as u64);
            let omega = DenseMatrix::from_fn(n, num_probes, |_, _| rng.next_gaussian());
            let y = delta_w.matmul(&omega)?;
            let q = orthonormalize(&y, default_tol(&y));
            let captured = q.matmul(&q.transpose().matmul(delta_w)?)?;
            Ok(delta_w.sub(&captured)?.frobenius_norm())
        })
        .collect::<Result<_>>()?;
    Ok(RangefinderReport {
        mean_error: errors.iter().sum::<f64>() / trials as f64,
        bound,
        target_rank,
        num_probes,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{generate_pool, BasisMode, BasisPoolSpec, RngStream};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = RngStream::from_sub_seed(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.next_gaussian())
    }

    #[test]
    fn self_similarity_counts_vectors() {
        let w = gaussian(10, 10, 1);
        for i in 0..=10 {
            assert!((subspace_similarity(&w, &w, i, i).unwrap() - i as f64).abs() < 1e-9);
        }
        assert_eq!(subspace_similarity(&w, &w, 0, 3).unwrap(), 0.0);
        assert!(subspace_similarity(&w, &w, 11, 1).is_err());
    }

    #[test]
    fn orthogonal_directions_have_zero_similarity() {
        let w = DenseMatrix::from_fn(4, 4, |i, j| if i == j { 4.0 - i as f64 } else { 0.0 });
        let dw = DenseMatrix::from_fn(4, 4, |i, j| if i == j && i >= 2 { 1.0 + i as f64 } else { 0.0 });
        assert!(subspace_similarity(&w, &dw, 2, 2).unwrap().abs() < 1e-9);
    }

    #[test]
    fn similarity_matches_naive_sum() {
        let w = gaussian(16, 16, 2);
        let dw = gaussian(16, 16, 3);
        let uw = svd_full(&w).unwrap().u;
        let ud = svd_full(&dw).unwrap().u;
        for (i, j) in [(1, 1), (3, 7), (16, 5)] {
            let mut naive = 0.0;
            for a in 0..i {
                for b in 0..j {
                    let ip: f64 = (0..16).map(|t| uw.get(t, a) * ud.get(t, b)).sum();
                    naive += ip * ip;
                }
            }
            assert!((subspace_similarity(&w, &dw, i, j).unwrap() - naive).abs() < 1e-10);
        }
        let right = subspace_similarity_side(&w, &w, 4, 4, Side::Right).unwrap();
        assert!((right - 4.0).abs() < 1e-9);
    }

    #[test]
    fn grid_csv_layout() {
        let w = gaussian(3, 3, 4);
        let csv = similarity_grid(&w, &w, 2, 2, Side::Left).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "i,j,phi");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("1,1,"));
        assert!(lines[4].starts_with("2,2,"));
    }

    #[test]
    fn tail_energy_examples() {
        let s = [4.0, 2.0, 1.0];
        assert!((tail_energy(&s, 1) - 5f64.sqrt()).abs() < 1e-15);
        assert!((tail_energy(&s, 0) - 21f64.sqrt()).abs() < 1e-15);
        assert_eq!(tail_energy(&s, 3), 0.0);
        assert_eq!(tail_energy(&s, 9), 0.0);
    }

    #[test]
    fn c2_vanishes_for_low_rank_and_rejects_small_pools() {
        let inputs = BoundInputs {
            sigma: vec![3.0, 1.0, 0.0, 0.0],
            n_a: 10,
            n_b: 10,
            r_a: 2,
            r_b: 3,
            k: 2,
            training: None,
        };
        assert_eq!(c2_bound(&inputs).unwrap().total, 0.0);
        let small = BoundInputs { n_a: 3, ..inputs.clone() };
        assert!(matches!(c2_bound(&small), Err(Error::BoundInvalid(_))));
        let unsorted = BoundInputs { sigma: vec![1.0, 2.0], ..inputs };
        assert!(c2_bound(&unsorted).is_err());
    }

    #[test]
    fn c1_examples() {
        assert!((c1_training_bound(4, 2.0, 1.0, 0.1, 0).unwrap() - 8f64.sqrt()).abs() < 1e-15);
        let direct = 8f64.sqrt() * (1.0 - 0.1 / 128.0f64).powi(100);
        assert!((c1_training_bound(4, 2.0, 1.0, 0.1, 100).unwrap() - direct).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for t in [0, 10, 100, 1000, 100_000] {
            let v = c1_training_bound(4, 2.0, 1.0, 0.1, t).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-20);
        assert!(c1_training_bound(4, 1.0, 100.0, 1.0, 1).is_err());
        assert!(c1_training_bound(4, 1.0, 0.0, 1.0, 1).is_err());
    }

    fn low_rank(m: usize, n: usize, rank: usize, seed: u64) -> DenseMatrix {
        gaussian(m, rank, seed).matmul(&gaussian(rank, n, seed + 1)).unwrap()
    }

    fn pool(tag: PoolTag, count: usize, ambient: usize, svd_of: &DenseMatrix) -> Vec<BasisMatrix> {
        let svd = svd_full(svd_of).unwrap();
        let spec = BasisPoolSpec {
            master_seed: 9,
            tag,
            count,
            slice_width: 2,
            ambient,
            noise_sigma: 1.0,
            mode: BasisMode::Aligned,
        };
        generate_pool(&spec, &svd).unwrap()
    }

    #[test]
    fn sketch_rank_examples() {
        let w = gaussian(12, 12, 5);
        let pa = pool(PoolTag::A, 10, 12, &w);
        let pb = pool(PoolTag::B, 10, 12, &w);
        let dw = low_rank(12, 12, 3, 20);
        assert_eq!(effective_sketch_rank(&dw, &pa, None).unwrap(), 3);
        assert_eq!(effective_sketch_rank(&dw, &pb, None).unwrap(), 3);
        assert_eq!(effective_sketch_rank(&DenseMatrix::zeros(12, 12), &pa, None).unwrap(), 0);
        assert!(effective_sketch_rank(&dw, &pa[..1], None).unwrap() <= 1);
    }

    #[test]
    fn exact_low_rank_is_captured() {
        let dw = low_rank(20, 16, 3, 30);
        let rep = empirical_rangefinder_error(&dw, 5, 20, 1, 3).unwrap();
        assert!(rep.mean_error <= 1e-8 * dw.frobenius_norm(), "{}", rep.mean_error);
        assert!(rep.bound < 1e-10 * dw.frobenius_norm());
        let again = empirical_rangefinder_error(&dw, 5, 20, 1, 3).unwrap();
        assert_eq!(rep.mean_error.to_bits(), again.mean_error.to_bits());
        assert!(empirical_rangefinder_error(&dw, 4, 20, 1, 3).is_err());
    }
}
