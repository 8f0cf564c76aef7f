use serde::{Deserialize, Serialize};

use crate::basis::BasisMatrix;
use crate::error::{Error, Result};
use crate::linalg::{dot, gram_matrix, solve_gram, DenseMatrix, LeastSquares};

/// Coefficients kept after thresholding: strictly increasing pool indices and their values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCoefficients {
    pub pool_size: usize,
    pub support: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseCoefficients {
    pub fn new(pool_size: usize, support: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if support.len() != values.len() {
            return Err(Error::Invalid(format!(
                "support holds {} indices but {} values",
                support.len(),
                values.len()
            )));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("support indices must be strictly increasing".into()));
        }
        if let Some(&last) = support.last() {
            if last >= pool_size {
                return Err(Error::Invalid(format!(
                    "support index {last} outside pool of {pool_size}"
                )));
            }
        }
        Ok(Self {
            pool_size,
            support,
            values,
        })
    }

    pub fn empty(pool_size: usize) -> Self {
        Self {
            pool_size,
            support: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Dense length-`pool_size` vector with zeros off the support.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.pool_size];
        for (&i, &v) in self.support.iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }

    /// Indicator bitmask over the pool, LSB-first within each byte.
    pub fn mask_bytes(&self) -> Vec<u8> {
        let mut mask = vec![0u8; self.pool_size.div_ceil(8)];
        for &i in &self.support {
            mask[i / 8] |= 1 << (i % 8);
        }
        mask
    }
}

fn check_targets(pool: &[BasisMatrix], target: &DenseMatrix) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::Empty("basis pool"));
    }
    if let Some(bad) = pool.iter().find(|b| b.matrix.shape() != target.shape()) {
        return Err(Error::DimensionMismatch {
            op: "fit (basis vs target)",
            left: bad.matrix.shape(),
            right: target.shape(),
        });
    }
    Ok(())
}

fn solve_over(bases: &[&BasisMatrix], target: &DenseMatrix, ridge: f64) -> Result<LeastSquares> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Invalid(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    let columns: Vec<Vec<f64>> = bases.iter().map(|b| b.matrix.data().to_vec()).collect();
    let gram = gram_matrix(&columns);
    let rhs: Vec<f64> = columns.iter().map(|c| dot(c, target.data())).collect();
    solve_gram(&gram, &rhs, ridge)
}

/// Dense least-squares coefficients of `target` over every basis in `pool`.
pub fn fit_coefficients(pool: &[BasisMatrix], target: &DenseMatrix, ridge: f64) -> Result<LeastSquares> {
    check_targets(pool, target)?;
    let refs: Vec<&BasisMatrix> = pool.iter().collect();
    solve_over(&refs, target, ridge)
}

/// Keeps the `k` largest-magnitude entries; ties go to the lower index.
pub fn hard_threshold(coefficients: &[f64], k: usize) -> Result<SparseCoefficients> {
    if k > coefficients.len() {
        return Err(Error::Invalid(format!(
            "budget k = {k} exceeds pool size {}",
            coefficients.len()
        )));
    }
    let mut order: Vec<usize> = (0..coefficients.len()).collect();
    order.sort_by(|&x, &y| {
        coefficients[y]
            .abs()
            .total_cmp(&coefficients[x].abs())
            .then(x.cmp(&y))
    });
    let mut support = order[..k].to_vec();
    support.sort_unstable();
    let values = support.iter().map(|&i| coefficients[i]).collect();
    Ok(SparseCoefficients {
        pool_size: coefficients.len(),
        support,
        values,
    })
}

/// Re-solves least squares restricted to `support`, which refits the kept coefficients.
pub fn refit_on_support(
    pool: &[BasisMatrix],
    target: &DenseMatrix,
    support: &[usize],
    ridge: f64,
) -> Result<SparseCoefficients> {
    check_targets(pool, target)?;
    if support.is_empty() {
        return Ok(SparseCoefficients::empty(pool.len()));
    }
    let chosen: Vec<&BasisMatrix> = support
        .iter()
        .map(|&i| {
            pool.get(i).ok_or_else(|| {
                Error::Invalid(format!("support index {i} outside pool of {}", pool.len()))
            })
        })
        .collect::<Result<_>>()?;
    let fit = solve_over(&chosen, target, ridge)?;
    SparseCoefficients::new(pool.len(), support.to_vec(), fit.solution)
}

/// `sum_i values[i] * bases[i]`; bases must be supplied in support order.
pub fn combine(bases: &[BasisMatrix], values: &[f64], shape: (usize, usize)) -> Result<DenseMatrix> {
    if bases.len() != values.len() {
        return Err(Error::Invalid(format!(
            "{} bases supplied for {} coefficients",
            bases.len(),
            values.len()
        )));
    }
    let mut out = DenseMatrix::zeros(shape.0, shape.1);
    for (basis, &v) in bases.iter().zip(values) {
        if basis.matrix.shape() != shape {
            return Err(Error::DimensionMismatch {
                op: "combine",
                left: basis.matrix.shape(),
                right: shape,
            });
        }
        out.axpy_in_place(v, &basis.matrix);
    }
    Ok(out)
}

/// `|target - sum_{i in support} c_i M_i|_F` using the full pool.
pub fn fit_residual(pool: &[BasisMatrix], target: &DenseMatrix, coefficients: &SparseCoefficients) -> Result<f64> {
    check_targets(pool, target)?;
    let chosen: Vec<BasisMatrix> = coefficients
        .support
        .iter()
        .map(|&i| pool[i].clone())
        .collect();
    let approx = combine(&chosen, &coefficients.values, target.shape())?;
    Ok(target.sub(&approx)?.frobenius_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{generate_pool, BasisMode, BasisPoolSpec, PoolTag};
    use crate::linalg::svd_full;
    use proptest::prelude::*;

    #[test]
    fn threshold_examples() {
        let s = hard_threshold(&[0.1, -0.9, 0.5, 0.0], 2).unwrap();
        assert_eq!(s.support, vec![1, 2]);
        assert_eq!(s.values, vec![-0.9, 0.5]);

        let ties = hard_threshold(&[0.3, 0.3, 0.3], 1).unwrap();
        assert_eq!(ties.support, vec![0]);

        let none = hard_threshold(&[1.0, 2.0], 0).unwrap();
        assert!(none.is_empty());
        assert_eq!(none.to_dense(), vec![0.0, 0.0]);

        assert!(hard_threshold(&[1.0], 2).is_err());
    }

    #[test]
    fn mask_layout() {
        let s = SparseCoefficients::new(10, vec![0, 3, 9], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mask_bytes(), vec![0b0000_1001, 0b0000_0010]);
        assert!(SparseCoefficients::new(3, vec![2, 1], vec![0.0, 0.0]).is_err());
        assert!(SparseCoefficients::new(3, vec![3], vec![0.0]).is_err());
    }

    fn pool_for_tests(sigma: f64) -> (Vec<BasisMatrix>, crate::linalg::SvdFactors) {
        let mut rng = crate::basis::RngStream::from_sub_seed(31);
        let w = DenseMatrix::from_fn(6, 6, |_, _| rng.next_gaussian());
        let svd = svd_full(&w).unwrap();
        let spec = BasisPoolSpec {
            master_seed: 5,
            tag: PoolTag::A,
            count: 5,
            slice_width: 2,
            ambient: 6,
            noise_sigma: sigma,
            mode: BasisMode::Aligned,
        };
        (generate_pool(&spec, &svd).unwrap(), svd)
    }

    #[test]
    fn exact_target_is_recovered() {
        let (pool, _) = pool_for_tests(0.7);
        let truth = [0.5, 0.0, -1.25, 0.0, 2.0];
        let target = combine(&pool, &truth, (2, 6)).unwrap();
        let fit = fit_coefficients(&pool, &target, 0.0).unwrap();
        for (x, t) in fit.solution.iter().zip(truth) {
            assert!((x - t).abs() < 1e-9);
        }
        let sparse = hard_threshold(&fit.solution, 3).unwrap();
        assert_eq!(sparse.support, vec![0, 2, 4]);
        assert!(fit_residual(&pool, &target, &sparse).unwrap() < 1e-9);

        let refit = refit_on_support(&pool, &target, &[0, 2, 4], 0.0).unwrap();
        for (x, t) in refit.values.iter().zip([0.5, -1.25, 2.0]) {
            assert!((x - t).abs() < 1e-9);
        }
    }

    #[test]
    fn duplicated_bases_trigger_ridge_fallback() {
        let (mut pool, _) = pool_for_tests(0.0);
        pool[1] = pool[0].clone();
        let target = pool[0].matrix.clone();
        let fit = fit_coefficients(&pool, &target, 0.0).unwrap();
        assert!(fit.regularized);
        assert!(fit.ridge > 0.0);
    }

    #[test]
    fn refit_never_worse_than_threshold() {
        let (pool, _) = pool_for_tests(1.0);
        let mut rng = crate::basis::RngStream::from_sub_seed(2);
        let target = DenseMatrix::from_fn(2, 6, |_, _| rng.next_gaussian());
        let fit = fit_coefficients(&pool, &target, 0.0).unwrap();
        let sparse = hard_threshold(&fit.solution, 2).unwrap();
        let refit = refit_on_support(&pool, &target, &sparse.support, 0.0).unwrap();
        let r0 = fit_residual(&pool, &target, &sparse).unwrap();
        let r1 = fit_residual(&pool, &target, &refit).unwrap();
        assert!(r1 <= r0 + 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (pool, _) = pool_for_tests(1.0);
        assert!(fit_coefficients(&pool, &DenseMatrix::zeros(6, 2), 0.0).is_err());
        assert!(fit_coefficients(&[], &DenseMatrix::zeros(2, 6), 0.0).is_err());
    }

    proptest! {
        #[test]
        fn threshold_keeps_exactly_k_largest(
            xs in prop::collection::vec(-10.0f64..10.0, 1..40),
            pick in 0usize..40,
        ) {
            let k = pick % (xs.len() + 1);
            let s = hard_threshold(&xs, k).unwrap();
            prop_assert_eq!(s.len(), k);
            prop_assert!(s.support.windows(2).all(|w| w[0] < w[1]));
            let kept_min = s.values.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
            for (i, x) in xs.iter().enumerate() {
                if !s.support.contains(&i) {
                    prop_assert!(x.abs() <= kept_min);
                }
            }
        }
    }
}
