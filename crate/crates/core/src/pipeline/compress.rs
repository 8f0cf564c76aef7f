use super::fit::{fit_coefficients, fit_residual, hard_threshold, refit_on_support, combine, SparseCoefficients};
use super::{project, AdapterPair};
use crate::basis::{generate_pool, generate_subset, BasisMatrix, BasisMode, BasisPoolSpec, PoolTag};
use crate::error::{Error, Result};
use crate::linalg::{svd_full, DenseMatrix, SvdFactors};
use crate::quant::{check_bits, dequantize, quantize, QuantizedVector};

/// How many coefficients each side may keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    PerSide { k_a: usize, k_b: usize },
    /// One total budget, split between the sides in proportion to the energy
    /// of their projected targets (`|A V|_F^2` against `|U^T B|_F^2`).
    Total(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressConfig {
    pub n_a: usize,
    pub n_b: usize,
    pub budget: Budget,
    /// Must equal the adapter rank when given; defaults to it.
    pub slice_width: Option<usize>,
    /// Stored as `f32`; the pools are generated from the rounded value.
    pub noise_sigma: f64,
    pub seed: u64,
    pub ridge: f64,
    pub refit: bool,
    pub basis_mode: BasisMode,
    /// `None` (or 64) keeps raw `f64` coefficients.
    pub quant_bits: Option<u8>,
    pub fingerprint: bool,
}

impl CompressConfig {
    pub fn new(n_a: usize, n_b: usize, k_a: usize, k_b: usize) -> Self {
        Self {
            n_a,
            n_b,
            budget: Budget::PerSide { k_a, k_b },
            slice_width: None,
            noise_sigma: 1.0,
            seed: 0,
            ridge: 0.0,
            refit: false,
            basis_mode: BasisMode::Aligned,
            quant_bits: None,
            fingerprint: true,
        }
    }
}

/// Kept coefficients of one side, plus the quantized payload when one was used.
/// `coefficients.values` always holds the dequantized values.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientBlock {
    pub coefficients: SparseCoefficients,
    pub quantized: Option<QuantizedVector>,
}

impl CoefficientBlock {
    pub fn raw(coefficients: SparseCoefficients) -> Self {
        Self {
            coefficients,
            quantized: None,
        }
    }

    pub fn from_quantized(pool_size: usize, support: Vec<usize>, quantized: QuantizedVector) -> Result<Self> {
        let values = if quantized.length == 0 {
            Vec::new()
        } else {
            dequantize(&quantized)?
        };
        Ok(Self {
            coefficients: SparseCoefficients::new(pool_size, support, values)?,
            quantized: Some(quantized),
        })
    }

    /// Storage width of the payload; 64 for raw `f64`.
    pub fn bits(&self) -> u8 {
        self.quantized.as_ref().map_or(64, |q| q.bits)
    }

    fn quantize_with(coefficients: SparseCoefficients, bits: Option<u8>) -> Result<Self> {
        match bits {
            None | Some(64) => Ok(Self::raw(coefficients)),
            Some(bits) => {
                let q = if coefficients.is_empty() {
                    QuantizedVector::empty(bits)
                } else {
                    quantize(&coefficients.values, bits)?
                };
                Self::from_quantized(coefficients.pool_size, coefficients.support, q)
            }
        }
    }
}

/// Everything a receiver needs besides the foundation weight itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SolarArtifact {
    pub master_seed: u64,
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub slice_width: usize,
    pub noise_sigma: f32,
    pub basis_mode: BasisMode,
    pub refit: bool,
    pub alpha: CoefficientBlock,
    pub beta: CoefficientBlock,
    pub svd_fingerprint: Option<u64>,
}

impl SolarArtifact {
    pub fn n_a(&self) -> usize {
        self.alpha.coefficients.pool_size
    }

    pub fn n_b(&self) -> usize {
        self.beta.coefficients.pool_size
    }

    pub fn pool_spec(&self, tag: PoolTag) -> BasisPoolSpec {
        let (count, ambient) = match tag {
            PoolTag::A => (self.n_a(), self.n),
            PoolTag::B => (self.n_b(), self.m),
        };
        BasisPoolSpec {
            master_seed: self.master_seed,
            tag,
            count,
            slice_width: self.slice_width,
            ambient,
            noise_sigma: self.noise_sigma as f64,
            mode: self.basis_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.r > self.m.min(self.n) {
            return Err(Error::Invalid(format!(
                "artifact rank {} must lie in 1..={}",
                self.r,
                self.m.min(self.n)
            )));
        }
        if self.slice_width != self.r {
            return Err(Error::Invalid(format!(
                "slice width {} differs from adapter rank {}",
                self.slice_width, self.r
            )));
        }
        self.pool_spec(PoolTag::A).validate()?;
        self.pool_spec(PoolTag::B).validate()?;
        for (side, block) in [('A', &self.alpha), ('B', &self.beta)] {
            let c = &block.coefficients;
            SparseCoefficients::new(c.pool_size, c.support.clone(), c.values.clone())?;
            if let Some(q) = &block.quantized {
                check_bits(q.bits)?;
                if q.length != c.len() {
                    return Err(Error::Invalid(format!(
                        "side {side}: quantized payload holds {} values for {} support indices",
                        q.length,
                        c.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Fit quality of one side, measured on the projected target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitDiagnostics {
    pub k: usize,
    pub target_norm: f64,
    /// `|target - sum c_i M_i|_F` with the stored (possibly dequantized) coefficients.
    pub residual: f64,
    pub ridge: f64,
    pub regularized: bool,
}

impl FitDiagnostics {
    pub fn relative(&self) -> f64 {
        if self.target_norm > 0.0 {
            self.residual / self.target_norm
        } else {
            self.residual
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Compression {
    pub artifact: SolarArtifact,
    pub a: FitDiagnostics,
    pub b: FitDiagnostics,
}

/// Full pipeline from a foundation weight and an adapter.
pub fn compress(w: &DenseMatrix, adapter: &AdapterPair, config: &CompressConfig) -> Result<SolarArtifact> {
    if w.shape() != (adapter.m(), adapter.n()) {
        return Err(Error::DimensionMismatch {
            op: "compress (weight vs adapter delta)",
            left: w.shape(),
            right: (adapter.m(), adapter.n()),
        });
    }
    let svd = svd_full(w)?;
    Ok(compress_with_svd(&svd, adapter, config)?.artifact)
}

/// Pipeline with a precomputed SVD; also reports per-side fit residuals.
pub fn compress_with_svd(svd: &SvdFactors, adapter: &AdapterPair, config: &CompressConfig) -> Result<Compression> {
    let r = adapter.rank();
    let slice_width = config.slice_width.unwrap_or(r);
    if slice_width != r {
        return Err(Error::Invalid(format!(
            "slice width {slice_width} must equal the adapter rank {r}"
        )));
    }
    if !(config.noise_sigma >= 0.0 && (config.noise_sigma as f32).is_finite()) {
        return Err(Error::Invalid(format!(
            "noise sigma must be finite and >= 0, got {}",
            config.noise_sigma
        )));
    }
    if let Some(bits) = config.quant_bits {
        check_bits(bits)?;
    }
    let projected = project(svd, adapter)?;
    let (k_a, k_b) = resolve_budget(
        config.budget,
        config.n_a,
        config.n_b,
        projected.a_proj.frobenius_norm().powi(2),
        projected.b_proj.frobenius_norm().powi(2),
    )?;

    let mut artifact = SolarArtifact {
        master_seed: config.seed,
        m: adapter.m(),
        n: adapter.n(),
        r,
        slice_width,
        noise_sigma: config.noise_sigma as f32,
        basis_mode: config.basis_mode,
        refit: config.refit,
        alpha: CoefficientBlock::raw(SparseCoefficients::empty(config.n_a)),
        beta: CoefficientBlock::raw(SparseCoefficients::empty(config.n_b)),
        svd_fingerprint: config.fingerprint.then(|| svd_fingerprint(svd)),
    };
    let spec_a = artifact.pool_spec(PoolTag::A);
    let spec_b = artifact.pool_spec(PoolTag::B);

    let side = |spec: &BasisPoolSpec, target: &DenseMatrix, k| -> Result<(CoefficientBlock, FitDiagnostics)> {
        let pool = generate_pool(spec, svd)?;
        fit_side(&pool, target, k, config)
    };
    let (res_a, res_b) = rayon::join(
        || side(&spec_a, &projected.a_proj, k_a),
        || side(&spec_b, &projected.b_proj, k_b),
    );
    let (alpha, diag_a) = res_a?;
    let (beta, diag_b) = res_b?;
    artifact.alpha = alpha;
    artifact.beta = beta;
    Ok(Compression {
        artifact,
        a: diag_a,
        b: diag_b,
    })
}

fn fit_side(
    pool: &[BasisMatrix],
    target: &DenseMatrix,
    k: usize,
    config: &CompressConfig,
) -> Result<(CoefficientBlock, FitDiagnostics)> {
    let target_norm = target.frobenius_norm();
    if k == 0 {
        let block = CoefficientBlock::quantize_with(SparseCoefficients::empty(pool.len()), config.quant_bits)?;
        let diag = FitDiagnostics {
            k,
            target_norm,
            residual: target_norm,
            ridge: 0.0,
            regularized: false,
        };
        return Ok((block, diag));
    }
    let fit = fit_coefficients(pool, target, config.ridge)?;
    let mut kept = hard_threshold(&fit.solution, k)?;
    if config.refit {
        kept = refit_on_support(pool, target, &kept.support, fit.ridge)?;
    }
    let block = CoefficientBlock::quantize_with(kept, config.quant_bits)?;
    let residual = fit_residual(pool, target, &block.coefficients)?;
    let diag = FitDiagnostics {
        k,
        target_norm,
        residual,
        ridge: fit.ridge,
        regularized: fit.regularized,
    };
    Ok((block, diag))
}

fn resolve_budget(budget: Budget, n_a: usize, n_b: usize, energy_a: f64, energy_b: f64) -> Result<(usize, usize)> {
    let (k_a, k_b) = match budget {
        Budget::PerSide { k_a, k_b } => (k_a, k_b),
        Budget::Total(k) => {
            if k > n_a + n_b {
                return Err(Error::BudgetExceedsPool {
                    side: '+',
                    k,
                    pool: n_a + n_b,
                });
            }
            let total = energy_a + energy_b;
            let share = if total > 0.0 { energy_a / total } else { 0.5 };
            let mut k_a = ((k as f64 * share).round() as usize).min(n_a).min(k);
            let mut k_b = k - k_a;
            if k_b > n_b {
                k_a += k_b - n_b;
                k_b = n_b;
            }
            (k_a, k_b)
        }
    };
    if k_a > n_a {
        return Err(Error::BudgetExceedsPool { side: 'A', k: k_a, pool: n_a });
    }
    if k_b > n_b {
        return Err(Error::BudgetExceedsPool { side: 'B', k: k_b, pool: n_b });
    }
    Ok((k_a, k_b))
}

/// Rebuilds the adapter from the seed and the kept coefficients alone.
pub fn reconstruct(svd: &SvdFactors, artifact: &SolarArtifact) -> Result<AdapterPair> {
    artifact.validate()?;
    if (svd.m(), svd.n()) != (artifact.m, artifact.n) {
        return Err(Error::DimensionMismatch {
            op: "reconstruct (local weight vs artifact)",
            left: (svd.m(), svd.n()),
            right: (artifact.m, artifact.n),
        });
    }
    if let Some(expected) = artifact.svd_fingerprint {
        let actual = svd_fingerprint(svd);
        if actual != expected {
            return Err(Error::FingerprintMismatch { expected, actual });
        }
    }
    let (r, m, n) = (artifact.r, artifact.m, artifact.n);
    let alpha = &artifact.alpha.coefficients;
    let beta = &artifact.beta.coefficients;
    let (bases_a, bases_b) = rayon::join(
        || generate_subset(&artifact.pool_spec(PoolTag::A), svd, &alpha.support),
        || generate_subset(&artifact.pool_spec(PoolTag::B), svd, &beta.support),
    );
    let sum_a = combine(&bases_a?, &alpha.values, (r, n))?;
    let sum_b = combine(&bases_b?, &beta.values, (m, r))?;
    let a = sum_a.matmul(&svd.v.transpose())?;
    let b = svd.u.matmul(&sum_b)?;
    Ok(AdapterPair::from_parts_unchecked(a, b))
}

const FNV_OFFSET: u64 = 0xCBF2_9CE4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;

/// 64-bit FNV-1a over `m`, `n` (u64 LE) and every entry of `U` then `V`,
/// row-major, as `round(x * 1e6)` in i64 LE.
pub fn svd_fingerprint(svd: &SvdFactors) -> u64 {
    let mut h = FNV_OFFSET;
    let mut feed = |bytes: [u8; 8]| {
        for b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    };
    feed((svd.m() as u64).to_le_bytes());
    feed((svd.n() as u64).to_le_bytes());
    for x in svd.u.data().iter().chain(svd.v.data()) {
        feed(((x * 1e6).round() as i64).to_le_bytes());
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::RngStream;
    use crate::pipeline::relative_error;

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = RngStream::from_sub_seed(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.next_gaussian())
    }

    fn instance(m: usize, n: usize, r: usize) -> (DenseMatrix, AdapterPair) {
        let w = gaussian(m, n, 100);
        let pair = AdapterPair::new(gaussian(r, n, 101), gaussian(m, r, 102)).unwrap();
        (w, pair)
    }

    #[test]
    fn spanning_pool_reconstructs_exactly() {
        let (w, pair) = instance(32, 32, 2);
        let mut config = CompressConfig::new(80, 80, 80, 80);
        config.seed = 7;
        let svd = svd_full(&w).unwrap();
        let out = compress_with_svd(&svd, &pair, &config).unwrap();
        assert!(out.a.relative() <= 1e-8, "{}", out.a.relative());
        assert!(out.b.relative() <= 1e-8, "{}", out.b.relative());
        let back = reconstruct(&svd, &out.artifact).unwrap();
        assert!(relative_error(&back.delta(), &pair.delta()).unwrap() <= 1e-7);
    }

    #[test]
    fn zero_adapter_and_zero_budget() {
        let (w, _) = instance(6, 5, 1);
        let zero = AdapterPair::new(DenseMatrix::zeros(1, 5), DenseMatrix::zeros(6, 1)).unwrap();
        let svd = svd_full(&w).unwrap();
        let art = compress_with_svd(&svd, &zero, &CompressConfig::new(10, 10, 3, 3)).unwrap().artifact;
        assert!(art.alpha.coefficients.values.iter().all(|&v| v == 0.0));
        assert_eq!(reconstruct(&svd, &art).unwrap().delta(), DenseMatrix::zeros(6, 5));

        let (_, pair) = instance(6, 5, 1);
        let none = compress_with_svd(&svd, &pair, &CompressConfig::new(10, 10, 0, 0)).unwrap();
        assert!(none.artifact.alpha.coefficients.is_empty());
        let back = reconstruct(&svd, &none.artifact).unwrap();
        assert_eq!(back.a(), &DenseMatrix::zeros(1, 5));
        assert_eq!(back.b(), &DenseMatrix::zeros(6, 1));
    }

    #[test]
    fn compress_is_deterministic() {
        let (w, pair) = instance(8, 10, 2);
        let config = CompressConfig {
            seed: 99,
            refit: true,
            ..CompressConfig::new(30, 25, 6, 5)
        };
        let a = compress(&w, &pair, &config).unwrap();
        let b = compress(&w, &pair, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.alpha.coefficients.len(), 6);
        assert_eq!(a.beta.coefficients.len(), 5);
    }

    #[test]
    fn budget_errors_and_split() {
        let (w, pair) = instance(6, 6, 1);
        assert!(matches!(
            compress(&w, &pair, &CompressConfig::new(4, 4, 5, 1)),
            Err(Error::BudgetExceedsPool { side: 'A', .. })
        ));
        assert_eq!(resolve_budget(Budget::Total(10), 20, 20, 3.0, 1.0).unwrap(), (8, 2));
        assert_eq!(resolve_budget(Budget::Total(10), 4, 20, 3.0, 1.0).unwrap(), (4, 6));
        assert_eq!(resolve_budget(Budget::Total(10), 20, 3, 0.0, 1.0).unwrap(), (7, 3));
        assert_eq!(resolve_budget(Budget::Total(4), 20, 20, 0.0, 0.0).unwrap(), (2, 2));
        assert!(resolve_budget(Budget::Total(41), 20, 20, 1.0, 1.0).is_err());
    }

    #[test]
    fn fingerprint_guards_reconstruction() {
        let (w, pair) = instance(6, 6, 1);
        let art = compress(&w, &pair, &CompressConfig::new(8, 8, 2, 2)).unwrap();
        let other = svd_full(&gaussian(6, 6, 5)).unwrap();
        let err = reconstruct(&other, &art).unwrap_err();
        assert_eq!(err.exit_code(), 4);

        let mut loose = art.clone();
        loose.svd_fingerprint = None;
        assert!(reconstruct(&other, &loose).is_ok());
    }

    #[test]
    fn quantized_coefficients_stay_within_half_step() {
        let (w, pair) = instance(10, 10, 2);
        let svd = svd_full(&w).unwrap();
        let raw = compress_with_svd(&svd, &pair, &CompressConfig::new(20, 20, 8, 8)).unwrap();
        let config = CompressConfig {
            quant_bits: Some(8),
            ..CompressConfig::new(20, 20, 8, 8)
        };
        let q = compress_with_svd(&svd, &pair, &config).unwrap();
        let block = &q.artifact.alpha;
        assert_eq!(block.bits(), 8);
        assert_eq!(block.coefficients.support, raw.artifact.alpha.coefficients.support);
        let bound = block.quantized.as_ref().unwrap().error_bound();
        for (x, y) in block.coefficients.values.iter().zip(&raw.artifact.alpha.coefficients.values) {
            assert!((x - y).abs() <= bound + 1e-12);
        }
        reconstruct(&svd, &q.artifact).unwrap();
    }

    #[test]
    fn slice_width_must_match_rank() {
        let (w, pair) = instance(6, 6, 2);
        let config = CompressConfig {
            slice_width: Some(3),
            ..CompressConfig::new(8, 8, 2, 2)
        };
        assert!(compress(&w, &pair, &config).is_err());
    }

    #[test]
    fn fingerprint_changes_with_factors() {
        let a = svd_full(&gaussian(4, 4, 1)).unwrap();
        let b = svd_full(&gaussian(4, 4, 2)).unwrap();
        assert_eq!(svd_fingerprint(&a), svd_fingerprint(&a.clone()));
        assert_ne!(svd_fingerprint(&a), svd_fingerprint(&b));
    }
}
