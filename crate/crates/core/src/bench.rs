//! Synthetic instances and the sweep harness. Reconstruction error stands in
//! for downstream task accuracy throughout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::analysis::{c2_bound, effective_sketch_rank, tail_energy, BoundInputs};
use crate::basis::{generate_pool, splitmix64_mix, BasisMode, PoolTag, RngStream};
use crate::error::{Error, Result};
use crate::linalg::{orthonormalize, svd_full, DenseMatrix, SvdFactors};
use crate::pipeline::{
    compress_with_svd, reconstruct, relative_error, svd_truncate_from, AdapterPair, CompressConfig,
};
use crate::quant::footprint_params;

/// Stream tag for synthetic instances, disjoint from pool and trial tags.
const SYNTH_TAG: u64 = 3 << 32;

/// Singular values of the synthetic foundation weight, 0-based index `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spectrum {
    /// `ratio^t`.
    Geometric(f64),
    /// `(t + 1)^-power`.
    Polynomial(f64),
    /// All ones. The singular directions are then not unique, so measured
    /// alignment is meaningless.
    Flat,
}

impl Spectrum {
    pub fn value(&self, t: usize) -> f64 {
        match *self {
            Spectrum::Geometric(ratio) => ratio.powi(t as i32),
            Spectrum::Polynomial(power) => ((t + 1) as f64).powf(-power),
            Spectrum::Flat => 1.0,
        }
    }
}

impl std::str::FromStr for Spectrum {
    type Err = Error;

    /// `geometric:0.9`, `polynomial:1.5` or `flat`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        let num = || {
            arg.parse::<f64>()
                .map_err(|_| Error::Invalid(format!("spectrum '{s}' needs a numeric parameter")))
        };
        match kind {
            "geometric" => Ok(Spectrum::Geometric(num()?)),
            "polynomial" => Ok(Spectrum::Polynomial(num()?)),
            "flat" if arg.is_empty() => Ok(Spectrum::Flat),
            _ => Err(Error::Invalid(format!(
                "spectrum must be geometric:<ratio>, polynomial:<power> or flat, got '{s}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub spectrum: Spectrum,
    /// Share of the update's energy in the weight's top-`r` directions.
    pub alignment: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            m: 64,
            n: 64,
            r: 4,
            spectrum: Spectrum::Geometric(0.9),
            alignment: 1.0,
            seed: 0,
        }
    }
}

fn random_orthogonal(dim: usize, rng: &mut RngStream) -> Result<DenseMatrix> {
    let g = DenseMatrix::from_fn(dim, dim, |_, _| rng.next_gaussian());
    let q = orthonormalize(&g, 1e-10);
    if q.cols() != dim {
        return Err(Error::Singular("random Gaussian matrix was rank deficient"));
    }
    Ok(q)
}

/// Builds `W = U_W diag(s) V_W^T` and an adapter whose left directions are
/// `sqrt(a) u_s + sqrt(1 - a) u_{r+s}` (right directions likewise from `V_W`),
/// mixed by a random `r x r` core and scaled so `|B A|_F = 1`.
pub fn synth(spec: &SyntheticSpec) -> Result<(DenseMatrix, AdapterPair)> {
    let SyntheticSpec { m, n, r, alignment, .. } = *spec;
    if r == 0 || r > m.min(n) {
        return Err(Error::Invalid(format!("rank {r} must lie in 1..={}", m.min(n))));
    }
    if !(0.0..=1.0).contains(&alignment) {
        return Err(Error::Invalid(format!("alignment {alignment} must lie in [0, 1]")));
    }
    if alignment < 1.0 && 2 * r > m.min(n) {
        return Err(Error::Invalid(format!(
            "alignment below 1 needs 2r = {} complementary directions, min(m, n) = {}",
            2 * r,
            m.min(n)
        )));
    }
    let mut rng = RngStream::from_sub_seed(splitmix64_mix(spec.seed ^ SYNTH_TAG));
    let u = random_orthogonal(m, &mut rng)?;
    let v = random_orthogonal(n, &mut rng)?;
    let k = m.min(n);
    let us = DenseMatrix::from_fn(m, k, |i, j| u.get(i, j) * spec.spectrum.value(j));
    let w = us.matmul(&v.leading(n, k).transpose())?;

    let (wa, wc) = (alignment.sqrt(), (1.0 - alignment).sqrt());
    let mix = |q: &DenseMatrix, i: usize, s: usize| {
        let inside = q.get(i, s);
        if wc == 0.0 {
            inside
        } else {
            wa * inside + wc * q.get(i, r + s)
        }
    };
    let left = DenseMatrix::from_fn(m, r, |i, s| mix(&u, i, s));
    let right_t = DenseMatrix::from_fn(r, n, |s, j| mix(&v, j, s));
    let core = DenseMatrix::from_fn(r, r, |_, _| rng.next_gaussian());
    let scale = core.frobenius_norm();
    let b = left.matmul(&core.scaled(1.0 / scale))?;
    Ok((w, AdapterPair::new(right_t, b)?))
}

/// One configuration of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridPoint {
    /// Pool size, shared by both sides.
    pub n: usize,
    /// Budget per side.
    pub k: usize,
    pub mode: BasisMode,
}

/// `N x {10, 25, 50, 100}% of N`, aligned then random, for `N` in 50..400.
pub fn default_grid() -> Vec<GridPoint> {
    let mut grid = Vec::new();
    for mode in [BasisMode::Aligned, BasisMode::Random] {
        for n in [50, 100, 200, 400] {
            for pct in [10, 25, 50, 100] {
                grid.push(GridPoint { n, k: n * pct / 100, mode });
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub noise_sigma: f64,
    pub seed: u64,
    pub ridge: f64,
    pub refit: bool,
    pub quant_bits: Option<u8>,
    /// Record wall time per point; off keeps the CSV byte-reproducible (`ms` = 0).
    pub timing: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 1.0,
            seed: 0,
            ridge: 0.0,
            refit: false,
            quant_bits: None,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: GridPoint,
    pub err_product: f64,
    pub err_a: f64,
    pub err_b: f64,
    /// Factor fit residuals on the projected targets, relative.
    pub fit_a: f64,
    pub fit_b: f64,
    /// `None` when the pool is too small for the bound to apply.
    pub c2: Option<f64>,
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub spec: SyntheticSpec,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_HEADER: &str = "N,k,mode,err_product,err_A,err_B,c2,ms";

impl SweepResult {
    pub fn metadata_line(&self) -> String {
        let s = &self.spec;
        format!(
            "# metric: relative reconstruction error in place of task accuracy; m={} n={} r={} spectrum={:?} alignment={} seed={}",
            s.m, s.n, s.r, s.spectrum, s.alignment, s.seed
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.metadata_line();
        out.push('\n');
        out.push_str(SWEEP_HEADER);
        out.push('\n');
        for row in &self.rows {
            let c2 = row.c2.map_or_else(|| "nan".to_string(), |c| c.to_string());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                row.point.n, row.point.k, row.point.mode, row.err_product, row.err_a, row.err_b, c2, row.ms
            );
        }
        out
    }
}

fn point_config(point: GridPoint, config: &SweepConfig) -> CompressConfig {
    CompressConfig {
        noise_sigma: config.noise_sigma,
        seed: config.seed,
        ridge: config.ridge,
        refit: config.refit,
        basis_mode: point.mode,
        quant_bits: config.quant_bits,
        fingerprint: false,
        ..CompressConfig::new(point.n, point.n, point.k, point.k)
    }
}

/// Compresses and reconstructs one instance at one grid point.
pub fn run_point(
    svd: &SvdFactors,
    adapter: &AdapterPair,
    delta_sigma: &[f64],
    point: GridPoint,
    config: &SweepConfig,
) -> Result<SweepRow> {
    let started = Instant::now();
    let cc = point_config(point, config);
    let out = compress_with_svd(svd, adapter, &cc)?;
    let back = reconstruct(svd, &out.artifact)?;
    let err_product = relative_error(&back.delta(), &adapter.delta())?;
    let err_a = relative_error(back.a(), adapter.a())?;
    let err_b = relative_error(back.b(), adapter.b())?;
    let ms = if config.timing {
        started.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };

    let delta = adapter.delta();
    let pool_a = generate_pool(&out.artifact.pool_spec(PoolTag::A), svd)?;
    let pool_b = generate_pool(&out.artifact.pool_spec(PoolTag::B), svd)?;
    let inputs = BoundInputs {
        sigma: delta_sigma.to_vec(),
        n_a: point.n,
        n_b: point.n,
        r_a: effective_sketch_rank(&delta, &pool_a, None)?,
        r_b: effective_sketch_rank(&delta, &pool_b, None)?,
        k: 2 * point.k,
        training: None,
    };
    let c2 = match c2_bound(&inputs) {
        Ok(b) => Some(b.total),
        Err(Error::BoundInvalid(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(SweepRow {
        point,
        err_product,
        err_a,
        err_b,
        fit_a: out.a.relative(),
        fit_b: out.b.relative(),
        c2,
        ms,
    })
}

/// Runs every grid point on the instance `spec`; rows keep grid order.
pub fn sweep(spec: &SyntheticSpec, grid: &[GridPoint], config: &SweepConfig) -> Result<SweepResult> {
    let (w, adapter) = synth(spec)?;
    let svd = svd_full(&w)?;
    let delta_sigma = svd_full(&adapter.delta())?.sigma;
    let rows = grid
        .par_iter()
        .map(|&point| run_point(&svd, &adapter, &delta_sigma, point, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        spec: spec.clone(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    SolarAligned,
    SolarRandom,
    SvdTruncation,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::SolarAligned => "solar-aligned",
            Method::SolarRandom => "solar-random",
            Method::SvdTruncation => "svd-truncation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub method: Method,
    /// Pool size and per-side budget the row was matched against.
    pub n: usize,
    pub k: usize,
    /// Truncation rank for the SVD row.
    pub rank: Option<usize>,
    /// Communicated parameters for one layer.
    pub params: u64,
    pub err_product: f64,
}

pub const BASELINE_HEADER: &str = "method,N,k,rank,params,err_product";

pub fn baselines_to_csv(rows: &[BaselineRow]) -> String {
    let mut out = format!("{BASELINE_HEADER}\n");
    for row in rows {
        let rank = row.rank.map_or_else(String::new, |t| t.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.method.as_str(),
            row.n,
            row.k,
            rank,
            row.params,
            row.err_product
        );
    }
    out
}

/// SOLAR with aligned and random pools against SVD truncation of `B A` at the
/// largest rank `t` with `t (m + n)` no larger than SOLAR's one-layer footprint.
pub fn compare_baselines(
    w: &DenseMatrix,
    adapter: &AdapterPair,
    budgets: &[(usize, usize)],
    config: &SweepConfig,
) -> Result<Vec<BaselineRow>> {
    if w.shape() != (adapter.m(), adapter.n()) {
        return Err(Error::DimensionMismatch {
            op: "compare_baselines (weight vs adapter delta)",
            left: w.shape(),
            right: (adapter.m(), adapter.n()),
        });
    }
    let svd = svd_full(w)?;
    let delta = adapter.delta();
    let delta_svd = svd_full(&delta)?;
    let (m, n) = w.shape();
    let mut rows = Vec::new();
    for &(pool, k) in budgets {
        let params = footprint_params(1, k as u64, k as u64, pool as u64, pool as u64);
        for (mode, method) in [
            (BasisMode::Aligned, Method::SolarAligned),
            (BasisMode::Random, Method::SolarRandom),
        ] {
            let point = GridPoint { n: pool, k, mode };
            let out = compress_with_svd(&svd, adapter, &point_config(point, config))?;
            let back = reconstruct(&svd, &out.artifact)?;
            rows.push(BaselineRow {
                method,
                n: pool,
                k,
                rank: None,
                params,
                err_product: relative_error(&back.delta(), &delta)?,
            });
        }
        let t = ((params / (m + n) as u64) as usize).min(m.min(n));
        let trunc = svd_truncate_from(&delta_svd, t);
        rows.push(BaselineRow {
            method: Method::SvdTruncation,
            n: pool,
            k,
            rank: Some(t),
            params: (t * (m + n)) as u64,
            err_product: relative_error(&trunc.adapter.delta(), &delta)?,
        });
    }
    Ok(rows)
}

/// Relative Eckart-Young error of a rank-`t` truncation, for cross-checks.
pub fn truncation_oracle(sigma: &[f64], t: usize) -> f64 {
    let total = tail_energy(sigma, 0);
    let tail = tail_energy(sigma, t);
    if total > 0.0 {
        tail / total
    } else {
        0.0
    }
}

/// Parses a flat `key = value` file. Blank lines and `#` comments are skipped;
/// later keys override earlier ones.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(head, _)| head).trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Invalid(format!(
                "config line {}: expected key=value, got '{line}'",
                lineno + 1
            )));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Invalid(format!("config line {}: empty key", lineno + 1)));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::subspace_similarity;

    fn small(alignment: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            m: 16,
            n: 12,
            r: 2,
            alignment,
            seed,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn alignment_extremes() {
        let (w, pair) = synth(&small(1.0, 1)).unwrap();
        let d = pair.delta();
        assert!((d.frobenius_norm() - 1.0).abs() < 1e-12);
        assert!((subspace_similarity(&w, &d, 2, 2).unwrap() - 2.0).abs() < 1e-6);

        let (w, pair) = synth(&small(0.0, 1)).unwrap();
        assert!(subspace_similarity(&w, &pair.delta(), 2, 2).unwrap() <= 1e-6);
    }

    #[test]
    fn partial_alignment_is_measured() {
        for a in [0.25, 0.5, 0.8] {
            let (w, pair) = synth(&small(a, 3)).unwrap();
            let phi = subspace_similarity(&w, &pair.delta(), 2, 2).unwrap();
            assert!((phi / 2.0 - a).abs() < 0.05, "{a}: {phi}");
        }
    }

    #[test]
    fn synth_is_deterministic_and_validated() {
        assert_eq!(synth(&small(0.5, 9)).unwrap(), synth(&small(0.5, 9)).unwrap());
        assert_ne!(synth(&small(0.5, 9)).unwrap().0, synth(&small(0.5, 10)).unwrap().0);
        assert!(synth(&SyntheticSpec { r: 13, ..small(1.0, 0) }).is_err());
        assert!(synth(&SyntheticSpec { r: 7, ..small(0.5, 0) }).is_err());
        assert!(synth(&small(1.5, 0)).is_err());
    }

    #[test]
    fn spectra() {
        assert_eq!("geometric:0.5".parse::<Spectrum>().unwrap().value(2), 0.25);
        assert_eq!("polynomial:2".parse::<Spectrum>().unwrap().value(1), 0.25);
        assert_eq!("flat".parse::<Spectrum>().unwrap().value(7), 1.0);
        assert!("cubic".parse::<Spectrum>().is_err());
    }

    #[test]
    fn sweep_csv_is_reproducible() {
        let spec = small(1.0, 4);
        let grid = [
            GridPoint { n: 10, k: 2, mode: BasisMode::Aligned },
            GridPoint { n: 10, k: 5, mode: BasisMode::Random },
        ];
        let a = sweep(&spec, &grid, &SweepConfig::default()).unwrap().to_csv();
        let b = sweep(&spec, &grid, &SweepConfig::default()).unwrap().to_csv();
        assert_eq!(a, b);
        let lines: Vec<&str> = a.lines().collect();
        assert!(lines[0].starts_with('#'));
        assert_eq!(lines[1], SWEEP_HEADER);
        assert!(lines[2].starts_with("10,2,aligned,"));
        assert!(lines[3].starts_with("10,5,random,"));
    }

    #[test]
    fn spanning_point_is_exact() {
        let spec = small(1.0, 5);
        // A_proj is 2 x 12 = 24 entries, B_proj 16 x 2 = 32
        let grid = [GridPoint { n: 40, k: 40, mode: BasisMode::Aligned }];
        let res = sweep(&spec, &grid, &SweepConfig::default()).unwrap();
        assert!(res.rows[0].err_product <= 1e-7, "{}", res.rows[0].err_product);
    }

    #[test]
    fn baselines() {
        let (w, pair) = synth(&small(1.0, 6)).unwrap();
        let rows = compare_baselines(&w, &pair, &[(20, 4), (40, 40)], &SweepConfig::default()).unwrap();
        assert_eq!(rows.len(), 6);
        let sigma = svd_full(&pair.delta()).unwrap().sigma;
        for row in rows.iter().filter(|r| r.method == Method::SvdTruncation) {
            let t = row.rank.unwrap();
            assert!((row.err_product - truncation_oracle(&sigma, t)).abs() < 1e-10);
            assert!(row.params <= footprint_params(1, row.k as u64, row.k as u64, row.n as u64, row.n as u64));
        }
        for row in &rows[3..] {
            assert!(row.err_product <= 1e-7, "{:?}", row);
        }
        let csv = baselines_to_csv(&rows);
        assert!(csv.starts_with(BASELINE_HEADER));

        let zero = AdapterPair::new(DenseMatrix::zeros(2, 12), DenseMatrix::zeros(16, 2)).unwrap();
        for row in compare_baselines(&w, &zero, &[(20, 4)], &SweepConfig::default()).unwrap() {
            assert_eq!(row.err_product, 0.0);
        }
    }

    #[test]
    fn config_parsing() {
        let map = parse_config("# comment\npool-a = 80\n\nseed=3 # trailing\nseed=4\n").unwrap();
        assert_eq!(map["pool-a"], "80");
        assert_eq!(map["seed"], "4");
        assert!(parse_config("novalue\n").is_err());
        assert!(parse_config("=3\n").is_err());
    }
}
