//! Closed-form compression bound next to the measured error, over pool sizes.
//!
//! cargo run --release --example error_bound

use solar::analysis::{c2_bound, effective_sketch_rank, empirical_rangefinder_error, BoundInputs};
use solar::basis::{generate_pool, PoolTag};
use solar::bench::{synth, Spectrum, SyntheticSpec};
use solar::linalg::svd_full;
use solar::pipeline::{compress_with_svd, reconstruct, CompressConfig};

fn main() -> solar::Result<()> {
    let spec = SyntheticSpec { m: 32, n: 32, r: 3, spectrum: Spectrum::Polynomial(1.0), ..SyntheticSpec::default() };
    let (w, adapter) = synth(&spec)?;
    let svd = svd_full(&w)?;
    let delta = adapter.delta();
    let sigma = svd_full(&delta)?.sigma;

    println!("N     k    r_A r_B  measured   C2");
    for n in [20, 40, 80, 160] {
        let k = n / 2;
        let out = compress_with_svd(&svd, &adapter, &CompressConfig::new(n, n, k, k))?;
        let back = reconstruct(&svd, &out.artifact)?;
        let measured = back.delta().sub(&delta)?.frobenius_norm();
        let r_a = effective_sketch_rank(&delta, &generate_pool(&out.artifact.pool_spec(PoolTag::A), &svd)?, None)?;
        let r_b = effective_sketch_rank(&delta, &generate_pool(&out.artifact.pool_spec(PoolTag::B), &svd)?, None)?;
        let bound = c2_bound(&BoundInputs { sigma: sigma.clone(), n_a: n, n_b: n, r_a, r_b, k: 2 * k, training: None });
        let bound = bound.map_or_else(|e| format!("n/a ({e})"), |b| format!("{:.3e}", b.total));
        println!("{n:<5} {k:<4} {r_a:<3} {r_b:<3}  {measured:.3e}  {bound}");
    }

    // Monte-Carlo check of the rangefinder term on a full-rank matrix
    let rep = empirical_rangefinder_error(&w, 12, 200, 1, 6)?;
    println!(
        "\nrangefinder, {} probes, rank {}: mean error {:.4} <= bound {:.4}",
        rep.num_probes, rep.target_rank, rep.mean_error, rep.bound
    );
    Ok(())
}
