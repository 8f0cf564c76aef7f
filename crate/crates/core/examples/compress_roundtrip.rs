//! Compress a synthetic adapter, write it as `.solar`, read it back and rebuild.
//!
//! cargo run --example compress_roundtrip

use solar::bench::{synth, SyntheticSpec};
use solar::format::{decode, encode};
use solar::linalg::svd_full;
use solar::pipeline::{compress_with_svd, reconstruct, relative_error, CompressConfig};

fn main() -> solar::Result<()> {
    let (w, adapter) = synth(&SyntheticSpec { m: 48, n: 40, r: 4, ..SyntheticSpec::default() })?;
    let svd = svd_full(&w)?;

    for (label, bits) in [("raw f64", None), ("8-bit", Some(8)), ("4-bit", Some(4))] {
        let config = CompressConfig {
            seed: 17,
            refit: true,
            quant_bits: bits,
            ..CompressConfig::new(400, 400, 120, 120)
        };
        let out = compress_with_svd(&svd, &adapter, &config)?;
        let bytes = encode(&[("layer.q".to_string(), out.artifact)])?;
        let (_, artifact) = decode(&bytes)?.remove(0);
        let back = reconstruct(&svd, &artifact)?;
        let err = relative_error(&back.delta(), &adapter.delta())?;
        println!(
            "{label:>8}: {} bytes on disk (dense adapter: {} bytes), product error {err:.4}",
            bytes.len(),
            8 * (adapter.a().data().len() + adapter.b().data().len())
        );
    }
    Ok(())
}
