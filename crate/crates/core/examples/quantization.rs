//! Affine min-max quantization of a coefficient vector at every width.
//!
//! cargo run --example quantization

use solar::basis::RngStream;
use solar::quant::{dequantize, quantize, SUPPORTED_BITS};

fn main() -> solar::Result<()> {
    let mut rng = RngStream::from_sub_seed(3);
    let values: Vec<f64> = (0..1000).map(|_| rng.next_gaussian()).collect();
    println!("bits  payload bytes  max error   half step");
    for bits in SUPPORTED_BITS {
        let q = quantize(&values, bits)?;
        let back = dequantize(&q)?;
        let err = values.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("{bits:<5} {:<14} {err:<11.3e} {:.3e}", q.packed.len(), q.error_bound());
    }
    Ok(())
}
