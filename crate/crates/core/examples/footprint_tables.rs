//! Print every built-in footprint preset, then one custom configuration.
//!
//! cargo run --example footprint_tables

use solar::quant::{presets, FootprintScheme};

fn main() -> solar::Result<()> {
    for p in presets() {
        println!("{:<28} {:>8}  {}", p.name, p.report().total(), p.description);
    }
    println!();
    // 12 layers, 2000-basis pools, 400 coefficients per side, 8-bit payloads
    let custom = FootprintScheme::SolarBytes {
        units: 12,
        k_a: 400,
        k_b: 400,
        mask_bits: 4000,
        bits: 8,
    };
    print!("{}", custom.report("custom")?.to_table());
    Ok(())
}
