//! How much of an update lives in the weight's leading singular directions.
//!
//! cargo run --example subspace_similarity

use solar::analysis::{similarity_grid, Side};
use solar::bench::{synth, SyntheticSpec};

fn main() -> solar::Result<()> {
    for alignment in [1.0, 0.5, 0.0] {
        let (w, adapter) = synth(&SyntheticSpec { alignment, ..SyntheticSpec::default() })?;
        let grid = similarity_grid(&w, &adapter.delta(), 8, 4, Side::Left)?;
        let row: Vec<String> = [1, 2, 4, 8].iter().map(|&i| format!("{:.3}", grid.get(i, 4))).collect();
        println!("alignment {alignment:.1}: phi(i, 4) for i = 1, 2, 4, 8 -> {}", row.join("  "));
    }
    Ok(())
}
