//! Pool-size by budget sweep for both basis modes, printed as CSV, followed
//! by the SVD-truncation baseline at matched parameter counts.
//!
//! cargo run --release --example sweep

use solar::basis::BasisMode;
use solar::bench::{baselines_to_csv, compare_baselines, sweep, synth, GridPoint, SweepConfig, SyntheticSpec};

fn main() -> solar::Result<()> {
    let spec = SyntheticSpec { m: 32, n: 32, r: 2, ..SyntheticSpec::default() };
    let mut grid = Vec::new();
    for mode in [BasisMode::Aligned, BasisMode::Random] {
        for n in [25, 50, 100] {
            for k in [n / 5, n / 2] {
                grid.push(GridPoint { n, k, mode });
            }
        }
    }
    let config = SweepConfig { refit: true, ..SweepConfig::default() };
    print!("{}", sweep(&spec, &grid, &config)?.to_csv());

    let (w, adapter) = synth(&spec)?;
    println!();
    print!("{}", baselines_to_csv(&compare_baselines(&w, &adapter, &[(50, 10), (100, 50)], &config)?));
    Ok(())
}
