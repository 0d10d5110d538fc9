//! Fixtures shared by the benchmarks.

use cultabc::{run_simulation, FrequencyTable, SimulationConfig};

/// A recorded table at the default population settings.
pub fn standard_table(bias: f64, seed: u64) -> FrequencyTable {
    run_simulation(&SimulationConfig::standard(bias, seed))
        .expect("default config is valid")
        .table
}
