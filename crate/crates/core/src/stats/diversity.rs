use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::table::FrequencyTable;

/// Simpson diversity `1 - Σ p_i²`: the chance that two tokens drawn with
/// replacement belong to different variants.
pub fn simpson_diversity(counts: &[u64]) -> Result<f64, StatsError> {
    let total: u128 = counts.iter().map(|&c| c as u128).sum();
    if total == 0 {
        return Err(StatsError::AllZero);
    }
    let sum_sq: u128 = counts.iter().map(|&c| (c as u128) * (c as u128)).sum();
    let total_sq = total * total;
    Ok((total_sq - sum_sq) as f64 / total_sq as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversitySeries {
    pub per_timepoint: Vec<f64>,
    pub mean: f64,
}

pub fn diversity_series(table: &FrequencyTable) -> Result<DiversitySeries, StatsError> {
    let per_timepoint = table
        .counts
        .iter()
        .map(|row| simpson_diversity(row))
        .collect::<Result<Vec<_>, _>>()?;
    if per_timepoint.is_empty() {
        return Err(StatsError::TooFewTimepoints { needed: 1, found: 0 });
    }
    let mean = per_timepoint.iter().sum::<f64>() / per_timepoint.len() as f64;
    Ok(DiversitySeries { per_timepoint, mean })
}
