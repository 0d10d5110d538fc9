use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{diversity_series, fit_turnover_profile, turnover_rates_with, StatsError, TopListPolicy};
use crate::table::FrequencyTable;

/// Shape of the statistic vector, fixed for a whole analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsLayout {
    pub y_max: usize,
    pub timepoints: usize,
}

impl StatsLayout {
    pub const STANDARD: StatsLayout = StatsLayout {
        y_max: 142,
        timepoints: 32,
    };

    pub fn len(&self) -> usize {
        2 + self.y_max + self.timepoints
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Column names in vector order: `x`, `mean_D`, `z_1..`, `D_1..`.
    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.len());
        names.push("x".to_string());
        names.push("mean_D".to_string());
        names.extend((1..=self.y_max).map(|y| format!("z_{y}")));
        names.extend((1..=self.timepoints).map(|t| format!("D_{t}")));
        names
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub exponent_x: f64,
    pub mean_diversity: f64,
    pub mean_turnover_by_size: Vec<f64>,
    pub diversity_by_timepoint: Vec<f64>,
}

impl SummaryStats {
    pub fn layout(&self) -> StatsLayout {
        StatsLayout {
            y_max: self.mean_turnover_by_size.len(),
            timepoints: self.diversity_by_timepoint.len(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.layout().len());
        v.push(self.exponent_x);
        v.push(self.mean_diversity);
        v.extend_from_slice(&self.mean_turnover_by_size);
        v.extend_from_slice(&self.diversity_by_timepoint);
        v
    }

    pub fn from_vec(values: &[f64], layout: StatsLayout) -> Result<Self, StatsError> {
        if values.len() != layout.len() {
            return Err(StatsError::Invalid(format!(
                "expected {} statistics, found {}",
                layout.len(),
                values.len()
            )));
        }
        Ok(SummaryStats {
            exponent_x: values[0],
            mean_diversity: values[1],
            mean_turnover_by_size: values[2..2 + layout.y_max].to_vec(),
            diversity_by_timepoint: values[2 + layout.y_max..].to_vec(),
        })
    }

    /// Flat object in column order.
    pub fn to_json_object(&self) -> Value {
        let map: Map<String, Value> = self
            .layout()
            .names()
            .into_iter()
            .zip(self.to_vec())
            .map(|(k, v)| (k, Value::from(v)))
            .collect();
        Value::Object(map)
    }

    pub fn from_json_object(value: &Value) -> Result<Self, StatsError> {
        let map = value
            .as_object()
            .ok_or_else(|| StatsError::Invalid("summary must be a JSON object".into()))?;
        let y_max = map.keys().filter(|k| k.starts_with("z_")).count();
        let timepoints = map.keys().filter(|k| k.starts_with("D_")).count();
        let layout = StatsLayout { y_max, timepoints };
        let values = layout
            .names()
            .iter()
            .map(|n| {
                map.get(n)
                    .and_then(Value::as_f64)
                    .ok_or_else(|| StatsError::Invalid(format!("missing statistic {n}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_vec(&values, layout)
    }

    /// Header line and one data line.
    pub fn to_csv(&self) -> String {
        let names = self.layout().names().join(",");
        let values: Vec<String> = self.to_vec().iter().map(|v| v.to_string()).collect();
        format!("{}\n{}\n", names, values.join(","))
    }
}

/// Assembles `(x, D̄, z̄_1..z̄_ymax, D_1..D_T)` for a table with exactly `T` timepoints.
///
/// Under [`TopListPolicy::Truncate`] the exponent `x` is fitted over the list
/// sizes `1..=min(y_max, fewest variants at any timepoint)` only; longer lists
/// saturate at the whole population and would flatten the profile.
pub fn summarize(
    table: &FrequencyTable,
    layout: StatsLayout,
    policy: TopListPolicy,
) -> Result<SummaryStats, StatsError> {
    if table.n_timepoints() != layout.timepoints {
        return Err(StatsError::LayoutMismatch {
            expected: layout.timepoints,
            found: table.n_timepoints(),
        });
    }
    let turnover = turnover_rates_with(table, layout.y_max, policy)?;
    // Only list sizes that every timepoint fills take part in the fit.
    let supported = table.richness().into_iter().min().unwrap_or(0).min(layout.y_max);
    let profile = fit_turnover_profile(&turnover[..supported])?;
    let diversity = diversity_series(table)?;
    let stats = SummaryStats {
        exponent_x: profile.exponent,
        mean_diversity: diversity.mean,
        mean_turnover_by_size: turnover,
        diversity_by_timepoint: diversity.per_timepoint,
    };
    debug_assert!(stats.to_vec().iter().all(|v| v.is_finite()));
    Ok(stats)
}
