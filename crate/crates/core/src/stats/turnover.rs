//! Top-list turn-over and the power-law turn-over profile `z_y = A · y^x`.

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::table::FrequencyTable;

/// How top lists are formed when a timepoint holds fewer than `y` variants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopListPolicy {
    /// Every timepoint must hold at least `y_max` variants.
    #[default]
    Strict,
    /// A list longer than the number of present variants holds all of them.
    /// Used for simulated tables, whose richness varies with the bias.
    Truncate,
}

/// The `y` most frequent variants, ties broken by ascending id.
pub fn top_list<S: AsRef<str> + Ord>(counts: &[(S, u64)], y: usize) -> Result<Vec<&S>, StatsError> {
    let mut positive: Vec<&(S, u64)> = counts.iter().filter(|(_, c)| *c > 0).collect();
    if y == 0 {
        return Err(StatsError::Invalid("list size must be positive".into()));
    }
    if positive.len() < y {
        return Err(StatsError::InsufficientVariants {
            needed: y,
            found: positive.len(),
        });
    }
    positive.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(positive.into_iter().take(y).map(|(s, _)| s).collect())
}

/// Column indices of one row's positive variants in top-list order.
fn ranked_columns(row: &[u64], id_rank: &[usize]) -> Vec<usize> {
    let mut cols: Vec<usize> = (0..row.len()).filter(|&c| row[c] > 0).collect();
    cols.sort_unstable_by(|&a, &b| row[b].cmp(&row[a]).then(id_rank[a].cmp(&id_rank[b])));
    cols
}

/// Rank of each column when ids are sorted ascending.
fn id_ranks(table: &FrequencyTable) -> Vec<usize> {
    let mut order: Vec<usize> = (0..table.n_variants()).collect();
    if !table.variant_ids.windows(2).all(|w| w[0] < w[1]) {
        order.sort_by(|&a, &b| table.variant_ids[a].cmp(&table.variant_ids[b]));
    }
    let mut rank = vec![0; order.len()];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    rank
}

/// Mean number of variants entering the top-`y` list between consecutive
/// timepoints, for each `y` in `1..=y_max`.
pub fn turnover_rates(table: &FrequencyTable, y_max: usize) -> Result<Vec<f64>, StatsError> {
    turnover_rates_with(table, y_max, TopListPolicy::Strict)
}

pub fn turnover_rates_with(
    table: &FrequencyTable,
    y_max: usize,
    policy: TopListPolicy,
) -> Result<Vec<f64>, StatsError> {
    if y_max == 0 {
        return Err(StatsError::Invalid("y_max must be positive".into()));
    }
    let n_t = table.n_timepoints();
    if n_t < 2 {
        return Err(StatsError::TooFewTimepoints { needed: 2, found: n_t });
    }
    let id_rank = id_ranks(table);
    let ranked: Vec<Vec<usize>> = table.counts.iter().map(|r| ranked_columns(r, &id_rank)).collect();
    if policy == TopListPolicy::Strict {
        if let Some((t, r)) = ranked.iter().enumerate().find(|(_, r)| r.len() < y_max) {
            return Err(StatsError::ListTooLong {
                y_max,
                timepoint: table.timepoints[t],
                found: r.len(),
            });
        }
    }
    if ranked.iter().any(|r| r.is_empty()) {
        return Err(StatsError::AllZero);
    }

    let absent = usize::MAX;
    let mut prev_pos = vec![absent; table.n_variants()];
    let mut next_pos = vec![absent; table.n_variants()];
    let mut totals = vec![0u64; y_max];
    for pair in ranked.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        for (p, &c) in prev.iter().enumerate() {
            prev_pos[c] = p;
        }
        for (p, &c) in next.iter().enumerate() {
            next_pos[c] = p;
        }
        // z_y = #{i < min(y, |next|) : prev_pos(next[i]) >= y}, updated as y grows
        let mut z = 0u64;
        for y in 1..=y_max {
            if y <= next.len() && prev_pos[next[y - 1]] >= y {
                z += 1;
            }
            let leaving = y - 1;
            if leaving < prev.len() && next_pos[prev[leaving]] < leaving.min(next.len()) {
                z -= 1;
            }
            totals[y - 1] += z;
        }
        for &c in prev {
            prev_pos[c] = absent;
        }
        for &c in next {
            next_pos[c] = absent;
        }
    }
    let pairs = (n_t - 1) as f64;
    Ok(totals.into_iter().map(|t| t as f64 / pairs).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnoverProfile {
    pub mean_turnover: Vec<f64>,
    pub coefficient: f64,
    pub exponent: f64,
}

impl TurnoverProfile {
    pub fn predict(&self, y: usize) -> f64 {
        self.coefficient * (y as f64).powf(self.exponent)
    }
}

/// Least-squares fit of `ln z̄_y = ln A + x ln y` over the positive entries.
pub fn fit_turnover_profile(mean_turnover: &[f64]) -> Result<TurnoverProfile, StatsError> {
    let points: Vec<(f64, f64)> = mean_turnover
        .iter()
        .enumerate()
        .filter(|(_, &z)| z > 0.0)
        .map(|(i, &z)| (((i + 1) as f64).ln(), z.ln()))
        .collect();
    if mean_turnover.len() < 3 || points.len() < 3 {
        return Err(StatsError::DegenerateProfile(format!(
            "{} positive turn-over values, need at least 3",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if !slope.is_finite() || !intercept.is_finite() {
        return Err(StatsError::DegenerateProfile("non-finite fit".into()));
    }
    Ok(TurnoverProfile {
        mean_turnover: mean_turnover.to_vec(),
        coefficient: intercept.exp(),
        exponent: slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn table(rows: Vec<Vec<u64>>) -> FrequencyTable {
        let k = rows[0].len();
        FrequencyTable::new(
            (1..=rows.len() as i64).collect(),
            (0..k).map(|i| format!("{}", (b'A' + i as u8) as char)).collect(),
            rows,
        )
        .unwrap()
    }

    /// Set-difference oracle built on `top_list`.
    fn oracle(t: &FrequencyTable, y_max: usize, policy: TopListPolicy) -> Vec<f64> {
        let lists = |row: &[u64], y: usize| -> BTreeSet<String> {
            let pairs: Vec<(String, u64)> = t.variant_ids.iter().cloned().zip(row.iter().copied()).collect();
            let present = row.iter().filter(|&&c| c > 0).count();
            let y = match policy {
                TopListPolicy::Strict => y,
                TopListPolicy::Truncate => y.min(present),
            };
            top_list(&pairs, y).unwrap().into_iter().cloned().collect()
        };
        (1..=y_max)
            .map(|y| {
                let total: usize = (0..t.n_timepoints() - 1)
                    .map(|i| lists(&t.counts[i + 1], y).difference(&lists(&t.counts[i], y)).count())
                    .sum();
                total as f64 / (t.n_timepoints() - 1) as f64
            })
            .collect()
    }

    #[test]
    fn top_list_rules() {
        assert_eq!(top_list(&[("A", 3), ("B", 1)], 1).unwrap(), vec![&"A"]);
        assert_eq!(top_list(&[("C", 1), ("B", 2), ("A", 2)], 2).unwrap(), vec![&"A", &"B"]);
        assert_eq!(
            top_list(&[("A", 1)], 2).unwrap_err(),
            StatsError::InsufficientVariants { needed: 2, found: 1 }
        );
        assert!(top_list(&[("A", 1), ("B", 0)], 2).is_err());
    }

    #[test]
    fn identical_rows_have_no_turnover() {
        let t = table(vec![vec![5, 3, 1], vec![5, 3, 1]]);
        assert_eq!(turnover_rates(&t, 3).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn hand_set_difference() {
        // t1 top-2 = [A, B], t2 top-2 = [A, C]
        let t = table(vec![vec![5, 3, 1], vec![5, 1, 3]]);
        let z = turnover_rates(&t, 2).unwrap();
        assert_eq!(z, vec![0.0, 1.0]);
    }

    #[test]
    fn complete_replacement_hits_upper_bound() {
        let t = table(vec![vec![3, 2, 0, 0], vec![0, 0, 3, 2], vec![3, 2, 0, 0]]);
        assert_eq!(turnover_rates(&t, 2).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn strict_policy_names_timepoint() {
        let t = table(vec![vec![3, 2, 1], vec![3, 0, 0]]);
        let err = turnover_rates(&t, 2).unwrap_err();
        assert_eq!(
            err,
            StatsError::ListTooLong {
                y_max: 2,
                timepoint: 2,
                found: 1
            }
        );
        assert!(err.to_string().contains("timepoint 2"));
        let z = turnover_rates_with(&t, 3, TopListPolicy::Truncate).unwrap();
        assert_eq!(z, oracle(&t, 3, TopListPolicy::Truncate));
    }

    #[test]
    fn exact_power_law_fit() {
        let z: Vec<f64> = (1..=10).map(|y| 2.0 * (y as f64).powf(0.86)).collect();
        let p = fit_turnover_profile(&z).unwrap();
        assert!((p.coefficient - 2.0).abs() < 1e-9);
        assert!((p.exponent - 0.86).abs() < 1e-9);
        let flat = fit_turnover_profile(&[5.0; 8]).unwrap();
        assert!(flat.exponent.abs() < 1e-12);
        assert!((flat.coefficient - 5.0).abs() < 1e-12);
    }

    #[test]
    fn fit_drops_zeros_and_rejects_degenerate() {
        let z = [0.0, 0.0, 3.0f64.powf(0.5), 2.0, 5.0f64.sqrt()];
        let p = fit_turnover_profile(&z).unwrap();
        assert!((p.exponent - 0.5).abs() < 1e-12);
        assert!(matches!(
            fit_turnover_profile(&[0.0, 1.0, 2.0]),
            Err(StatsError::DegenerateProfile(_))
        ));
        assert!(fit_turnover_profile(&[1.0, 2.0]).is_err());
    }

    fn arb_table() -> impl Strategy<Value = FrequencyTable> {
        (2usize..6, 1usize..9).prop_flat_map(|(rows, cols)| {
            prop::collection::vec(prop::collection::vec(0u64..5, cols), rows).prop_filter_map(
                "every row needs a variant",
                |rows| {
                    if rows.iter().all(|r| r.iter().any(|&c| c > 0)) {
                        Some(table(rows))
                    } else {
                        None
                    }
                },
            )
        })
    }

    proptest! {
        #[test]
        fn matches_set_difference_oracle(t in arb_table(), y_max in 1usize..10) {
            let min_rich = *t.richness().iter().min().unwrap();
            match turnover_rates(&t, y_max) {
                Ok(z) => prop_assert_eq!(z, oracle(&t, y_max, TopListPolicy::Strict)),
                Err(_) => prop_assert!(y_max > min_rich),
            }
            let z = turnover_rates_with(&t, y_max, TopListPolicy::Truncate).unwrap();
            prop_assert_eq!(&z, &oracle(&t, y_max, TopListPolicy::Truncate));
            for (i, v) in z.iter().enumerate() {
                prop_assert!(*v >= 0.0 && *v <= (i + 1) as f64);
            }
        }

        #[test]
        fn recovers_any_power_law(a in 1e-3f64..1e3, x in -2.0f64..2.0, n in 3usize..150) {
            let z: Vec<f64> = (1..=n).map(|y| a * (y as f64).powf(x)).collect();
            let p = fit_turnover_profile(&z).unwrap();
            prop_assert!((p.exponent - x).abs() < 1e-9);
            prop_assert!((p.coefficient - a).abs() / a < 1e-9);
        }
    }
}
