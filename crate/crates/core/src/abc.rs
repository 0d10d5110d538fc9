//! Rejection ABC for the bias parameter `b`.
//!
//! Each summary statistic is divided by its median absolute deviation over
//! the reference before Euclidean distances are taken, and the
//! `⌈ε · |reference|⌉` closest rows form the posterior sample.

use rand::distributions::{Distribution, Uniform};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::map_indexed;
use crate::seed::{replicate_rng, rng_from_seed};
use crate::simulator::{run_simulation, SimulationConfig};
use crate::stats::{summarize, StatsLayout, TopListPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AbcError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("simulation {index} failed: {message}")]
    Simulation { index: usize, message: String },
    #[error("reference is empty")]
    EmptyReference,
    #[error("statistic {0} has zero median absolute deviation across the reference")]
    DegenerateStatistic(usize),
    #[error("need at least {needed} samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("reference too small: {0}")]
    ReferenceTooSmall(String),
    #[error("non-finite observed statistics")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectionConfig {
    pub iterations: usize,
    pub tolerance: f64,
    pub prior_low: f64,
    pub prior_high: f64,
}

impl RejectionConfig {
    /// 100,000 draws from U(-0.2, 0.2), ε = 0.01.
    pub const STANDARD: RejectionConfig = RejectionConfig {
        iterations: 100_000,
        tolerance: 0.01,
        prior_low: -0.2,
        prior_high: 0.2,
    };

    fn validate_prior(&self) -> Result<(), AbcError> {
        if !(self.prior_low.is_finite() && self.prior_high.is_finite()) || self.prior_low > self.prior_high {
            return Err(AbcError::Config(format!(
                "prior bounds [{}, {}] are not an interval",
                self.prior_low, self.prior_high
            )));
        }
        if self.iterations == 0 {
            return Err(AbcError::Config("iterations must be positive".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), AbcError> {
        self.validate_prior()?;
        check_tolerance(self.tolerance)?;
        if self.tolerance * (self.iterations as f64) < 10.0 - 1e-9 {
            return Err(AbcError::Config(format!(
                "tolerance × iterations = {} accepts fewer than 10 rows",
                self.tolerance * self.iterations as f64
            )));
        }
        Ok(())
    }
}

fn check_tolerance(tolerance: f64) -> Result<(), AbcError> {
    if tolerance > 0.0 && tolerance <= 1.0 {
        Ok(())
    } else {
        Err(AbcError::Config(format!(
            "tolerance must lie in (0, 1], got {tolerance}"
        )))
    }
}

/// Number of rows accepted at tolerance `tolerance` from a pool of `n`.
pub fn accepted_count(tolerance: f64, n: usize) -> usize {
    ((tolerance * n as f64 - 1e-9).ceil() as usize).clamp(1, n.max(1))
}

/// One simulated draw: the bias and its two inference statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub b: f64,
    pub x: f64,
    pub mean_d: f64,
}

impl ReferenceRow {
    pub fn stats(&self) -> [f64; 2] {
        [self.x, self.mean_d]
    }
}

/// Simulates `config.iterations` rows with `b` drawn from the uniform prior.
///
/// Row `i` draws from replicate stream `i` of `seed`, so the table does not
/// depend on the number of worker threads.
pub fn generate_reference(
    config: &RejectionConfig,
    template: &SimulationConfig,
    layout: StatsLayout,
    seed: u64,
) -> Result<Vec<ReferenceRow>, AbcError> {
    config.validate_prior()?;
    map_indexed(config.iterations, |i| {
        let mut rng = replicate_rng(seed, i as u64);
        let b = draw_uniform(config.prior_low, config.prior_high, &mut rng);
        let sim = SimulationConfig {
            bias: b,
            seed: rng.next_u64(),
            ..template.clone()
        };
        let (x, mean_d) = simulate_xd(&sim, layout).map_err(|message| AbcError::Simulation { index: i, message })?;
        Ok(ReferenceRow { b, x, mean_d })
    })
}

pub(crate) fn draw_uniform(low: f64, high: f64, rng: &mut impl rand::Rng) -> f64 {
    if low == high {
        low
    } else {
        Uniform::new(low, high).sample(rng)
    }
}

fn simulate_xd(sim: &SimulationConfig, layout: StatsLayout) -> Result<(f64, f64), String> {
    let out = run_simulation(sim).map_err(|e| e.to_string())?;
    let s = summarize(&out.table, layout, TopListPolicy::Truncate).map_err(|e| e.to_string())?;
    Ok((s.exponent_x, s.mean_diversity))
}

/// Reference statistics scaled by their median absolute deviation.
#[derive(Debug, Clone)]
pub struct Rejector {
    dim: usize,
    scale: Vec<f64>,
    scaled: Vec<f64>,
    params: Vec<f64>,
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

pub fn median(values: &[f64]) -> f64 {
    median_of(&mut values.to_vec())
}

pub fn median_absolute_deviation(values: &[f64]) -> f64 {
    let m = median(values);
    let mut dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    median_of(&mut dev)
}

impl Rejector {
    /// `stats` holds one row of `dim` statistics per entry of `params`.
    pub fn new(params: Vec<f64>, stats: &[Vec<f64>]) -> Result<Self, AbcError> {
        if params.is_empty() || stats.len() != params.len() {
            return Err(AbcError::EmptyReference);
        }
        let dim = stats[0].len();
        let mut scale = Vec::with_capacity(dim);
        for j in 0..dim {
            let column: Vec<f64> = stats.iter().map(|r| r[j]).collect();
            let mad = median_absolute_deviation(&column);
            if mad.is_nan() || mad <= 0.0 {
                return Err(AbcError::DegenerateStatistic(j));
            }
            scale.push(mad);
        }
        let scaled = stats
            .iter()
            .flat_map(|r| r.iter().zip(&scale).map(|(v, s)| v / s))
            .collect();
        Ok(Rejector {
            dim,
            scale,
            scaled,
            params,
        })
    }

    pub fn from_rows(rows: &[ReferenceRow]) -> Result<Self, AbcError> {
        let stats: Vec<Vec<f64>> = rows.iter().map(|r| r.stats().to_vec()).collect();
        Self::new(rows.iter().map(|r| r.b).collect(), &stats)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Standardized statistics of reference row `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.scaled[i * self.dim..(i + 1) * self.dim]
    }

    pub fn standardize(&self, observed: &[f64]) -> Vec<f64> {
        observed.iter().zip(&self.scale).map(|(v, s)| v / s).collect()
    }

    fn distances_scaled(&self, target: &[f64]) -> Vec<f64> {
        self.scaled
            .chunks_exact(self.dim)
            .map(|row| {
                row.iter()
                    .zip(target)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// Euclidean distance from every reference row to `observed`.
    pub fn distances(&self, observed: &[f64]) -> Vec<f64> {
        self.distances_scaled(&self.standardize(observed))
    }

    /// The `k` nearest rows as `(index, distance)`, nearest first, ties by index.
    /// Row `exclude`, if given, is left out of the pool.
    pub fn nearest(&self, observed: &[f64], k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        self.nearest_scaled(&self.standardize(observed), k, exclude)
    }

    fn nearest_scaled(&self, target: &[f64], k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        let mut pool: Vec<(usize, f64)> = self
            .distances_scaled(target)
            .into_iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .collect();
        let order = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
        let k = k.min(pool.len());
        if k == 0 {
            return Vec::new();
        }
        if k < pool.len() {
            pool.select_nth_unstable_by(k - 1, order);
            pool.truncate(k);
        }
        pool.sort_by(order);
        pool
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    /// Accepted parameter values, nearest row first.
    pub accepted_b: Vec<f64>,
    pub accepted_distances: Vec<f64>,
    pub median: f64,
    pub hdpi_low: f64,
    pub hdpi_high: f64,
}

impl Posterior {
    pub fn n_accepted(&self) -> usize {
        self.accepted_b.len()
    }

    fn from_accepted(accepted: &[(usize, f64)], params: &[f64]) -> Result<Self, AbcError> {
        let accepted_b: Vec<f64> = accepted.iter().map(|&(i, _)| params[i]).collect();
        let (hdpi_low, hdpi_high) = if accepted_b.len() >= HDPI_MIN_SAMPLES {
            hdpi(&accepted_b, 0.95)?
        } else {
            let lo = accepted_b.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = accepted_b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        };
        Ok(Posterior {
            median: median(&accepted_b),
            accepted_distances: accepted.iter().map(|a| a.1).collect(),
            accepted_b,
            hdpi_low,
            hdpi_high,
        })
    }
}

/// Accepts the closest `⌈ε · n⌉` rows to `observed = (x, D̄)`.
///
/// With fewer than ten accepted rows the reported interval is the accepted
/// range rather than a 95% HDPI.
pub fn rejection_abc(observed: [f64; 2], reference: &[ReferenceRow], tolerance: f64) -> Result<Posterior, AbcError> {
    check_tolerance(tolerance)?;
    if reference.is_empty() {
        return Err(AbcError::EmptyReference);
    }
    if observed.iter().any(|v| !v.is_finite()) {
        return Err(AbcError::NonFinite);
    }
    let rejector = Rejector::from_rows(reference)?;
    posterior_from(&rejector, &observed, tolerance, None)
}

/// Rejection step against a prepared reference, optionally holding one row out.
pub fn posterior_from(
    rejector: &Rejector,
    observed: &[f64],
    tolerance: f64,
    exclude: Option<usize>,
) -> Result<Posterior, AbcError> {
    check_tolerance(tolerance)?;
    let pool = rejector.len() - usize::from(exclude.is_some());
    let accepted = rejector.nearest(observed, accepted_count(tolerance, pool), exclude);
    Posterior::from_accepted(&accepted, rejector.params())
}

pub const HDPI_MIN_SAMPLES: usize = 10;

/// Shortest interval spanning `⌈mass · n⌉` sorted samples; the leftmost wins ties.
pub fn hdpi(samples: &[f64], mass: f64) -> Result<(f64, f64), AbcError> {
    if samples.len() < HDPI_MIN_SAMPLES {
        return Err(AbcError::TooFewSamples {
            needed: HDPI_MIN_SAMPLES,
            found: samples.len(),
        });
    }
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(AbcError::Config(format!("mass must lie in (0, 1], got {mass}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = ((mass * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for i in 0..=n - k {
        let w = sorted[i + k - 1] - sorted[i];
        if w < best_width {
            best_width = w;
            best = i;
        }
    }
    Ok((sorted[best], sorted[best + k - 1]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub p_value: f64,
    /// Median distance of the accepted rows to the observed statistics.
    pub observed_statistic: f64,
    pub null_statistics: Vec<f64>,
}

fn median_accepted_distance(rejector: &Rejector, target: &[f64], tolerance: f64, exclude: Option<usize>) -> f64 {
    let pool = rejector.len() - usize::from(exclude.is_some());
    let accepted = rejector.nearest_scaled(target, accepted_count(tolerance, pool), exclude);
    let mut d: Vec<f64> = accepted.iter().map(|a| a.1).collect();
    median_of(&mut d)
}

/// Goodness of fit by pseudo-observed resampling.
///
/// `n_pseudo` distinct reference rows act in turn as the observed data, each
/// left out of its own acceptance pool; the p-value is the share of their
/// median accepted distances that reach the observed one.
pub fn goodness_of_fit(
    observed: [f64; 2],
    reference: &[ReferenceRow],
    tolerance: f64,
    n_pseudo: usize,
    seed: u64,
) -> Result<GofResult, AbcError> {
    check_tolerance(tolerance)?;
    if observed.iter().any(|v| !v.is_finite()) {
        return Err(AbcError::NonFinite);
    }
    if n_pseudo < 100 {
        return Err(AbcError::Config(format!("n_pseudo must be >= 100, got {n_pseudo}")));
    }
    if reference.len() <= n_pseudo {
        return Err(AbcError::ReferenceTooSmall(format!(
            "{} rows cannot supply {} held-out pseudo-observations",
            reference.len(),
            n_pseudo
        )));
    }
    let rejector = Rejector::from_rows(reference)?;
    goodness_of_fit_with(&rejector, &observed, tolerance, n_pseudo, seed)
}

pub fn goodness_of_fit_with(
    rejector: &Rejector,
    observed: &[f64],
    tolerance: f64,
    n_pseudo: usize,
    seed: u64,
) -> Result<GofResult, AbcError> {
    if rejector.len() <= n_pseudo {
        return Err(AbcError::ReferenceTooSmall(format!("{} rows", rejector.len())));
    }
    let observed_statistic = median_accepted_distance(rejector, &rejector.standardize(observed), tolerance, None);
    let mut rng = rng_from_seed(seed);
    let picks = rand::seq::index::sample(&mut rng, rejector.len(), n_pseudo).into_vec();
    let null_statistics = map_indexed(picks.len(), |j| {
        let i = picks[j];
        Ok::<_, AbcError>(median_accepted_distance(rejector, rejector.row(i), tolerance, Some(i)))
    })?;
    let exceed = null_statistics.iter().filter(|&&s| s >= observed_statistic).count();
    Ok(GofResult {
        p_value: exceed as f64 / n_pseudo as f64,
        observed_statistic,
        null_statistics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub tolerance: f64,
    pub prediction_error: f64,
}

/// Leave-one-out cross-validation over `n_folds` random held-out rows.
///
/// The error at each tolerance is `Σ (b̂ - b)² / (n_folds · Var(b))`, with `b̂`
/// the posterior median and the variance taken over the whole reference.
pub fn cross_validate(
    reference: &[ReferenceRow],
    tolerances: &[f64],
    n_folds: usize,
    seed: u64,
) -> Result<Vec<CvPoint>, AbcError> {
    let rejector = Rejector::from_rows(reference)?;
    cross_validate_with(&rejector, tolerances, n_folds, seed)
}

pub fn cross_validate_with(
    rejector: &Rejector,
    tolerances: &[f64],
    n_folds: usize,
    seed: u64,
) -> Result<Vec<CvPoint>, AbcError> {
    if n_folds < 2 {
        return Err(AbcError::Config(format!("n_folds must be >= 2, got {n_folds}")));
    }
    if rejector.len() <= n_folds {
        return Err(AbcError::ReferenceTooSmall(format!(
            "{} rows for {} folds",
            rejector.len(),
            n_folds
        )));
    }
    for &t in tolerances {
        check_tolerance(t)?;
    }
    let params = rejector.params();
    let n = params.len() as f64;
    let mean = params.iter().sum::<f64>() / n;
    let var = params.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / n;
    if var.is_nan() || var <= 0.0 {
        return Err(AbcError::Config("reference parameters have zero variance".into()));
    }
    let mut rng = rng_from_seed(seed);
    let held_out = rand::seq::index::sample(&mut rng, rejector.len(), n_folds).into_vec();
    let estimates: Vec<Vec<f64>> = map_indexed(held_out.len(), |f| {
        let i = held_out[f];
        let target = rejector.row(i).to_vec();
        let widest = tolerances.iter().copied().fold(0.0, f64::max);
        let pool = rejector.len() - 1;
        let nearest = rejector.nearest_scaled(&target, accepted_count(widest, pool), Some(i));
        Ok::<_, AbcError>(
            tolerances
                .iter()
                .map(|&t| {
                    let k = accepted_count(t, pool);
                    let b: Vec<f64> = nearest[..k].iter().map(|&(j, _)| params[j]).collect();
                    median(&b)
                })
                .collect(),
        )
    })?;
    Ok(tolerances
        .iter()
        .enumerate()
        .map(|(ti, &tolerance)| {
            let sse: f64 = held_out
                .iter()
                .zip(&estimates)
                .map(|(&i, est)| (est[ti] - params[i]).powi(2))
                .sum();
            CvPoint {
                tolerance,
                prediction_error: sse / (n_folds as f64 * var),
            }
        })
        .collect())
}
