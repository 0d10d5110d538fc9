//! Agent-based model of cultural transmission with innovation and
//! frequency-dependent copying.
//!
//! Generations do not overlap. Each of the `N` agents of the next generation
//! either invents a brand-new variant (probability μ) or copies a variant held
//! in the parent generation, choosing variant `i` with probability
//! proportional to `n_i^(1 - b)`. `b < 0` favours common variants
//! (conformity), `b > 0` favours rare ones (novelty), `b = 0` is neutral
//! Wright-Fisher copying under the infinite-alleles assumption.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{replicate_seed, rng_from_seed, Rng};
use crate::stats::simpson_diversity;
use crate::table::FrequencyTable;

/// Copy weights below this are treated as zero.
pub const MIN_WEIGHT: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("population is empty")]
    EmptyPopulation,
    #[error("counts sum to {found}, expected population size {expected}")]
    SizeMismatch { expected: u64, found: u64 },
    #[error("variant {0} has a non-positive count")]
    NonPositiveCount(u64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Every agent starts with its own variant.
    #[default]
    Distinct,
    /// Every agent starts with the same variant.
    Monomorphic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub population_size: usize,
    pub innovation_rate: f64,
    pub bias: f64,
    pub warmup_steps: usize,
    pub record_steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub initial: InitialState,
}

impl SimulationConfig {
    /// Population size 729, μ = 0.037, 200 warm-up and 32 recorded steps.
    pub fn standard(bias: f64, seed: u64) -> Self {
        SimulationConfig {
            population_size: 729,
            innovation_rate: 0.037,
            bias,
            warmup_steps: 200,
            record_steps: 32,
            seed,
            initial: InitialState::Distinct,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.population_size < 2 {
            return Err(SimError::Config(format!(
                "population_size must be >= 2, got {}",
                self.population_size
            )));
        }
        if !(0.0..1.0).contains(&self.innovation_rate) {
            return Err(SimError::Config(format!(
                "innovation_rate must lie in [0, 1), got {}",
                self.innovation_rate
            )));
        }
        if !self.bias.is_finite() || self.bias.abs() > 1.0 {
            return Err(SimError::Config(format!("|bias| must be <= 1, got {}", self.bias)));
        }
        if self.record_steps < 2 {
            return Err(SimError::Config(format!(
                "record_steps must be >= 2, got {}",
                self.record_steps
            )));
        }
        Ok(())
    }
}

/// Variant counts of one generation, ids ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Population {
    pub ids: Vec<u64>,
    pub counts: Vec<u64>,
    /// Smallest id not yet handed out in this run.
    pub next_id: u64,
}

impl Population {
    pub fn new(initial: InitialState, size: usize) -> Self {
        match initial {
            InitialState::Distinct => Population {
                ids: (0..size as u64).collect(),
                counts: vec![1; size],
                next_id: size as u64,
            },
            InitialState::Monomorphic => Population {
                ids: vec![0],
                counts: vec![size as u64],
                next_id: 1,
            },
        }
    }

    pub fn from_counts(pairs: &[(u64, u64)]) -> Self {
        let mut pairs = pairs.to_vec();
        pairs.sort_unstable();
        let next_id = pairs.last().map_or(0, |p| p.0 + 1);
        Population {
            ids: pairs.iter().map(|p| p.0).collect(),
            counts: pairs.iter().map(|p| p.1).collect(),
            next_id,
        }
    }

    pub fn size(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn richness(&self) -> usize {
        self.ids.len()
    }
}

/// Per-draw probability of copying each variant, in population order.
pub fn copy_probabilities(counts: &[u64], bias: f64) -> Vec<f64> {
    let exponent = 1.0 - bias;
    let mut w: Vec<f64> = counts
        .iter()
        .map(|&n| {
            let x = (n as f64).powf(exponent);
            if x < MIN_WEIGHT {
                0.0
            } else {
                x
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    w
}

/// Produces the next generation of `population_size` agents.
pub fn next_generation(
    parent: &Population,
    population_size: u64,
    bias: f64,
    innovation_rate: f64,
    rng: &mut Rng,
) -> Result<Population, SimError> {
    if parent.ids.is_empty() {
        return Err(SimError::EmptyPopulation);
    }
    if let Some(i) = parent.counts.iter().position(|&c| c == 0) {
        return Err(SimError::NonPositiveCount(parent.ids[i]));
    }
    let found = parent.size();
    if found != population_size {
        return Err(SimError::SizeMismatch {
            expected: population_size,
            found,
        });
    }

    let weights = copy_probabilities(&parent.counts, bias);
    let picker = WeightedIndex::new(&weights).map_err(|e| SimError::Config(format!("copy weights: {e}")))?;
    let mut copied = vec![0u64; parent.ids.len()];
    let mut innovations = 0u64;
    for _ in 0..population_size {
        if innovation_rate > 0.0 && rng.gen::<f64>() < innovation_rate {
            innovations += 1;
        } else {
            copied[picker.sample(rng)] += 1;
        }
    }

    let survivors = copied.iter().filter(|&&c| c > 0).count();
    let mut ids = Vec::with_capacity(survivors + innovations as usize);
    let mut counts = Vec::with_capacity(survivors + innovations as usize);
    for (&id, &c) in parent.ids.iter().zip(&copied) {
        if c > 0 {
            ids.push(id);
            counts.push(c);
        }
    }
    let first_new = parent.next_id;
    ids.extend(first_new..first_new + innovations);
    counts.extend(std::iter::repeat_n(1, innovations as usize));
    Ok(Population {
        ids,
        counts,
        next_id: first_new + innovations,
    })
}

/// A running simulation, advanced one generation at a time.
pub struct Simulation {
    config: SimulationConfig,
    population: Population,
    rng: Rng,
}

impl Simulation {
    pub fn new(config: SimulationConfig) -> Result<Self, SimError> {
        config.validate()?;
        Ok(Simulation {
            population: Population::new(config.initial, config.population_size),
            rng: rng_from_seed(config.seed),
            config,
        })
    }

    pub fn step(&mut self) -> Result<&Population, SimError> {
        self.population = next_generation(
            &self.population,
            self.config.population_size as u64,
            self.config.bias,
            self.config.innovation_rate,
            &mut self.rng,
        )?;
        Ok(&self.population)
    }

    pub fn population(&self) -> &Population {
        &self.population
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub table: FrequencyTable,
    pub total_variants_created: u64,
}

/// Column label of a simulated variant; zero-padded so that string order is
/// creation order.
pub fn variant_label(id: u64) -> String {
    format!("v{id:010}")
}

/// Runs warm-up then records `record_steps` generations.
pub fn run_simulation(config: &SimulationConfig) -> Result<SimulationOutput, SimError> {
    let mut sim = Simulation::new(config.clone())?;
    for _ in 0..config.warmup_steps {
        sim.step()?;
    }
    let mut recorded = Vec::with_capacity(config.record_steps);
    for _ in 0..config.record_steps {
        recorded.push(sim.step()?.clone());
    }

    // Union of recorded variants; each population is id-sorted.
    let mut all_ids: Vec<u64> = recorded.iter().flat_map(|p| p.ids.iter().copied()).collect();
    all_ids.sort_unstable();
    all_ids.dedup();
    let counts = recorded
        .iter()
        .map(|p| {
            let mut row = vec![0u64; all_ids.len()];
            let mut col = 0;
            for (&id, &c) in p.ids.iter().zip(&p.counts) {
                while all_ids[col] != id {
                    col += 1;
                }
                row[col] = c;
            }
            row
        })
        .collect();
    let table = FrequencyTable {
        timepoints: (1..=config.record_steps as i64).collect(),
        variant_ids: all_ids.iter().map(|&id| variant_label(id)).collect(),
        counts,
    };
    Ok(SimulationOutput {
        table,
        total_variants_created: sim.population().next_id,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmupCurve {
    /// Mean Simpson diversity after each of steps 1..=horizon.
    pub mean_diversity: Vec<f64>,
    /// First step from which the curve stays within 1% of its final value.
    pub plateau_step: Option<usize>,
}

/// Mean diversity trajectory of `iterations` neutral runs started from the
/// all-distinct state.
pub fn estimate_warmup(
    innovation_rate: f64,
    population_size: usize,
    horizon: usize,
    iterations: usize,
    seed: u64,
) -> Result<WarmupCurve, SimError> {
    if horizon < 2 {
        return Err(SimError::Config(format!("horizon must be >= 2, got {horizon}")));
    }
    if iterations < 1 {
        return Err(SimError::Config("iterations must be >= 1".into()));
    }
    let runs: Vec<Vec<f64>> = (0..iterations as u64)
        .into_par_iter()
        .map(|i| diversity_trajectory(innovation_rate, population_size, horizon, replicate_seed(seed, i)))
        .collect::<Result<_, _>>()?;
    let mut mean = vec![0.0; horizon];
    for run in &runs {
        for (m, d) in mean.iter_mut().zip(run) {
            *m += d;
        }
    }
    for m in &mut mean {
        *m /= iterations as f64;
    }
    let plateau_step = plateau(&mean, 0.01);
    Ok(WarmupCurve {
        mean_diversity: mean,
        plateau_step,
    })
}

/// Simpson diversity after each of `horizon` neutral generations.
pub fn diversity_trajectory(
    innovation_rate: f64,
    population_size: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<f64>, SimError> {
    let mut sim = Simulation::new(SimulationConfig {
        population_size,
        innovation_rate,
        bias: 0.0,
        warmup_steps: 0,
        record_steps: horizon.max(2),
        seed,
        initial: InitialState::Distinct,
    })?;
    (0..horizon)
        .map(|_| {
            let pop = sim.step()?;
            Ok(simpson_diversity(&pop.counts).expect("population is never empty"))
        })
        .collect()
}

/// 1-based index of the first step after which every value is within
/// `rel_tol` of the last value.
pub fn plateau(curve: &[f64], rel_tol: f64) -> Option<usize> {
    let last = *curve.last()?;
    let band = rel_tol * last.abs();
    let mut first = None;
    for (i, v) in curve.iter().enumerate().rev() {
        if (v - last).abs() <= band {
            first = Some(i + 1);
        } else {
            break;
        }
    }
    first
}
