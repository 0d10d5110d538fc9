//! Inference of frequency-dependent transmission bias from longitudinal
//! variant-adoption data.
//!
//! The crate simulates an agent-based copying model with innovation and
//! conformity/novelty bias, summarizes observed and simulated frequency
//! tables with turn-over and diversity statistics, and compares them with
//! rejection ABC ([`abc`]) and random-forest model choice ([`rf`]).

pub mod abc;
pub mod corpus;
pub mod parallel;
pub mod rf;
pub mod seed;
pub mod simulator;
pub mod stats;
pub mod table;

pub use corpus::{AdoptionEvent, CorpusError, EmpiricalParams, EventLog, TimeRange};
pub use simulator::{run_simulation, SimError, SimulationConfig, SimulationOutput};
pub use stats::{StatsError, StatsLayout, SummaryStats, TopListPolicy};
pub use table::FrequencyTable;
