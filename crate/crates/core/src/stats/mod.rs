//! Statistics computed identically from observed and simulated tables.

mod diversity;
mod ks;
mod summary;
mod turnover;

pub use diversity::{diversity_series, simpson_diversity, DiversitySeries};
pub use ks::{kolmogorov_survival, ks_two_sample, KsResult};
pub use summary::{summarize, StatsLayout, SummaryStats};
pub use turnover::{
    fit_turnover_profile, top_list, turnover_rates, turnover_rates_with, TopListPolicy, TurnoverProfile,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("counts are all zero")]
    AllZero,
    #[error("insufficient variants: need {needed}, found {found}")]
    InsufficientVariants { needed: usize, found: usize },
    #[error("y_max = {y_max} exceeds the {found} variants present at timepoint {timepoint}")]
    ListTooLong { y_max: usize, timepoint: i64, found: usize },
    #[error("need at least {needed} timepoints, found {found}")]
    TooFewTimepoints { needed: usize, found: usize },
    #[error("degenerate profile: {0}")]
    DegenerateProfile(String),
    #[error("empty sample")]
    EmptySample,
    #[error("table has {found} timepoints, layout expects {expected}")]
    LayoutMismatch { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
}
