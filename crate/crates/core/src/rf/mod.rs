//! Random-forest model choice between conformity, novelty and neutrality.

mod choice;
pub mod forest;
pub mod lda;
pub mod tree;

pub use choice::{
    build_reference_table, choose_model, classify_observed, gini_importance, grow_model_forest, oob_error,
    oob_error_curve_for, posterior_probability, ChoiceSettings, ModelChoiceResult, ModelLabel, ModelPriors,
    ReferenceTable, Votes, REFERENCE_SCHEMA_VERSION,
};
pub use forest::{grow_forest, oob_error_curve, Forest, ForestConfig};
pub use lda::{fit_lda, LdaProjection};
pub use tree::{Dataset, Targets};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RfError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("table is empty")]
    EmptyTable,
    #[error("class {0} has fewer than 2 rows")]
    SmallClass(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("row {index}: {message}")]
    Row { index: usize, message: String },
    #[error("{excluded} of {total} rows have no out-of-bag trees")]
    InsufficientOob { excluded: usize, total: usize },
    #[error("observed features: {0}")]
    Observed(String),
    #[error("format error: {0}")]
    Format(String),
}
