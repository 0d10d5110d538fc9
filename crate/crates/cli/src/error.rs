use std::fmt;

use cultabc::abc::AbcError;
use cultabc::rf::RfError;
use cultabc::{CorpusError, SimError, StatsError};

/// Exit status 1: the input was fine but the analysis degenerated.
pub const EXIT_DEGENERATE: u8 = 1;
/// Exit status 2: bad usage, configuration or input.
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn degenerate(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_DEGENERATE,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        Failure::usage(format!("corpus: {e}"))
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::usage(format!("simulator: {e}"))
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        let message = format!("stats: {e}");
        match e {
            StatsError::AllZero | StatsError::DegenerateProfile(_) => Failure::degenerate(message),
            _ => Failure::usage(message),
        }
    }
}

impl From<AbcError> for Failure {
    fn from(e: AbcError) -> Self {
        let message = format!("abc: {e}");
        match e {
            AbcError::Config(_) | AbcError::NonFinite | AbcError::ReferenceTooSmall(_) => Failure::usage(message),
            _ => Failure::degenerate(message),
        }
    }
}

impl From<RfError> for Failure {
    fn from(e: RfError) -> Self {
        let message = format!("rf: {e}");
        match e {
            RfError::Config(_) | RfError::Observed(_) | RfError::Format(_) => Failure::usage(message),
            _ => Failure::degenerate(message),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(format!("io: {e}"))
    }
}
