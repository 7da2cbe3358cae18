use std::fmt;

/// Where in a run a non-finite value first appeared.
#[derive(Debug, Clone, PartialEq)]
pub struct BlowUp {
    pub t: f64,
    pub level: Option<usize>,
    pub cycle: Option<usize>,
}

impl fmt::Display for BlowUp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t = {:e}", self.t)?;
        if let Some(level) = self.level {
            write!(f, ", level {level}")?;
        }
        if let Some(cycle) = self.cycle {
            write!(f, ", cycle {cycle}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical blow-up at {0}")]
    BlowUp(BlowUp),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("fast subsystem is not dissipative: {0}")]
    NonDissipative(String),
    #[error("degenerate Jacobian: {0}")]
    Degenerate(String),
    #[error("empty clusters: {0}")]
    EmptyClusters(String),
    #[error("time grid mismatch: {0}")]
    TimeGridMismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn blow_up(t: f64, level: Option<usize>, cycle: Option<usize>) -> Self {
        Error::BlowUp(BlowUp { t, level, cycle })
    }

    /// Short machine-readable tag, used in error JSON records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::BlowUp(_) => "blow_up",
            Error::NoConvergence(_) => "no_convergence",
            Error::NonDissipative(_) => "non_dissipative",
            Error::Degenerate(_) => "degenerate",
            Error::EmptyClusters(_) => "empty_clusters",
            Error::TimeGridMismatch(_) => "time_grid_mismatch",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
