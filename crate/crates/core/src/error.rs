use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// A single problem found while reading the data file.
#[derive(Debug, Clone, PartialEq)]
pub struct RowIssue {
    /// 1-based line number in the CSV (the header is line 1). `None` for
    /// subject-level problems that span rows.
    pub row: Option<u64>,
    pub message: String,
}

impl fmt::Display for RowIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.row {
            Some(row) => write!(f, "row {row}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

/// Every issue collected during one load, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadIssues(pub Vec<RowIssue>);

impl fmt::Display for LoadIssues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} problem(s) in data file", self.0.len())?;
        for issue in &self.0 {
            write!(f, "\n  {issue}")?;
        }
        Ok(())
    }
}

/// Direction in which a partial likelihood keeps increasing without bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotoneDirection {
    /// The log hazard ratio diverges to +inf (all events in the intervention arm).
    TowardsInfinity,
    /// The log hazard ratio diverges to -inf (all events in the comparator arm).
    TowardsZero,
    /// Every risk set is homogeneous in arm; the data carry no information.
    Uninformative,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Load(LoadIssues),

    #[error("invalid design: {0}")]
    Design(String),

    #[error("scoring error: {0}")]
    Scoring(String),

    #[error("unknown scale `{0}`")]
    UnknownScale(String),

    #[error("unknown visit `{0}`")]
    UnknownVisit(String),

    #[error("no baseline visit configured")]
    NoBaselineVisit,

    #[error("arm `{0}` has no subjects in the analysis set")]
    EmptyArm(String),

    #[error("no evaluable subjects: {0}")]
    NoEvaluable(String),

    #[error("{measure} is not estimable: {reason}")]
    NonEstimable { measure: String, reason: String },

    #[error("monotone partial likelihood ({direction:?}); hazard ratio not estimable")]
    MonotoneLikelihood { direction: MonotoneDirection },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("optimizer did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("estimate must be oriented before deriving an extent")]
    Unoriented,

    #[error("{0} estimates cannot enter the extent thresholds")]
    UnsupportedMeasure(String),

    #[error("symptom scale `{0}` has no severity flag")]
    MissingSeverity(String),

    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),

    #[error("report output failed: {0}")]
    Output(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
