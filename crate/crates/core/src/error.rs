use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or mismatched caller input (dimensions, ranges, CSV cells).
    #[error("invalid input: {0}")]
    Input(String),

    /// The median heuristic produced a zero bandwidth (all points identical).
    #[error("degenerate bandwidth: all points are identical")]
    DegenerateBandwidth,

    /// A factorization failed even after diagonal jitter escalation.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A nuisance model could not be fitted.
    #[error("fit failed: {0}")]
    Fit(String),

    /// Studentized statistic is undefined because the cross terms have zero spread.
    #[error("degenerate statistic: {0}")]
    DegenerateStatistic(String),

    /// The data/configuration combination cannot run the requested test.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for the two failure modes that mean the statistic itself is undefined.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::DegenerateStatistic(_) | Error::DegenerateBandwidth)
    }
}
