use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("steady state is not unique (null space dimension {0})")]
    NonUniqueSteadyState(usize),

    #[error("near-defective eigen-decomposition: mode {index} has biorthogonal overlap {overlap:.3e}")]
    NearDefective { index: usize, overlap: f64 },

    #[error("internal eigenvalues {0} and {1} coincide")]
    DegenerateInternal(usize, usize),

    #[error("resolvent pole: i*{0} is an eigenvalue of the internal Liouvillian")]
    ResolventPole(f64),

    #[error("heating regime: transition {transition} has cooling rate {rate:.3e} <= 0")]
    HeatingRegime { transition: usize, rate: f64 },

    #[error("no time-scale separation: t_slow/t_fast = {0:.3}")]
    NoTimescaleSeparation(f64),

    #[error("infinite bright period: cos(phi2) = 0, the standing wave does not couple to the motion and no quantum jumps occur")]
    InfiniteBright,

    #[error("zero-order resonance: subspaces {0:?} and {1:?} are degenerate within {2:.1e}")]
    Resonance((usize, i64), (usize, i64), f64),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("linear algebra failure: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
