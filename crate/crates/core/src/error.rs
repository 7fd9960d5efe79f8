use alloc::string::String;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A parameter lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A density matrix or state failed validation.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// The coupling is purely `σ_z`, so no finite optimal plateau exists.
    #[error("singular coupling angle φ = {phi}: sin(2φ) = 0, no finite q* exists")]
    SingularCoupling { phi: f64 },

    /// Adaptive quadrature failed to converge (likely a divergent integrand).
    #[error("integrand not integrable on [{lower}, {upper}]: error estimate {error:e} after {intervals} subintervals")]
    Integrability {
        lower: f64,
        upper: f64,
        error: f64,
        intervals: usize,
    },

    /// Spectral density outside the supported parameter regime.
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    /// The exponential decomposition does not reproduce the correlation
    /// function to the required accuracy.
    #[error("correlation decomposition with K = {matsubara} Matsubara terms has reconstruction error {error:e}; increase K")]
    InsufficientMatsubara { matsubara: usize, error: f64 },

    /// Inputs to the generalized bound are mutually inconsistent.
    #[error("inconsistent input: {0}")]
    InconsistentInput(String),

    /// A solver did not converge within its escalation limits.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// The requested operation is not supported by this solver.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! domain {
    ($($arg:tt)*) => {
        $crate::Error::Domain(alloc::format!($($arg)*))
    };
}

pub(crate) use domain;
