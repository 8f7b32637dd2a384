use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A spectrum carries harmonics the requested builder cannot represent.
    #[error("unsupported protocol: {0}")]
    UnsupportedProtocol(String),

    /// Quadrature refinement hit its cap before the weights settled.
    #[error("harmonic weights did not converge (last deficit estimate {deficit:.3e})")]
    NonConvergence { deficit: f64 },

    /// Non-finite input or output in a numerical kernel.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The generator has more than one stationary mode.
    #[error("degenerate generator: {0}")]
    DegenerateGenerator(String),

    /// Two eigenvalues sit at zero, so the linear coefficient A₁ vanishes.
    #[error("degenerate spectrum: |A1| = {a1:.3e}")]
    DegenerateSpectrum { a1: f64 },

    /// A cumulant came out with the wrong sign beyond round-off.
    #[error("numerical consistency: {0}")]
    NumericalConsistency(String),

    /// A closed-form denominator vanished.
    #[error("singular regime: {0}")]
    SingularRegime(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
