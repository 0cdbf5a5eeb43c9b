//! Error conditions surfaced by the solver stack.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Configuration rejected during validation; the message names the field.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Config file could not be parsed; carries the deserializer diagnostic.
    #[error("config parse error: {0}")]
    ConfigParse(String),

    /// The Fisher information is singular: the angle is unidentifiable at
    /// this scattering matrix (derivative channel colinear with the channel,
    /// or zero channel energy).
    #[error("singular Fisher information: {0}")]
    SingularFim(String),

    /// A scattering block is rank-deficient beyond what polar repair handles.
    #[error("scattering block {block} not repairable: min singular value {min_sv:.3e}")]
    NonRepairable { block: usize, min_sv: f64 },

    /// The WMMSE weight denominator collapsed; receivers are inconsistent
    /// with the beamformers.
    #[error("degenerate WMMSE weight for UE {ue}: denominator {denom:.3e}")]
    DegenerateWeight { ue: usize, denom: f64 },

    /// The beamformer system matrix is numerically singular and the power
    /// budget cannot be met.
    #[error("singular beamformer system at omega = {omega:.3e}")]
    SingularSystem { omega: f64 },

    /// Barrier evaluation outside the feasible region: CRB at or above the
    /// threshold.
    #[error("infeasible point: CRB {crb:.6e} >= delta_max {delta_max:.6e}")]
    Infeasible { crb: f64, delta_max: f64 },

    /// The line search exhausted its halvings without sufficient increase.
    #[error("manifold step stalled on block {block} after {halvings} halvings")]
    StepStalled { block: usize, halvings: u32 },

    /// No strictly feasible scattering matrix was found across all retries.
    #[error("no feasible scattering init: best CRB {best_crb:.6e} vs delta_max {delta_max:.6e}")]
    NoFeasiblePoint { best_crb: f64, delta_max: f64 },

    /// Sweep specification rejected during validation.
    #[error("invalid sweep spec: {0}")]
    InvalidSweep(String),

    /// Filesystem or serialization failure while writing outputs.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
