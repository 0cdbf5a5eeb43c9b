//! Joint design of a base-station beamforming matrix and a block-unitary
//! RIS scattering matrix for an integrated sensing and communication link.
//!
//! The solver alternates two blocks until the sum rate settles:
//!
//! * [`wmmse`] — beamforming for a fixed scattering matrix via the
//!   weighted-MMSE equivalence, with a dual bisection on the power budget;
//! * [`manifold`] — log-barrier Riemannian steepest ascent over the
//!   block-unitary scattering matrix, holding the angle-estimation CRB
//!   under its threshold while raising the sum rate.
//!
//! [`scenario`] owns system constants and seeded Rician channel draws,
//! [`sensing`] the Fisher information / CRB machinery, [`comms`] downlink
//! SINR and rate, and [`ao`] the outer alternating loop. [`config`],
//! [`sweep`], and [`gradcheck`] back the CLI.
//!
//! Batch entry points ([`batch`]) run independent solves in parallel when
//! the `parallel` feature (default) is enabled, and sequentially otherwise;
//! each solve is deterministic in (config, seed) either way.

pub mod ao;
pub mod batch;
pub mod comms;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod linalg;
pub mod manifold;
pub mod scattering;
pub mod scenario;
pub mod sensing;
pub mod sweep;
pub mod wmmse;

pub use ao::{find_feasible_init, solve_joint, SolveReport};
pub use comms::BeamformingMatrix;
pub use error::Error;
pub use scattering::ScatteringMatrix;
pub use scenario::{BarrierSchedule, ChannelSet, StepSchedule, SystemConfig};
