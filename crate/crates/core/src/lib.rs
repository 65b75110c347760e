//! Discrete-event simulation of generalized Jackson networks together with
//! the machinery needed to verify queue-length tail bounds on sample paths:
//! one-dimensional Skorohod reflection majorants, random-walk supremum tail
//! estimation with Lundberg / Chernoff dyadic-block / second-moment block
//! upper bounds, and heavy-traffic scaling experiments for stationary tails.
//!
//! The crate is organized along the pipeline:
//!
//! * [`model`] — network specifications, routing matrices, traffic equations
//!   and drift/stability diagnostics;
//! * [`primitives`] — seeded renewal streams, Bernoulli routing sequences and
//!   centered-process arithmetic;
//! * [`simulator`] — the event engine producing exact flow-balanced
//!   trajectories;
//! * [`reflection`] — reflection majorants and the fluctuation (burst) terms
//!   that dominate the queue pathwise;
//! * [`bounds`] — negative-drift random-walk suprema: Monte Carlo tails and
//!   analytic upper bounds;
//! * [`scaling`] — network sequences in the large/normal/moderate deviation
//!   regimes and stationary tail estimation.
//!
//! All randomness is derived from a master seed through tagged hashing, so
//! every estimate in the crate is reproducible bit for bit regardless of
//! thread scheduling.

pub mod bounds;
pub mod error;
pub mod model;
pub mod path;
pub mod primitives;
pub mod reflection;
pub mod scaling;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result, ValidationIssue};
pub use model::{DistributionSpec, DriftReport, NetworkSpec, RoutingMatrix, StationSpec};
pub use path::{PiecewiseLinear, StepPath};
pub use simulator::{SimHorizon, Trajectory};
