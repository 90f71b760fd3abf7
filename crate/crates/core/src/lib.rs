//! Volume-correlation subspace detection.
//!
//! Detects whether streamed samples contain a component from a known target
//! subspace when they are also corrupted by clutter from an unknown low-rank
//! subspace and white noise. The detector never reconstructs the clutter
//! subspace explicitly: it tracks the volume of the parallelotope spanned by
//! the estimated signal subspace stacked with the target basis, which
//! collapses when the target is present and plateaus when it is absent.
//!
//! Modules:
//! - [`geometry`]: volumes, principal angles, volume correlation, projections.
//! - [`scenario`]: synthetic target/clutter/noise problem instances.
//! - [`detector`]: the noiseless breakpoint procedure and the streaming detector.
//! - [`theory`]: sample-size and deviation bounds, Monte Carlo convergence checks.
//! - [`experiment`]: configs, seeded trial runner, CSV/JSON formats used by the CLI.

// `!(x > 0.0)` is used to reject NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detector;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod io;
pub mod scenario;
pub mod theory;

pub use detector::{Decision, DecisionKind, Detector, DetectorConfig, TrajectoryPoint};
pub use error::{Result, VcError};
pub use geometry::{EigenPairs, PrincipalAngleSet, SubspaceBasis};
pub use scenario::{Hypothesis, Scenario, ScenarioConfig};
