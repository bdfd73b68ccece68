//! Monte Carlo construction of stochastic flows for jump-diffusion SDEs.
//!
//! The crate is organised around one frozen realization of the driving
//! noise ([`noise::LevyNoiseScenario`]) that is shared by every start time,
//! start state and control evaluated on it. On top of that it provides:
//!
//! - [`integrator`]: Euler stepping between large jumps with exact jump
//!   interlacing, producing [`path::CadlagPath`] values and flow fields;
//! - [`regularity`]: statistical checks of the flow identity, Lipschitz
//!   moment bounds, stochastic continuity in the start time and the
//!   three-point càdlàg criterion;
//! - [`control`]: step controls, the gain functional, backward induction for
//!   the value function and dynamic-programming residuals.

// Negated comparisons reject NaN on purpose; index loops mirror the matrix algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod control;
pub mod error;
pub mod integrator;
pub mod model;
pub mod noise;
pub mod path;
pub mod regularity;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use integrator::{Integrator, IntegratorOptions};
pub use model::{CatalogModel, Coefficients, Dims};
pub use noise::{LevyMeasureSpec, LevyNoiseScenario, MarkDistribution, NoiseSetup};
pub use path::{CadlagPath, FlowField};

/// Crate version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
