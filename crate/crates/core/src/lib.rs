//! Sequential Gaussian position measurements on a free quantum particle.
//!
//! The crate is organised around a four-parameter pure Gaussian wave packet
//! ([`GaussianState`]) and the exact maps that act on it:
//!
//! - [`gaussian_state`]: free evolution, meter collapse, outcome density and `<|x|>`.
//! - [`nonselective`]: closed-form moments under the measurement master equation
//!   (outcomes discarded) and the analytic path length.
//! - [`selective`]: seeded quantum trajectories with recorded outcomes and optional
//!   displacement feedback.
//! - [`dimension`]: path lengths at varying resolution and Hausdorff-dimension fits.
//! - [`oracle_grid`]: a brute-force position-grid wave-function engine used to
//!   validate every Gaussian closed form.
//! - [`experiments`]: configuration-driven experiment runner and result tables.
//!
//! Natural units (`hbar = m = 1`) are the default throughout.

pub mod dimension;
pub mod error;
pub mod experiments;
pub mod gaussian_state;
pub mod nonselective;
pub mod oracle_grid;
pub mod selective;

pub use error::{Error, Result};
pub use gaussian_state::{
    collapse_update, expectation_abs_x, free_evolve, outcome_pdf, Constants, GaussianState,
    MeterConfig, OutcomeDistribution,
};
pub use nonselective::ContinuousLimit;
pub use selective::{FeedbackConfig, TrajectoryRecord};
