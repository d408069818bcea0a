//! Simulation and optimization of IRS-assisted MISO downlinks.
//!
//! The long-term IRS parameters are tuned by a zeroth-order projected
//! stochastic gradient ascent that only probes the effective channel, while
//! the short-term precoders come from a budgeted (inexact) WMMSE oracle.
//!
//! Module map:
//! - [`channel`]: scenarios, Rician realizations, effective-channel composition.
//! - [`irs`]: parameter-to-reflection maps (ideal and varactor) and box projection.
//! - [`utility`]: weighted sumrate, SINR and the Wirtinger cogradient.
//! - [`oracle`]: WMMSE with an iteration budget, reference solver, value gap.
//! - [`zograd`]: two-point sample gradients from channel probes.
//! - [`optimizer`]: the outer ascent loop, schedules and diagnostics.
//! - [`experiment`]: config files, experiment recipes, checkpoints, CSV/SVG.

pub mod channel;
pub mod error;
pub mod experiment;
pub mod irs;
pub mod optimizer;
pub mod oracle;
pub mod rng;
pub mod synthetic;
pub mod utility;
pub mod zograd;

pub use num_complex::Complex64 as C64;

pub use error::{Error, Result};
