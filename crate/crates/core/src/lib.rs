//! Non-local multicontinuum (NLMC) upscaling on perforated 2-D domains.
//!
//! The pipeline is: [`geometry`] → [`mesh`] → [`coarse`] → [`basis`] →
//! [`upscale`], with fine reference solvers in [`fem`] and error measures in
//! [`metrics`]. [`scenario`] and [`experiment`] drive complete studies.

pub mod basis;
pub mod coarse;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod geometry;
pub mod io;
pub mod mesh;
pub mod metrics;
pub mod scenario;
pub mod solver;
pub mod sparse;
pub mod upscale;

pub use error::{NlmcError, Result};
