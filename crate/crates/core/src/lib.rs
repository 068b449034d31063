//! Absorbing-boundary detection statistics for Dirac particles in 1+1
//! dimensions (with transverse plane-wave momenta), together with the
//! cross-checks that tie the detection measure to Bohmian trajectories,
//! POVMs, the non-relativistic limit and two-particle statistics.

pub mod bohm;
pub mod detect;
pub mod error;
pub mod evolution;
pub mod multi;
pub mod nonrel;
pub mod spinor;

pub use error::{Error, Result};
