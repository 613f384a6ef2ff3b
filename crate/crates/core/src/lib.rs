//! Multiscale thermomechanical Cucker–Smale simulation on the periodic line.
//!
//! The crate covers four levels of the same alignment model:
//!
//! * [`particle`]: two-species agent systems integrated with RK4,
//! * [`kinetic`]: weighted particle clouds in the strong and weak relaxation scalings,
//! * [`fluid`]: the background hydrodynamic system on a staggered central scheme,
//! * [`macro_limit`]: the limiting density/velocity equations (WENO5 transport plus an implicit velocity solve).
//!
//! [`diagnostics`] compares the levels against each other and [`run`] wires
//! everything to configuration files and CSV/JSON outputs.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fluid;
pub mod geometry;
pub mod io;
pub mod kinetic;
pub mod macro_limit;
pub mod particle;
pub mod presets;
pub mod run;

pub use error::{Result, TcsError};
pub use geometry::{
    displacement, periodic_convolve, sample_kernel, torus_dist, AggregationPotential, GridFn1D,
    InfluenceFn, TorusPoint,
};
