//! Numerical laboratory for a two-speed semilinear wave system on the line.
//!
//! The system couples a speed-1 field `V` and a speed-`c` field `W` (c > 1)
//! through the singular semilinear forcings
//!
//! ```text
//!     (d_t^2 -     d_x^2) V = x^{-1} W d_t V,
//!     (d_t^2 - c^2 d_x^2) W = x^{-1} (d_t V)^2,
//! ```
//!
//! with odd, compactly supported data posed on the time slice t = 4.  The
//! crate provides:
//!
//! * [`waveop`]: leapfrog stepping of one constant-speed wave equation with
//!   forcing, manufactured solutions, discrete energy, and a binary trace
//!   format;
//! * [`system`]: the coupled solve, the Picard iteration that solves the
//!   system as a sequence of linear problems, blowup detection, shipped
//!   initial-data families, and the radial 3-d reconstruction v = V/r;
//! * [`geometry`]: grids, null coordinates, the sigma weight family, and the
//!   dyadic decomposition of the light cone into time blocks crossed with
//!   r-bands / (ct-r)-bands;
//! * [`scalecalc`]: the scaling vector field S = t d_t + x d_x applied by
//!   finite differencing or by solving commuted equations, null derivatives,
//!   and discrete d'Alembertian residuals;
//! * [`norms`]: weighted space-time L^2 norms over dyadic regions, dyadic
//!   sequence-norm aggregation, and the twelve-term solution norm / the
//!   iteration difference norm;
//! * [`estimates`]: a registry of thirteen inequality statements evaluated
//!   numerically on solution families, with pinned regression bounds;
//! * [`lifespan`]: amplitude sweeps measuring the blowup time T*(eps) and
//!   fits of the exponential lifespan law.

// Negated comparisons like `!(eps > 0.0)` are load-bearing here: unlike the
// flipped comparison they also reject NaN inputs.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimates;
pub mod geometry;
pub mod lifespan;
pub mod norms;
pub mod scalecalc;
pub mod system;
pub mod tracefile;
pub mod waveop;

pub use error::{Error, Result};
pub use geometry::{DyadicRegion, Grid, NullCoords, RegionKind};
pub use waveop::{Parity, SpaceTimeTrace};
