//! Numerical laboratory for spectral multiplier operators on weighted grids.
//!
//! The crate discretizes self-adjoint second-order operators L on an interval
//! carrying a power-weight measure dmu = |x|^alpha dx, diagonalizes them exactly,
//! and exposes the functional calculus m(L) together with the analysis apparatus
//! built on top of it:
//!
//! * [`space`]: weighted grids, balls, doubling fits, dyadic cube systems,
//!   Muckenhoupt characteristics, Hardy-Littlewood maximal averages;
//! * [`operator`]: operator assembly, heat kernels, Gaussian-envelope fits,
//!   Doob (ground-state) transforms and their conservation/harmonicity probes;
//! * [`calculus`]: the multiplier calculus m(L), Bochner-Riesz means, vertical
//!   and localized square functions, kernel-norm probes;
//! * [`multiplier`]: symbol-side analysis — windowed Sobolev norms, decreasing
//!   rearrangements, summability verdicts, Mellin-side norms, reconstruction
//!   from fractional derivatives, integer tilings;
//! * [`martingale`]: dyadic conditional expectations, martingale differences and
//!   square functions, good-lambda decay experiments;
//! * [`experiments`]: seeded end-to-end experiments (maximal growth ladders,
//!   pointwise domination, dyadic reduction, vector-valued maximal probes) with
//!   JSON/CSV reporting.
//!
//! Everything is deterministic: random families are drawn from counter-based
//! seeded generators, so a rerun with the same configuration reproduces every
//! table byte for byte.

pub mod calculus;
pub mod error;
pub mod experiments;
pub mod martingale;
pub mod multiplier;
pub mod operator;
pub mod space;
pub(crate) mod util;

pub use error::Error;
