//! Evolutionary equations `(∂₀𝓜 + 𝓐)u = f` on exponentially weighted
//! space-time grids, together with experiment drivers that check
//! G-convergence of oscillating material laws numerically.
//!
//! Layering, bottom to top:
//!
//! - [`timeaxis`]: the weighted time axis, `∂₀`, `∂₀⁻¹`, transforms, shifts.
//! - [`space1d`]: staggered 1D operators and the space-time [`space1d::Field`].
//! - [`matlaw`]: the material-law algebra and its diagnostics.
//! - [`evosolve`]: causal forward elimination and a-priori estimates.
//! - [`gconv`]: convergence experiments and reports.

pub mod error;
pub mod evosolve;
pub mod gconv;
pub mod linalg;
pub mod matlaw;
pub mod quadrature;
pub mod space1d;
pub mod timeaxis;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Shorthand used throughout the crate.
pub type C64 = Complex64;
