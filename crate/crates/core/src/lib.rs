//! Numerical laboratory for inverse coefficient and source problems in
//! parabolic equations with zero conormal-flux (Neumann) boundary conditions.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`]: tensor grids, boundary faces, the discrete divergence-form
//!   operator, conormal fluxes and trapezoid quadrature.
//! * [`spectra`]: the discrete Neumann eigenbasis and spectral Sobolev norms.
//! * [`coefficients`]: admissible potentials and initial data, discrete
//!   Hölder norms, seeded samplers.
//! * [`parabolic`] and [`hyperbolic`]: Crank–Nicolson and leapfrog forward
//!   solvers.
//! * [`reznitskaya`]: the Gaussian-kernel transform mapping wave solutions
//!   to heat solutions, with certified truncation.
//! * [`volterra`]: the second-kind Volterra operator built from a source's
//!   time profile, its exact discrete inverse, and source recovery.
//! * [`carleman`]: explicit Carleman weights and weighted-inequality ratios.
//! * [`inverse`]: stability-ratio experiments and final-time difference
//!   recovery.
//! * [`io`]: field, trajectory and report files.
//!
//! A narrative guide with runnable snippets lives in the repository's
//! `book/` directory; its code blocks are compiled as doctests of this crate.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod carleman;
pub mod coefficients;
pub mod error;
pub mod hyperbolic;
pub mod inverse;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod parabolic;
pub mod reznitskaya;
pub mod spectra;
pub mod volterra;

pub use error::{Error, Result};
pub use mesh::{EllipticOperator, Face, Grid, SubboundarySpec};

/// The guide chapters, compiled so their snippets stay in sync with the API.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/mesh.md")]
    pub mod mesh {}
    #[doc = include_str!("../../../book/src/spectra.md")]
    pub mod spectra {}
    #[doc = include_str!("../../../book/src/coefficients.md")]
    pub mod coefficients {}
    #[doc = include_str!("../../../book/src/parabolic.md")]
    pub mod parabolic {}
    #[doc = include_str!("../../../book/src/hyperbolic.md")]
    pub mod hyperbolic {}
    #[doc = include_str!("../../../book/src/transform.md")]
    pub mod transform {}
    #[doc = include_str!("../../../book/src/volterra.md")]
    pub mod volterra {}
    #[doc = include_str!("../../../book/src/carleman.md")]
    pub mod carleman {}
    #[doc = include_str!("../../../book/src/stability.md")]
    pub mod stability {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
