//! Hierarchical MCMC with delayed acceptance.
//!
//! Samples unnormalized posterior densities that come with a ladder of
//! cheaper approximations. Subchains on the cheap levels generate
//! proposals for the expensive ones; a second accept/reject stage makes
//! the composite kernel exactly invariant for the finest density. On top
//! of the samplers sit a multilevel expectation estimator with variance
//! reduction, a Gaussian adaptive error model for coarse-level bias,
//! Karhunen–Loève random-field priors, three benchmark inverse problems,
//! and chain diagnostics.
//!
//! Chains are bit-reproducible: every iteration and every subchain draws
//! from a private stream derived from one 64-bit seed, so results do not
//! depend on platform or thread count.
//!
//! ```
//! use mlda::proposals::{RandomWalkProposal, SubchainPmf};
//! use mlda::rng::StreamSeed;
//! use mlda::samplers::{rst_run, FnLevels};
//! use nalgebra::DVector;
//!
//! // A cheap shifted surrogate screens proposals for the exact density.
//! let mut levels = FnLevels::pair(
//!     1,
//!     |x: &DVector<f64>| -0.5 * (x[0] - 0.2).powi(2),
//!     |x: &DVector<f64>| -0.5 * x[0].powi(2),
//! );
//! let mut proposal = RandomWalkProposal::new(1.0);
//! let record = rst_run(
//!     &mut levels,
//!     &mut proposal,
//!     SubchainPmf::uniform(4),
//!     &DVector::zeros(1),
//!     2_000,
//!     StreamSeed::root(1),
//!     None,
//! )
//! .unwrap();
//! assert_eq!(record.len(), 2_000);
//! ```
//!
//! The `book/` directory holds a guide whose code blocks compile and run
//! as documentation tests (see the `book` module below).

pub mod aem;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod field;
pub mod model;
pub mod ode;
pub mod problems;
pub mod proposals;
pub mod rng;
pub mod samplers;
pub mod storage;

// Keep the guide's snippets compiling: every fenced Rust block in the
// book runs under `cargo test --doc`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/hierarchies.md")]
    mod hierarchies {}
    #[doc = include_str!("../../../book/src/samplers.md")]
    mod samplers {}
    #[doc = include_str!("../../../book/src/estimator.md")]
    mod estimator {}
    #[doc = include_str!("../../../book/src/error-model.md")]
    mod error_model {}
    #[doc = include_str!("../../../book/src/random-fields.md")]
    mod random_fields {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
}
