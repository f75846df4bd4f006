//! The sampler ladder: Metropolis–Hastings, delayed acceptance,
//! randomized-length-subchain surrogate transition, its two-level variant
//! with embedded coarse/fine states, and the recursive multilevel sampler.
//!
//! Every sampler here simulates a transition kernel in detailed balance
//! with its finest target density. The layering works by screening: a
//! subchain on a cheap approximate density generates the proposal for the
//! expensive density, and a second accept/reject step corrects for the
//! approximation error. Because the subchain is itself in detailed balance
//! with the approximate density, the second-stage acceptance probability
//! needs only the two density ratios, no proposal densities.
//!
//! Reproducibility contract: a run is fully determined by its
//! [`StreamSeed`](crate::rng::StreamSeed). Each iteration derives a private
//! generator and each subchain derives a private stream, so the same seed
//! produces bitwise-identical chains no matter how levels nest. This is
//! also what makes the special-case collapses exact: delayed acceptance is
//! the subchain sampler with a fixed length of one, the subchain sampler is
//! the two-level sampler with no fine modes, and the two-level sampler is
//! the multilevel sampler with one level pair — identical draw sequences,
//! identical trajectories.

mod engine;
mod record;
mod runs;
mod target;

pub use record::ChainRecord;
pub use runs::{da_run, mh_run, mlda_run, rst_run, tlda_run, MldaConfig, MldaOutput};
pub use target::{FnLevels, HierarchyTarget};

use nalgebra::DVector;

use crate::error::EvalError;

/// A cached density evaluation at one state of one level.
#[derive(Clone, Debug)]
pub struct Evaluation {
    /// Unnormalized log-posterior under the model as of `generation`.
    pub log_density: f64,
    /// Prior part of `log_density`, kept so the likelihood part can be
    /// recomputed when an adaptive error model changes.
    pub log_prior: f64,
    /// Forward-model output, when the target exposes one.
    pub forward: Option<DVector<f64>>,
    /// Adaptation generation this evaluation was computed under.
    pub generation: u64,
}

impl Evaluation {
    pub fn plain(log_density: f64) -> Self {
        Evaluation { log_density, log_prior: 0.0, forward: None, generation: 0 }
    }
}

/// A ladder of target densities over embedded state spaces.
///
/// Implementations may adapt during sampling (error models); the engine
/// calls [`refresh`](LevelSet::refresh) before forming any acceptance
/// ratio so all densities in the ratio refer to the current model.
pub trait LevelSet {
    /// Index of the finest level.
    fn top_level(&self) -> usize;

    /// State dimension at a level. Must be non-decreasing in the level.
    fn dim(&self, level: usize) -> usize;

    fn evaluate(&mut self, level: usize, state: &DVector<f64>) -> Result<Evaluation, EvalError>;

    /// Bring a cached evaluation up to date with the current model.
    fn refresh(&mut self, _level: usize, _eval: &mut Evaluation) {}

    /// Hook invoked when two adjacent levels have been evaluated at a
    /// shared state: `fine` at `upper_level`, `coarse` at `upper_level-1`.
    fn pair_evaluated(&mut self, _upper_level: usize, _fine: &Evaluation, _coarse: &Evaluation) {}

    /// Hook invoked when the burn-in phase ends; adaptation freezes here.
    fn end_burn_in(&mut self) {}
}

/// `min(1, exp(log_num - log_den))`, with the conventions that a zero-
/// density numerator is never accepted and that moving off a zero-density
/// state is always accepted.
pub fn accept_probability(log_num: f64, log_den: f64) -> f64 {
    if log_num == f64::NEG_INFINITY {
        return 0.0;
    }
    if log_den == f64::NEG_INFINITY {
        return 1.0;
    }
    (log_num - log_den).min(0.0).exp()
}
