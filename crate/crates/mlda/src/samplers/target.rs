//! Concrete [`LevelSet`] implementations.

use std::sync::Arc;

use nalgebra::DVector;

use super::{Evaluation, LevelSet};
use crate::aem::AemRuntime;
use crate::error::EvalError;
use crate::model::{LevelState, ModelHierarchy};

/// A ladder of plain log-densities given as closures. No forward outputs,
/// no adaptation; the workhorse for tests and small demonstrations.
pub struct FnLevels {
    dims: Vec<usize>,
    fns: Vec<Box<dyn FnMut(&DVector<f64>) -> f64 + Send>>,
}

impl FnLevels {
    pub fn new(dims: Vec<usize>, fns: Vec<Box<dyn FnMut(&DVector<f64>) -> f64 + Send>>) -> Self {
        assert_eq!(dims.len(), fns.len());
        assert!(dims.windows(2).all(|w| w[0] <= w[1]), "dimensions must be non-decreasing");
        FnLevels { dims, fns }
    }

    /// Single-level target.
    pub fn single(dim: usize, f: impl FnMut(&DVector<f64>) -> f64 + Send + 'static) -> Self {
        FnLevels { dims: vec![dim], fns: vec![Box::new(f)] }
    }

    /// Coarse/fine pair over a shared state space.
    pub fn pair(
        dim: usize,
        coarse: impl FnMut(&DVector<f64>) -> f64 + Send + 'static,
        fine: impl FnMut(&DVector<f64>) -> f64 + Send + 'static,
    ) -> Self {
        FnLevels { dims: vec![dim, dim], fns: vec![Box::new(coarse), Box::new(fine)] }
    }
}

impl LevelSet for FnLevels {
    fn top_level(&self) -> usize {
        self.dims.len() - 1
    }

    fn dim(&self, level: usize) -> usize {
        self.dims[level]
    }

    fn evaluate(&mut self, level: usize, state: &DVector<f64>) -> Result<Evaluation, EvalError> {
        assert_eq!(state.len(), self.dims[level]);
        Ok(Evaluation::plain((self.fns[level])(state)))
    }
}

/// A model hierarchy as a sampling target, with optional adaptive error
/// model. Per-level evaluation counters expose the cost profile of a run.
pub struct HierarchyTarget {
    hierarchy: Arc<ModelHierarchy>,
    aem: Option<AemRuntime>,
    eval_counts: Vec<u64>,
}

impl HierarchyTarget {
    pub fn new(hierarchy: Arc<ModelHierarchy>) -> Self {
        let n = hierarchy.levels.len();
        HierarchyTarget { hierarchy, aem: None, eval_counts: vec![0; n] }
    }

    pub fn with_aem(hierarchy: Arc<ModelHierarchy>, aem: AemRuntime) -> Self {
        let n = hierarchy.levels.len();
        HierarchyTarget { hierarchy, aem: Some(aem), eval_counts: vec![0; n] }
    }

    pub fn hierarchy(&self) -> &ModelHierarchy {
        &self.hierarchy
    }

    pub fn aem(&self) -> Option<&AemRuntime> {
        self.aem.as_ref()
    }

    /// Number of density evaluations performed at a level.
    pub fn eval_count(&self, level: usize) -> u64 {
        self.eval_counts[level]
    }
}

impl LevelSet for HierarchyTarget {
    fn top_level(&self) -> usize {
        self.hierarchy.top_level()
    }

    fn dim(&self, level: usize) -> usize {
        self.hierarchy.partition.dim(level)
    }

    fn evaluate(&mut self, level: usize, state: &DVector<f64>) -> Result<Evaluation, EvalError> {
        self.eval_counts[level] += 1;
        let level_state = LevelState::new(level, state.clone());
        let posterior = &self.hierarchy.levels[level];
        let log_prior = posterior.prior.log_density(state);
        if log_prior == f64::NEG_INFINITY {
            // Zero prior density rejects without running the forward model.
            return Ok(Evaluation {
                log_density: f64::NEG_INFINITY,
                log_prior,
                forward: None,
                generation: self.aem.as_ref().map_or(0, |a| a.generation()),
            });
        }
        let output = posterior.forward_output(&level_state)?;
        let log_lik = match (&self.aem, level < self.hierarchy.top_level()) {
            (Some(aem), true) => aem.corrected_log_likelihood(&self.hierarchy, level, &output),
            _ => posterior.log_likelihood_of_output(&output),
        };
        Ok(Evaluation {
            log_density: log_lik + log_prior,
            log_prior,
            forward: Some(output),
            generation: self.aem.as_ref().map_or(0, |a| a.generation()),
        })
    }

    fn refresh(&mut self, level: usize, eval: &mut Evaluation) {
        let Some(aem) = &self.aem else { return };
        if eval.generation == aem.generation() || level >= self.hierarchy.top_level() {
            return;
        }
        if let Some(output) = &eval.forward {
            eval.log_density =
                eval.log_prior + aem.corrected_log_likelihood(&self.hierarchy, level, output);
        }
        eval.generation = aem.generation();
    }

    fn pair_evaluated(&mut self, upper_level: usize, fine: &Evaluation, coarse: &Evaluation) {
        let Some(aem) = &mut self.aem else { return };
        if let (Some(fine_out), Some(coarse_out)) = (&fine.forward, &coarse.forward) {
            aem.observe_pair(&self.hierarchy, upper_level, fine_out, coarse_out);
        }
    }

    fn end_burn_in(&mut self) {
        if let Some(aem) = &mut self.aem {
            aem.end_burn_in();
        }
    }
}
