//! Per-level chain output.

use nalgebra::DVector;

/// Everything a sampler logs about one level of one chain.
///
/// Invariants: a rejected iteration repeats the previous state bitwise,
/// and at levels >= 1 the drawn coarse proposal is logged for every
/// iteration whether or not it was accepted.
#[derive(Clone, Debug, Default)]
pub struct ChainRecord {
    pub level: usize,
    pub states: Vec<DVector<f64>>,
    pub log_posteriors: Vec<f64>,
    pub accepted: Vec<bool>,
    /// Quantity of interest at each state; NaN when no quantity was
    /// configured for the run.
    pub qois: Vec<f64>,
    /// The coarse proposal drawn at each iteration (levels >= 1).
    pub coarse_proposals: Vec<DVector<f64>>,
    /// Quantity of interest at each coarse proposal (levels >= 1).
    pub coarse_proposal_qois: Vec<f64>,
    /// Proposals whose density evaluation failed (rejected outright).
    pub failed_evaluations: u64,
    /// Accept/reject steps taken inside this level's subchains.
    pub subchain_steps: u64,
    pub subchain_accepts: u64,
}

impl ChainRecord {
    pub fn new(level: usize) -> Self {
        ChainRecord { level, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.accepted.is_empty() {
            return f64::NAN;
        }
        self.accepted.iter().filter(|&&a| a).count() as f64 / self.accepted.len() as f64
    }

    /// Series of one state component across iterations.
    pub fn component(&self, index: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[index]).collect()
    }
}
