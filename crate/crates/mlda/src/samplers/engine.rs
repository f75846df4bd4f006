//! Shared chain machinery.
//!
//! Randomness discipline, identical across all samplers so that the
//! special-case collapses are bitwise exact:
//!
//! * iteration `j` of a chain draws from `iteration_rng(stream, j)`, in
//!   the fixed order: subchain-length draw (uniform pmfs only), fine-mode
//!   proposal, acceptance uniform;
//! * the subchain spawned at iteration `j` receives the private stream
//!   `subchain_stream(stream, j)`;
//! * a Metropolis step always consumes its proposal draws and exactly one
//!   acceptance uniform;
//! * a second stage whose composite proposal equals the current state, or
//!   whose density evaluation fails, rejects without consuming the
//!   acceptance uniform.

use nalgebra::DVector;

use super::{ChainRecord, Evaluation, LevelSet};
use crate::estimator::QuantityOfInterest;
use crate::error::SamplerError;
use crate::proposals::{FineProposal, Proposal, SubchainPmf};
use crate::rng::{iteration_rng, subchain_stream, StreamSeed};
use rand::Rng;

pub(super) struct EngineConfig {
    /// `pmfs[l - 1]` drives the level-`l` subchains on level `l - 1`.
    pub pmfs: Vec<SubchainPmf>,
    /// Run subchains to their full maximum length and propose the state at
    /// the drawn index, recording every subchain state for the estimator.
    pub estimator_mode: bool,
}

pub(super) struct ProposalStack<'a, 'b> {
    pub coarsest: &'a mut dyn Proposal,
    /// `fine[l - 1]` proposes the fine modes of level `l`.
    pub fine: &'a mut [&'b mut dyn FineProposal],
}

pub(super) struct RunCtx<'a> {
    pub qoi: Option<&'a QuantityOfInterest>,
    pub recording: bool,
    pub records: Vec<ChainRecord>,
}

impl<'a> RunCtx<'a> {
    pub fn new(num_levels: usize, qoi: Option<&'a QuantityOfInterest>) -> Self {
        RunCtx { qoi, recording: true, records: (0..num_levels).map(ChainRecord::new).collect() }
    }

    pub(super) fn qoi_value(&self, level: usize, state: &DVector<f64>, eval: &Evaluation) -> f64 {
        match self.qoi {
            Some(q) => q.evaluate(level, state, eval.forward.as_ref()),
            None => f64::NAN,
        }
    }

    /// Log one iteration outcome; returns the quantity of interest at the
    /// (possibly unchanged) current state.
    pub(super) fn push(&mut self, level: usize, state: &DVector<f64>, eval: &Evaluation, accepted: bool) -> f64 {
        if !self.recording {
            return f64::NAN;
        }
        let q = self.qoi_value(level, state, eval);
        let rec = &mut self.records[level];
        rec.states.push(state.clone());
        rec.log_posteriors.push(eval.log_density);
        rec.accepted.push(accepted);
        rec.qois.push(q);
        q
    }

    pub(super) fn push_coarse_proposal(&mut self, level: usize, psi_c: &DVector<f64>, qoi: f64) {
        if !self.recording {
            return;
        }
        let rec = &mut self.records[level];
        rec.coarse_proposals.push(psi_c.clone());
        rec.coarse_proposal_qois.push(qoi);
    }

    pub(super) fn count_failure(&mut self, level: usize) {
        self.records[level].failed_evaluations += 1;
    }

    pub(super) fn count_subchain(&mut self, level: usize, steps: u64, accepts: u64) {
        let rec = &mut self.records[level];
        rec.subchain_steps += steps;
        rec.subchain_accepts += accepts;
    }
}

/// One recorded subchain state, kept transiently to pick the proposal and
/// its attribution.
pub(super) struct SubState {
    pub state: DVector<f64>,
    pub eval: Evaluation,
    pub qoi: f64,
    pub accepted: bool,
}

pub(super) enum Keep {
    FinalOnly,
    All,
}

pub(super) struct Outcome {
    pub final_state: DVector<f64>,
    pub final_eval: Evaluation,
    pub all: Option<Vec<SubState>>,
}

/// Plain Metropolis–Hastings chain on one level, also the innermost
/// subchain engine. Iteration indices start at `first_iteration` so a
/// chain can be continued on the same stream (burn-in, then sampling).
pub(super) fn mh_chain<L: LevelSet>(
    levels: &mut L,
    level: usize,
    proposal: &mut dyn Proposal,
    start_state: &DVector<f64>,
    start_eval: &Evaluation,
    n_steps: usize,
    first_iteration: u64,
    stream: StreamSeed,
    ctx: &mut RunCtx,
    keep: Keep,
) -> Outcome {
    let mut state = start_state.clone();
    let mut eval = start_eval.clone();
    let mut all = match keep {
        Keep::All => Some(Vec::with_capacity(n_steps)),
        Keep::FinalOnly => None,
    };

    for j in 0..n_steps {
        let mut rng = iteration_rng(stream, first_iteration + j as u64);
        let psi = proposal.propose(&state, &mut rng);
        let u: f64 = rng.random();

        let mut accepted = false;
        match levels.evaluate(level, &psi) {
            Ok(mut psi_eval) => {
                levels.refresh(level, &mut psi_eval);
                levels.refresh(level, &mut eval);
                let delta =
                    psi_eval.log_density - eval.log_density + proposal.log_q_ratio(&state, &psi);
                if u.ln() < delta {
                    state = psi;
                    eval = psi_eval;
                    accepted = true;
                }
            }
            Err(_) => ctx.count_failure(level),
        }
        proposal.observe(accepted, &state);
        let qoi = ctx.push(level, &state, &eval, accepted);
        if let Some(v) = &mut all {
            v.push(SubState { state: state.clone(), eval: eval.clone(), qoi, accepted });
        }
    }

    Outcome { final_state: state, final_eval: eval, all }
}

/// Recursive multilevel chain at `level >= 1`. Subchains on `level - 1`
/// come from [`mh_chain`] when `level - 1 == 0` and from this function
/// otherwise.
#[allow(clippy::too_many_arguments)]
pub(super) fn level_chain<L: LevelSet>(
    levels: &mut L,
    cfg: &EngineConfig,
    props: &mut ProposalStack<'_, '_>,
    level: usize,
    start_state: &DVector<f64>,
    start_eval: &Evaluation,
    n_steps: usize,
    first_iteration: u64,
    stream: StreamSeed,
    ctx: &mut RunCtx,
    keep: Keep,
) -> Result<Outcome, SamplerError> {
    debug_assert!(level >= 1);
    let coarse_dim = levels.dim(level - 1);
    let fine_dim = levels.dim(level) - coarse_dim;

    let mut state = start_state.clone();
    let mut eval = start_eval.clone();
    let mut coarse_state = DVector::from(state.rows(0, coarse_dim).clone_owned());
    let mut coarse_eval = levels
        .evaluate(level - 1, &coarse_state)
        .map_err(|source| SamplerError::StartupEval { level: level - 1, source })?;
    if !coarse_eval.log_density.is_finite() {
        return Err(SamplerError::Startup { level: level - 1 });
    }

    let mut all = match keep {
        Keep::All => Some(Vec::with_capacity(n_steps)),
        Keep::FinalOnly => None,
    };

    let pmf = cfg.pmfs[level - 1];
    for j in 0..n_steps {
        let iteration = first_iteration + j as u64;
        let mut rng = iteration_rng(stream, iteration);

        // Subchain on the coarser level, started (or restarted, after a
        // rejection) from the current coarse modes.
        let n_draw = pmf.draw(&mut rng);
        let run_len = if cfg.estimator_mode { pmf.max_length() } else { n_draw };
        let sub = subchain_stream(stream, iteration);
        let outcome = if level - 1 == 0 {
            mh_chain(levels, 0, props.coarsest, &coarse_state, &coarse_eval, run_len, 0, sub, ctx, Keep::All)
        } else {
            level_chain(levels, cfg, props, level - 1, &coarse_state, &coarse_eval, run_len, 0, sub, ctx, Keep::All)?
        };
        let sub_states = outcome.all.expect("subchains always keep their states");
        ctx.count_subchain(
            level,
            sub_states.len() as u64,
            sub_states.iter().filter(|s| s.accepted).count() as u64,
        );
        let chosen = &sub_states[n_draw - 1];
        let psi_c = chosen.state.clone();
        let mut psi_c_eval = chosen.eval.clone();
        ctx.push_coarse_proposal(level, &psi_c, chosen.qoi);

        // Fine modes, proposed independently of the coarse modes.
        let current_fine = DVector::from(state.rows(coarse_dim, fine_dim).clone_owned());
        let psi_f = props.fine[level - 1].propose(&current_fine, &mut rng);
        debug_assert_eq!(psi_f.len(), fine_dim);
        let mut psi = DVector::zeros(coarse_dim + fine_dim);
        psi.rows_mut(0, coarse_dim).copy_from(&psi_c);
        psi.rows_mut(coarse_dim, fine_dim).copy_from(&psi_f);

        // A composite proposal identical to the current state can only be
        // accepted; skip the fine evaluation and the acceptance draw, and
        // log the iteration as a rejection.
        if psi == state {
            let qoi = ctx.push(level, &state, &eval, false);
            if let Some(v) = &mut all {
                v.push(SubState { state: state.clone(), eval: eval.clone(), qoi, accepted: false });
            }
            continue;
        }

        let mut accepted = false;
        match levels.evaluate(level, &psi) {
            Ok(mut psi_eval) => {
                levels.pair_evaluated(level, &psi_eval, &psi_c_eval);
                levels.refresh(level, &mut psi_eval);
                levels.refresh(level, &mut eval);
                levels.refresh(level - 1, &mut coarse_eval);
                levels.refresh(level - 1, &mut psi_c_eval);
                let delta = (psi_eval.log_density - eval.log_density)
                    + (coarse_eval.log_density - psi_c_eval.log_density)
                    + props.fine[level - 1].log_q_ratio(&current_fine, &psi_f);
                let u: f64 = rng.random();
                if u.ln() < delta {
                    state = psi;
                    eval = psi_eval;
                    coarse_state = psi_c;
                    coarse_eval = psi_c_eval;
                    accepted = true;
                }
            }
            Err(_) => ctx.count_failure(level),
        }

        let qoi = ctx.push(level, &state, &eval, accepted);
        if let Some(v) = &mut all {
            v.push(SubState { state: state.clone(), eval: eval.clone(), qoi, accepted });
        }
    }

    Ok(Outcome { final_state: state, final_eval: eval, all })
}
