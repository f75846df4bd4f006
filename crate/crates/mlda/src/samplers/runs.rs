//! Public sampler entry points.

use nalgebra::DVector;
use rand::Rng;

use super::engine::{level_chain, mh_chain, EngineConfig, Keep, ProposalStack, RunCtx};
use super::{ChainRecord, Evaluation, LevelSet};
use crate::estimator::QuantityOfInterest;
use crate::error::SamplerError;
use crate::proposals::{FineProposal, IdentityFineProposal, Proposal, SubchainPmf};
use crate::rng::{iteration_rng, subchain_stream, StreamSeed};

fn startup_eval<L: LevelSet>(
    levels: &mut L,
    level: usize,
    theta0: &DVector<f64>,
) -> Result<Evaluation, SamplerError> {
    assert_eq!(theta0.len(), levels.dim(level), "initial state dimension mismatch");
    let eval = levels
        .evaluate(level, theta0)
        .map_err(|source| SamplerError::StartupEval { level, source })?;
    if !eval.log_density.is_finite() {
        return Err(SamplerError::Startup { level });
    }
    Ok(eval)
}

/// Metropolis–Hastings on the coarsest level of `levels`.
pub fn mh_run<L: LevelSet>(
    levels: &mut L,
    proposal: &mut dyn Proposal,
    theta0: &DVector<f64>,
    n_steps: usize,
    stream: StreamSeed,
    qoi: Option<&QuantityOfInterest>,
) -> Result<ChainRecord, SamplerError> {
    let eval = startup_eval(levels, 0, theta0)?;
    let mut ctx = RunCtx::new(1, qoi);
    mh_chain(levels, 0, proposal, theta0, &eval, n_steps, 0, stream, &mut ctx, Keep::FinalOnly);
    Ok(ctx.records.pop().unwrap())
}

/// Delayed acceptance on a coarse/fine pair sharing one state space.
///
/// Each iteration takes a single Metropolis step on the coarse density; if
/// that step moved, the move is screened against the fine density with the
/// two-density ratio, and if it did not move the fine density is not
/// evaluated at all.
pub fn da_run<L: LevelSet>(
    levels: &mut L,
    proposal: &mut dyn Proposal,
    theta0: &DVector<f64>,
    n_steps: usize,
    stream: StreamSeed,
    qoi: Option<&QuantityOfInterest>,
) -> Result<ChainRecord, SamplerError> {
    assert_eq!(levels.top_level(), 1, "delayed acceptance works on exactly two levels");
    assert_eq!(levels.dim(0), levels.dim(1), "delayed acceptance shares one state across levels");

    let mut state = theta0.clone();
    let mut eval = startup_eval(levels, 1, theta0)?;
    let mut coarse_eval = startup_eval(levels, 0, theta0)?;
    let mut ctx = RunCtx::new(2, qoi);

    for j in 0..n_steps {
        let mut rng = iteration_rng(stream, j as u64);
        let sub = subchain_stream(stream, j as u64);

        // First stage: one Metropolis step on the coarse density.
        let outcome =
            mh_chain(levels, 0, proposal, &state, &coarse_eval, 1, 0, sub, &mut ctx, Keep::All);
        let sub_states = outcome.all.unwrap();
        ctx.count_subchain(1, 1, sub_states[0].accepted as u64);
        let psi = sub_states[0].state.clone();
        let mut psi_coarse_eval = sub_states[0].eval.clone();
        ctx.push_coarse_proposal(1, &psi, sub_states[0].qoi);

        if psi == state {
            // First stage rejected; the fine density is not evaluated.
            ctx.push(1, &state, &eval, false);
            continue;
        }

        let mut accepted = false;
        match levels.evaluate(1, &psi) {
            Ok(mut psi_eval) => {
                levels.pair_evaluated(1, &psi_eval, &psi_coarse_eval);
                levels.refresh(1, &mut psi_eval);
                levels.refresh(1, &mut eval);
                levels.refresh(0, &mut coarse_eval);
                levels.refresh(0, &mut psi_coarse_eval);
                let delta = (psi_eval.log_density - eval.log_density)
                    + (coarse_eval.log_density - psi_coarse_eval.log_density);
                let u: f64 = rng.random();
                if u.ln() < delta {
                    state = psi;
                    eval = psi_eval;
                    coarse_eval = psi_coarse_eval;
                    accepted = true;
                }
            }
            Err(_) => ctx.count_failure(1),
        }
        ctx.push(1, &state, &eval, accepted);
    }

    Ok(ctx.records.pop().unwrap())
}

/// Randomized-length-subchain surrogate transition on a coarse/fine pair
/// sharing one state space: the proposal is the final state of a subchain
/// of random length on the coarse density.
pub fn rst_run<L: LevelSet>(
    levels: &mut L,
    proposal: &mut dyn Proposal,
    pmf: SubchainPmf,
    theta0: &DVector<f64>,
    n_steps: usize,
    stream: StreamSeed,
    qoi: Option<&QuantityOfInterest>,
) -> Result<ChainRecord, SamplerError> {
    assert_eq!(levels.top_level(), 1, "surrogate transition works on exactly two levels");
    assert_eq!(levels.dim(0), levels.dim(1), "surrogate transition shares one state across levels");

    let eval = startup_eval(levels, 1, theta0)?;
    let cfg = EngineConfig { pmfs: vec![pmf], estimator_mode: false };
    let mut none = IdentityFineProposal::new(0);
    let mut fine: [&mut dyn FineProposal; 1] = [&mut none];
    let mut props = ProposalStack { coarsest: proposal, fine: &mut fine };
    let mut ctx = RunCtx::new(2, qoi);
    level_chain(levels, &cfg, &mut props, 1, theta0, &eval, n_steps, 0, stream, &mut ctx, Keep::FinalOnly)?;
    Ok(ctx.records.pop().unwrap())
}

/// Two-level delayed acceptance with embedded states: a subchain proposes
/// the coarse modes, an independent kernel proposes the fine modes.
pub fn tlda_run<L: LevelSet>(
    levels: &mut L,
    proposal: &mut dyn Proposal,
    fine_proposal: &mut dyn FineProposal,
    pmf: SubchainPmf,
    theta0: &DVector<f64>,
    n_steps: usize,
    stream: StreamSeed,
    qoi: Option<&QuantityOfInterest>,
) -> Result<ChainRecord, SamplerError> {
    assert_eq!(levels.top_level(), 1, "the two-level sampler works on exactly two levels");
    assert_eq!(
        fine_proposal.dim(),
        levels.dim(1) - levels.dim(0),
        "fine proposal dimension must match the added fine modes"
    );

    let eval = startup_eval(levels, 1, theta0)?;
    let cfg = EngineConfig { pmfs: vec![pmf], estimator_mode: false };
    let mut fine: [&mut dyn FineProposal; 1] = [fine_proposal];
    let mut props = ProposalStack { coarsest: proposal, fine: &mut fine };
    let mut ctx = RunCtx::new(2, qoi);
    level_chain(levels, &cfg, &mut props, 1, theta0, &eval, n_steps, 0, stream, &mut ctx, Keep::FinalOnly)?;
    Ok(ctx.records.pop().unwrap())
}

/// Configuration of a full multilevel run.
#[derive(Clone, Debug)]
pub struct MldaConfig {
    /// `subchain[l - 1]` is the length distribution for level-`l`
    /// subchains. In estimator mode every entry must be uniform; its
    /// maximum is the fixed subchain length the sampler continues to.
    pub subchain: Vec<SubchainPmf>,
    pub n_steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Record every subchain state and attribute a uniformly drawn
    /// proposal per iteration, as the multilevel estimator requires.
    pub estimator_mode: bool,
}

impl MldaConfig {
    fn validate(&self, num_levels: usize) -> Result<(), SamplerError> {
        if self.subchain.len() + 1 != num_levels {
            return Err(SamplerError::Config(format!(
                "{} subchain distributions for {} levels; need one per level pair",
                self.subchain.len(),
                num_levels
            )));
        }
        if self.estimator_mode {
            for (i, pmf) in self.subchain.iter().enumerate() {
                if !matches!(pmf, SubchainPmf::Uniform { .. }) {
                    return Err(SamplerError::Config(format!(
                        "estimator mode requires uniform subchain distributions; level {} is fixed",
                        i + 1
                    )));
                }
            }
        }
        if self.n_steps == 0 {
            return Err(SamplerError::Config("n_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Output of a multilevel run: one record per level, coarsest first.
#[derive(Clone, Debug)]
pub struct MldaOutput {
    pub records: Vec<ChainRecord>,
}

impl MldaOutput {
    pub fn top(&self) -> &ChainRecord {
        self.records.last().unwrap()
    }
}

/// The recursive multilevel sampler.
///
/// Burn-in runs first on the same stream with recording off and
/// adaptation (step tuning, error-model updates) on; at its end the
/// proposals and the target freeze and `n_steps` recorded iterations
/// follow. With a single level this degenerates to Metropolis–Hastings
/// with the coarsest proposal.
pub fn mlda_run<L: LevelSet>(
    levels: &mut L,
    config: &MldaConfig,
    coarsest: &mut dyn Proposal,
    fine_proposals: &mut [Box<dyn FineProposal>],
    theta0: &DVector<f64>,
    qoi: Option<&QuantityOfInterest>,
) -> Result<MldaOutput, SamplerError> {
    let top = levels.top_level();
    config.validate(top + 1)?;
    if fine_proposals.len() != top {
        return Err(SamplerError::Config(format!(
            "{} fine proposals for {} level pairs",
            fine_proposals.len(),
            top
        )));
    }

    let eval = startup_eval(levels, top, theta0)?;
    let stream = StreamSeed::root(config.seed);
    let cfg = EngineConfig { pmfs: config.subchain.clone(), estimator_mode: config.estimator_mode };
    let mut fine: Vec<&mut dyn FineProposal> =
        fine_proposals.iter_mut().map(|b| &mut **b as &mut dyn FineProposal).collect();
    let mut ctx = RunCtx::new(top + 1, qoi);

    // Burn-in: adapt, record nothing.
    coarsest.set_tuning(true);
    ctx.recording = false;
    let warm = if config.burn_in > 0 {
        let mut props = ProposalStack { coarsest: &mut *coarsest, fine: &mut fine[..] };
        if top == 0 {
            mh_chain(levels, 0, props.coarsest, theta0, &eval, config.burn_in, 0, stream, &mut ctx, Keep::FinalOnly)
        } else {
            level_chain(levels, &cfg, &mut props, top, theta0, &eval, config.burn_in, 0, stream, &mut ctx, Keep::FinalOnly)?
        }
    } else {
        super::engine::Outcome { final_state: theta0.clone(), final_eval: eval, all: None }
    };
    coarsest.set_tuning(false);
    levels.end_burn_in();

    // Sampling phase, continuing the same stream.
    ctx.recording = true;
    let mut props = ProposalStack { coarsest: &mut *coarsest, fine: &mut fine[..] };
    if top == 0 {
        mh_chain(
            levels,
            0,
            props.coarsest,
            &warm.final_state,
            &warm.final_eval,
            config.n_steps,
            config.burn_in as u64,
            stream,
            &mut ctx,
            Keep::FinalOnly,
        );
    } else {
        level_chain(
            levels,
            &cfg,
            &mut props,
            top,
            &warm.final_state,
            &warm.final_eval,
            config.n_steps,
            config.burn_in as u64,
            stream,
            &mut ctx,
            Keep::FinalOnly,
        )?;
    }

    if config.estimator_mode {
        // Structural count law: N_l = N * prod of subchain lengths above l.
        let mut expect = config.n_steps;
        for l in (0..=top).rev() {
            assert_eq!(ctx.records[l].len(), expect, "level {l} sample count violates the count law");
            if l > 0 {
                expect *= config.subchain[l - 1].max_length();
            }
        }
    }

    Ok(MldaOutput { records: ctx.records })
}
