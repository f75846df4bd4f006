//! Build a runnable experiment from a config and execute its chains.

use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DVector;

use mlda::aem::AemRuntime;
use mlda::estimator::{QoiSpec, QuantityOfInterest};
use mlda::field::CovarianceKernel;
use mlda::model::{
    FnForward, ForwardModel, LevelPartition, ModelHierarchy, NoiseModel, PosteriorLevel, Prior,
};
use mlda::problems::{perturb_with_noise, DarcyProblem, GravityProblem, PredatorPreyProblem};
use mlda::proposals::{
    DemczProposal, FineProposal, PriorFineProposal, Proposal, RandomWalkProposal, SubchainPmf,
};
use mlda::rng::{mix, StreamSeed};
use mlda::samplers::{mlda_run, ChainRecord, HierarchyTarget, MldaConfig, MldaOutput};

use crate::config::{
    CoarsestProposalConfig, Config, Initial, ProblemConfig, SubchainMode, Truth,
};

/// Stream salts for randomness outside the chains themselves.
const SALT_INITIAL: u64 = 0x696e6974;
const SALT_HISTORY: u64 = 0x68697374;
const SALT_AEM: u64 = 0x61656d;

pub struct Experiment {
    pub config: Config,
    pub hierarchy: Arc<ModelHierarchy>,
    pub qoi: QuantityOfInterest,
    pub truth: DVector<f64>,
    /// Master seed after the command-line/environment override.
    pub seed: u64,
    pub chains: usize,
    /// Forward trajectory of a predator–prey state for plotting.
    pub predator_prey: Option<PredatorPreyProblem>,
}

pub struct ChainOutput {
    pub records: Vec<ChainRecord>,
    pub bias_snapshot: Option<mlda::aem::BiasModel>,
    pub wall_seconds: f64,
}

fn resolve_truth(truth: &Truth, prior: &Prior, dim: usize) -> Result<DVector<f64>> {
    match truth {
        Truth::PriorDraw { seed } => {
            let mut rng = StreamSeed::root(*seed).rng();
            Ok(prior.sample(&mut rng))
        }
        Truth::Values(values) => {
            if values.len() != dim {
                bail!("problem.truth: expected {dim} values, got {}", values.len());
            }
            Ok(DVector::from_vec(values.clone()))
        }
    }
}

pub fn build(config: &Config, seed: u64, chains: usize) -> Result<Experiment> {
    let levels = config.hierarchy.resolutions.len();
    let mut predator_prey = None;

    let (hierarchy, truth) = match &config.problem {
        ProblemConfig::Gaussian { dim, noise_sd, truth, noise_seed } => {
            let dim = *dim;
            let prior = Prior::StandardNormal { dim };
            let truth = resolve_truth(truth, &prior, dim)?;
            let scales = config.hierarchy.resolutions.clone();
            let fine_clean = &truth * *scales.last().unwrap();
            let data = perturb_with_noise(&fine_clean, *noise_sd, *noise_seed);
            let posterior_levels = scales
                .iter()
                .map(|&scale| {
                    PosteriorLevel::new(
                        Box::new(FnForward { output_dim: dim, f: move |t: &DVector<f64>| t * scale })
                            as Box<dyn ForwardModel>,
                        data.clone(),
                        NoiseModel::isotropic(dim, *noise_sd),
                        Prior::StandardNormal { dim },
                    )
                })
                .collect();
            let hierarchy =
                ModelHierarchy::new(posterior_levels, LevelPartition::new(vec![dim; levels]));
            (Arc::new(hierarchy), truth)
        }
        ProblemConfig::Gravity { depth, collocation_n, length_scale, variance, noise_sd, truth, noise_seed } => {
            let kl_modes = config.hierarchy.kl_modes.unwrap();
            let problem = GravityProblem {
                depth: *depth,
                collocation_n: *collocation_n,
                quadrature_m: config.hierarchy.resolutions.iter().map(|&m| m as usize).collect(),
                kl_modes,
                kernel: CovarianceKernel::Matern32 { variance: *variance, length_scale: *length_scale },
                noise_sd: *noise_sd,
            };
            let prior = Prior::StandardNormal { dim: kl_modes };
            let truth = resolve_truth(truth, &prior, kl_modes)?;
            let data = problem.synthetic_data(&truth, *noise_seed).map_err(|e| anyhow!("{e}"))?;
            (problem.hierarchy_arc(data).map_err(|e| anyhow!("{e}"))?, truth)
        }
        ProblemConfig::PredatorPrey { obs_dt, noise_sd, rel_tol, abs_tol, truth, noise_seed, infer } => {
            let prior = PredatorPreyProblem::full_prior();
            let truth = resolve_truth(truth, &prior, PredatorPreyProblem::true_parameters().len())?;
            let free: Vec<usize> = match infer {
                None => (0..truth.len()).collect(),
                Some(names) => names
                    .iter()
                    .map(|n| crate::config::parameter_index(n).expect("validated"))
                    .collect(),
            };
            let problem = PredatorPreyProblem {
                windows: config.hierarchy.resolutions.clone(),
                obs_dt: *obs_dt,
                noise_sd: *noise_sd,
                rel_tol: *rel_tol,
                abs_tol: *abs_tol,
                free,
                pinned: truth.clone(),
            };
            let data = problem
                .synthetic_data(&truth, *noise_seed)
                .map_err(|e| anyhow!("synthetic data: {e}"))?;
            let hierarchy = problem.hierarchy_arc(&data);
            predator_prey = Some(problem);
            (hierarchy, truth)
        }
        ProblemConfig::Darcy { length_scale, sigma, noise_sd, obs_per_side, truth, noise_seed } => {
            let kl_modes = config.hierarchy.kl_modes.unwrap();
            let m0 = config.hierarchy.resolutions[0] as usize;
            let problem = DarcyProblem {
                m0,
                num_levels: levels,
                kl_modes,
                kernel: CovarianceKernel::SquaredExponential {
                    variance: sigma * sigma,
                    length_scale: *length_scale,
                },
                noise_sd: *noise_sd,
                obs_per_side: *obs_per_side,
            };
            for (l, r) in config.hierarchy.resolutions.iter().enumerate() {
                if problem.mesh_nodes(l) != *r as usize {
                    bail!(
                        "hierarchy.resolutions: level {l} has {} nodes, refinement rule needs {}",
                        r,
                        problem.mesh_nodes(l)
                    );
                }
            }
            let prior = Prior::StandardNormal { dim: kl_modes };
            let truth = resolve_truth(truth, &prior, kl_modes)?;
            let data = problem.synthetic_data(&truth, *noise_seed).map_err(|e| anyhow!("{e}"))?;
            (problem.hierarchy_arc(data).map_err(|e| anyhow!("{e}"))?, truth)
        }
    };

    let qoi = build_qoi(config, &hierarchy, predator_prey.as_ref())?;
    Ok(Experiment { config: config.clone(), hierarchy, qoi, truth, seed, chains, predator_prey })
}

fn build_qoi(
    config: &Config,
    hierarchy: &ModelHierarchy,
    predator_prey: Option<&PredatorPreyProblem>,
) -> Result<QuantityOfInterest> {
    let levels = hierarchy.levels.len();
    match config.estimator.qoi.as_deref() {
        None => Ok(QuantityOfInterest::uniform(QoiSpec::StateComponent(0), levels)),
        Some("mean_predators") => {
            let problem = predator_prey.context("mean_predators needs the predator_prey problem")?;
            Ok(problem.mean_predator_qoi())
        }
        Some(name) => {
            let index: usize = name
                .strip_prefix("state_")
                .and_then(|i| i.parse().ok())
                .with_context(|| format!("unknown quantity of interest {name:?}"))?;
            if index >= hierarchy.partition.dim(0) {
                bail!("estimator.qoi: component {index} outside the coarsest state");
            }
            Ok(QuantityOfInterest::uniform(QoiSpec::StateComponent(index), levels))
        }
    }
}

impl Experiment {
    pub fn chain_seed(&self, chain: usize) -> u64 {
        mix(self.seed, chain as u64)
    }

    fn initial_state(&self, chain: usize) -> Result<DVector<f64>> {
        let prior = &self.hierarchy.levels[self.hierarchy.top_level()].prior;
        match &self.config.sampler.initial {
            Initial::PriorMean => Ok(prior.mean()),
            Initial::PriorDraw => {
                let mut rng = StreamSeed::root(mix(self.chain_seed(chain), SALT_INITIAL)).rng();
                Ok(prior.sample(&mut rng))
            }
            Initial::Values(values) => {
                let dim = self.hierarchy.partition.dim(self.hierarchy.top_level());
                if values.len() != dim {
                    bail!("sampler.initial: expected {dim} values, got {}", values.len());
                }
                Ok(DVector::from_vec(values.clone()))
            }
        }
    }

    fn coarsest_proposal(&self, chain: usize) -> Box<dyn Proposal> {
        match &self.config.proposals.coarsest {
            CoarsestProposalConfig::RandomWalk { scale } => Box::new(RandomWalkProposal::new(*scale)),
            CoarsestProposalConfig::Demcz { gamma, jitter_scale, initial_history } => {
                let dim = self.hierarchy.partition.dim(0);
                let mut proposal = DemczProposal::new(dim, *gamma, *jitter_scale);
                let prior = self.hierarchy.levels[0].prior.clone();
                let mut rng = StreamSeed::root(mix(self.chain_seed(chain), SALT_HISTORY)).rng();
                let n = (*initial_history).max(2);
                proposal.warm_start((0..n).map(|_| prior.sample(&mut rng)));
                Box::new(proposal)
            }
        }
    }

    fn fine_proposals(&self) -> Vec<Box<dyn FineProposal>> {
        let partition = &self.hierarchy.partition;
        (1..self.hierarchy.levels.len())
            .map(|l| {
                let coarse_dim = partition.dim(l - 1);
                let fine_dim = partition.dim(l) - coarse_dim;
                let marginal = self.hierarchy.levels[l].prior.slice(coarse_dim, fine_dim);
                Box::new(PriorFineProposal::new(marginal)) as Box<dyn FineProposal>
            })
            .collect()
    }

    pub fn subchain_pmfs(&self) -> Vec<SubchainPmf> {
        self.config
            .sampler
            .subchain_lengths
            .iter()
            .map(|&j| match self.config.sampler.subchain_mode {
                SubchainMode::Uniform => SubchainPmf::uniform(j),
                SubchainMode::Fixed => SubchainPmf::fixed(j),
            })
            .collect()
    }

    /// Run one chain to completion.
    pub fn run_chain(&self, chain: usize) -> Result<ChainOutput> {
        let start = std::time::Instant::now();
        let aem = if self.config.aem.enabled {
            let runtime = if self.config.aem.offline_samples >= 2 {
                AemRuntime::with_offline_moments(
                    &self.hierarchy,
                    self.config.aem.offline_samples,
                    StreamSeed::root(mix(self.chain_seed(chain), SALT_AEM)),
                    self.config.aem.freeze_after_burn_in,
                )
            } else {
                AemRuntime::new(&self.hierarchy, self.config.aem.freeze_after_burn_in)
            }
            .map_err(|e| anyhow!("{e}"))?;
            Some(runtime)
        } else {
            None
        };

        let mut target = match aem {
            Some(runtime) => HierarchyTarget::with_aem(self.hierarchy.clone(), runtime),
            None => HierarchyTarget::new(self.hierarchy.clone()),
        };
        let mut coarsest = self.coarsest_proposal(chain);
        let mut fine = self.fine_proposals();
        let theta0 = self.initial_state(chain)?;

        let run_config = MldaConfig {
            subchain: self.subchain_pmfs(),
            n_steps: self.config.sampler.draws,
            burn_in: self.config.sampler.burn_in,
            seed: self.chain_seed(chain),
            estimator_mode: self.config.sampler.estimator_mode,
        };
        let MldaOutput { records } = mlda_run(
            &mut target,
            &run_config,
            coarsest.as_mut(),
            &mut fine,
            &theta0,
            Some(&self.qoi),
        )
        .map_err(|e| anyhow!("chain {chain}: {e}"))?;

        Ok(ChainOutput {
            records,
            bias_snapshot: target.aem().map(|a| a.bias().clone()),
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }
}
