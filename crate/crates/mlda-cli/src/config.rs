//! Experiment configuration: one JSON document per study.
//!
//! Sections: `problem` (physical setup and synthetic-data recipe),
//! `hierarchy` (level resolutions), `proposals`, `sampler`, `estimator`,
//! `aem`, `output`. Defaults are materialized on load and the effective
//! config is echoed into the output directory, so a run can be reproduced
//! from its artifacts alone.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub problem: ProblemConfig,
    pub hierarchy: HierarchyConfig,
    #[serde(default)]
    pub proposals: ProposalsConfig,
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub aem: AemConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// Linear-Gaussian toy problem: level `l` has forward map
    /// `scale_l * theta` against a shared observation vector.
    Gaussian {
        dim: usize,
        noise_sd: f64,
        truth: Truth,
        noise_seed: u64,
    },
    Gravity {
        depth: f64,
        collocation_n: usize,
        length_scale: f64,
        variance: f64,
        noise_sd: f64,
        truth: Truth,
        noise_seed: u64,
    },
    PredatorPrey {
        obs_dt: f64,
        noise_sd: f64,
        rel_tol: f64,
        abs_tol: f64,
        truth: Truth,
        noise_seed: u64,
        /// Parameters to infer (by name: n0, p0, a, b, c, d); the rest
        /// stay pinned at the truth. Omit to infer all six.
        #[serde(default)]
        infer: Option<Vec<String>>,
    },
    Darcy {
        length_scale: f64,
        /// Standard deviation of the log-permeability field.
        sigma: f64,
        noise_sd: f64,
        obs_per_side: usize,
        truth: Truth,
        noise_seed: u64,
    },
}

impl ProblemConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemConfig::Gaussian { .. } => "gaussian",
            ProblemConfig::Gravity { .. } => "gravity",
            ProblemConfig::PredatorPrey { .. } => "predator_prey",
            ProblemConfig::Darcy { .. } => "darcy",
        }
    }
}

/// Where the synthetic-data generating parameters come from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Truth {
    PriorDraw { seed: u64 },
    Values(Vec<f64>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyConfig {
    /// Per-level resolution, coarsest first. Quadrature points per
    /// direction (gravity), mesh nodes per direction (darcy), window end
    /// times (predator_prey), forward-map scales (gaussian).
    pub resolutions: Vec<f64>,
    /// Truncation order of the field expansion (gravity, darcy).
    #[serde(default)]
    pub kl_modes: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalsConfig {
    #[serde(default)]
    pub coarsest: CoarsestProposalConfig,
}

impl Default for ProposalsConfig {
    fn default() -> Self {
        ProposalsConfig { coarsest: CoarsestProposalConfig::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoarsestProposalConfig {
    RandomWalk {
        scale: f64,
    },
    Demcz {
        /// Jump factor; null means the standard `2.38 / sqrt(2 R)`.
        #[serde(default)]
        gamma: Option<f64>,
        jitter_scale: f64,
        /// Prior draws seeding the archive before sampling.
        initial_history: usize,
    },
}

impl Default for CoarsestProposalConfig {
    fn default() -> Self {
        CoarsestProposalConfig::RandomWalk { scale: 0.1 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub draws: usize,
    pub burn_in: usize,
    /// Maximum subchain length per level pair, coarsest pair first.
    /// Empty for a single-level random-walk run.
    pub subchain_lengths: Vec<usize>,
    /// Uniform draws lengths from 1..=J; fixed always uses J.
    #[serde(default = "default_subchain_mode")]
    pub subchain_mode: SubchainMode,
    pub seed: u64,
    #[serde(default)]
    pub estimator_mode: bool,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_initial")]
    pub initial: Initial,
}

fn default_chains() -> usize {
    2
}

fn default_subchain_mode() -> SubchainMode {
    SubchainMode::Uniform
}

fn default_initial() -> Initial {
    Initial::PriorMean
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SubchainMode {
    Uniform,
    Fixed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Initial {
    PriorMean,
    /// Chain-specific draw from the prior.
    PriorDraw,
    Values(Vec<f64>),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    /// `state_<i>` for a state component, `mean_predators` for the
    /// predator–prey window average.
    #[serde(default)]
    pub qoi: Option<String>,
    /// Known reference expectation; enables the error trace.
    #[serde(default)]
    pub reference: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AemConfig {
    #[serde(default)]
    pub enabled: bool,
    /// Prior-sampled moment estimation before the run (0 = none).
    #[serde(default)]
    pub offline_samples: usize,
    #[serde(default = "default_true")]
    pub freeze_after_burn_in: bool,
}

fn default_true() -> bool {
    true
}

impl Default for AemConfig {
    fn default() -> Self {
        AemConfig { enabled: false, offline_samples: 0, freeze_after_burn_in: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_acf_lag")]
    pub acf_max_lag: usize,
    /// Leading state components reported in diagnostics and ACF output.
    #[serde(default = "default_acf_components")]
    pub acf_components: usize,
    /// Posterior trajectory draws written for the predator–prey problem.
    #[serde(default)]
    pub trajectory_draws: usize,
}

fn default_acf_lag() -> usize {
    100
}

fn default_acf_components() -> usize {
    8
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            acf_max_lag: default_acf_lag(),
            acf_components: default_acf_components(),
            trajectory_draws: 0,
        }
    }
}

/// Predator–prey parameter order: initial densities then rate constants.
pub fn parameter_index(name: &str) -> Option<usize> {
    match name {
        "n0" => Some(0),
        "p0" => Some(1),
        "a" => Some(2),
        "b" => Some(3),
        "c" => Some(4),
        "d" => Some(5),
        _ => None,
    }
}

/// Validation failure with the config-field path.
#[derive(Debug)]
pub struct ValidationError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ValidationError {}

fn fail(field: &str, message: impl Into<String>) -> ValidationError {
    ValidationError { field: field.into(), message: message.into() }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Config, ValidationError> {
        let config: Config =
            serde_json::from_str(text).map_err(|e| fail("<document>", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let levels = self.hierarchy.resolutions.len();
        if levels == 0 {
            return Err(fail("hierarchy.resolutions", "need at least one level"));
        }
        if self.sampler.subchain_lengths.len() + 1 != levels {
            return Err(fail(
                "sampler.subchain_lengths",
                format!("expected {} entries for {} levels", levels - 1, levels),
            ));
        }
        if self.sampler.subchain_lengths.iter().any(|&j| j == 0) {
            return Err(fail("sampler.subchain_lengths", "lengths must be positive"));
        }
        if self.sampler.draws == 0 {
            return Err(fail("sampler.draws", "must be positive"));
        }
        if self.sampler.chains == 0 {
            return Err(fail("sampler.chains", "must be positive"));
        }
        if self.sampler.estimator_mode && self.sampler.subchain_mode == SubchainMode::Fixed {
            return Err(fail("sampler.subchain_mode", "estimator mode requires uniform subchains"));
        }
        match &self.problem {
            ProblemConfig::Gaussian { dim, noise_sd, .. } => {
                if *dim == 0 {
                    return Err(fail("problem.dim", "must be positive"));
                }
                if *noise_sd <= 0.0 {
                    return Err(fail("problem.noise_sd", "must be positive"));
                }
            }
            ProblemConfig::Gravity { depth, collocation_n, noise_sd, .. } => {
                if *depth <= 0.0 {
                    return Err(fail("problem.depth", "must be positive"));
                }
                if *collocation_n == 0 {
                    return Err(fail("problem.collocation_n", "must be positive"));
                }
                if *noise_sd <= 0.0 {
                    return Err(fail("problem.noise_sd", "must be positive"));
                }
                if self.hierarchy.kl_modes.is_none() {
                    return Err(fail("hierarchy.kl_modes", "gravity needs a truncation order"));
                }
                if !self.hierarchy.resolutions.windows(2).all(|w| w[0] < w[1]) {
                    return Err(fail("hierarchy.resolutions", "must increase across levels"));
                }
            }
            ProblemConfig::PredatorPrey { obs_dt, noise_sd, infer, .. } => {
                if *obs_dt <= 0.0 {
                    return Err(fail("problem.obs_dt", "must be positive"));
                }
                if *noise_sd <= 0.0 {
                    return Err(fail("problem.noise_sd", "must be positive"));
                }
                if let Some(names) = infer {
                    if names.is_empty() {
                        return Err(fail("problem.infer", "needs at least one parameter"));
                    }
                    for name in names {
                        if parameter_index(name).is_none() {
                            return Err(fail("problem.infer", format!("unknown parameter {name:?}")));
                        }
                    }
                }
                if !self.hierarchy.resolutions.windows(2).all(|w| w[0] < w[1]) {
                    return Err(fail("hierarchy.resolutions", "windows must grow across levels"));
                }
            }
            ProblemConfig::Darcy { obs_per_side, noise_sd, .. } => {
                if *obs_per_side == 0 {
                    return Err(fail("problem.obs_per_side", "must be positive"));
                }
                if *noise_sd <= 0.0 {
                    return Err(fail("problem.noise_sd", "must be positive"));
                }
                if self.hierarchy.kl_modes.is_none() {
                    return Err(fail("hierarchy.kl_modes", "darcy needs a truncation order"));
                }
                for (i, r) in self.hierarchy.resolutions.iter().enumerate() {
                    if r.fract() != 0.0 || *r < 2.0 {
                        return Err(fail(
                            "hierarchy.resolutions",
                            format!("level {i}: mesh nodes must be an integer >= 2"),
                        ));
                    }
                }
            }
        }
        if let Some(name) = &self.estimator.qoi {
            let ok = name == "mean_predators"
                || name.strip_prefix("state_").is_some_and(|i| i.parse::<usize>().is_ok());
            if !ok {
                return Err(fail("estimator.qoi", format!("unknown quantity {name:?}")));
            }
            if name == "mean_predators" && self.problem.kind() != "predator_prey" {
                return Err(fail("estimator.qoi", "mean_predators needs the predator_prey problem"));
            }
        }
        if self.aem.enabled && levels < 2 {
            return Err(fail("aem.enabled", "the error model needs at least two levels"));
        }
        Ok(())
    }

    /// Stable non-cryptographic hash of the canonical JSON encoding.
    pub fn content_hash(&self) -> u64 {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut hash: u64 = 0xcbf29ce484222325;
        for b in text.bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
        hash
    }
}
