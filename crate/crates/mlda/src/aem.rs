//! Gaussian adaptive error model for coarse-level bias.
//!
//! Adjacent levels of a hierarchy disagree: the coarse forward map is
//! offset from the fine one. Writing the total offset between level `l`
//! and the finest level as a telescoping sum of per-pair differences
//! `B_k = F_{k+1} - F_k`, each pair is modelled by a running Gaussian
//! (mean and covariance of observed differences). The coarse likelihood is
//! then evaluated with its output shifted by the accumulated mean and its
//! noise covariance widened by the accumulated bias covariance, which
//! recenters and broadens the coarse posterior around the fine one.
//!
//! Pair moments can be estimated offline from prior draws, or updated
//! recursively every time two adjacent levels are evaluated at the same
//! parameter value during sampling. The recursive updates reproduce the
//! batch sample moments exactly, so adaptation diminishes at rate 1/i.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{BuildError, EvalError};
use crate::model::{join_state, split_state, LevelState, ModelHierarchy};
use crate::rng::StreamSeed;

/// Running mean and covariance of the forward-map difference between one
/// pair of adjacent levels.
#[derive(Clone, Debug)]
pub struct BiasPairModel {
    /// Pair index k: models `F_{k+1} - F_k`.
    pub pair: usize,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Number of absorbed samples.
    pub count: usize,
}

impl BiasPairModel {
    pub fn empty(pair: usize, dim: usize) -> Self {
        BiasPairModel {
            pair,
            mean: DVector::zeros(dim),
            covariance: DMatrix::zeros(dim, dim),
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Absorb one bias sample with the recursive mean/covariance updates.
    ///
    /// The covariance recursion is indeterminate at the first sample, so
    /// the model initializes to mean = first sample, covariance = zero,
    /// and recurses from there; after n updates the moments equal the
    /// batch formulas (unbiased covariance) over those n samples.
    pub fn update(&mut self, b: &DVector<f64>) {
        assert_eq!(b.len(), self.dim(), "bias sample dimension mismatch");
        if self.count == 0 {
            self.mean = b.clone();
            self.covariance.fill(0.0);
            self.count = 1;
            return;
        }
        let i = self.count as f64;
        let new_mean = (&self.mean * i + b) / (i + 1.0);
        let mm_old = &self.mean * self.mean.transpose();
        let mm_new = &new_mean * new_mean.transpose();
        let bb = b * b.transpose();
        self.covariance = self.covariance.clone() * ((i - 1.0) / i)
            + (mm_old * i - mm_new * (i + 1.0) + bb) / i;
        self.mean = new_mean;
        self.count += 1;
    }
}

/// Bias models for the level pairs `k = 0 .. L-1` of one hierarchy.
/// Totals for level `l` are plain sums over the pairs `k >= l`.
#[derive(Clone, Debug)]
pub struct BiasModel {
    pub pairs: Vec<BiasPairModel>,
}

impl BiasModel {
    pub fn empty(num_pairs: usize, dim: usize) -> Self {
        BiasModel { pairs: (0..num_pairs).map(|k| BiasPairModel::empty(k, dim)).collect() }
    }

    pub fn output_dim(&self) -> usize {
        self.pairs.first().map_or(0, |p| p.dim())
    }

    /// Total bias mean seen from `level`: sum of pair means `k >= level`.
    pub fn total_mean(&self, level: usize) -> DVector<f64> {
        let mut sum = DVector::zeros(self.output_dim());
        for pair in &self.pairs[level..] {
            sum += &pair.mean;
        }
        sum
    }

    /// Total bias covariance seen from `level`.
    pub fn total_covariance(&self, level: usize) -> DMatrix<f64> {
        let d = self.output_dim();
        let mut sum = DMatrix::zeros(d, d);
        for pair in &self.pairs[level..] {
            sum += &pair.covariance;
        }
        sum
    }
}

/// One observed difference of adjacent forward maps at a shared parameter.
///
/// `theta` may live on level k or level k+1. A level-k state is embedded
/// into level k+1 by filling the missing fine modes with the fine-mode
/// prior mean.
pub fn bias_sample(
    hierarchy: &ModelHierarchy,
    k: usize,
    theta: &LevelState,
) -> Result<DVector<f64>, EvalError> {
    assert!(k + 1 <= hierarchy.top_level(), "pair index out of range");
    let upper = &hierarchy.levels[k + 1];
    let lower = &hierarchy.levels[k];
    assert_eq!(
        upper.forward.output_dim(),
        lower.forward.output_dim(),
        "adjacent levels must share an observation space for bias modelling"
    );

    let (theta_up, theta_lo);
    match theta.level {
        l if l == k + 1 => {
            theta_up = theta.clone();
            let (_, coarse) = split_state(&hierarchy.partition, theta);
            theta_lo = coarse;
        }
        l if l == k => {
            let fine_dim = hierarchy.partition.fine_dim(k + 1);
            let fine_fill = upper.prior.slice(hierarchy.partition.dim(k), fine_dim).mean();
            theta_up = join_state(&fine_fill, theta);
            theta_lo = theta.clone();
        }
        _ => panic!("state level {} does not border pair {k}", theta.level),
    }

    let fine_out = upper.forward_output(&theta_up)?;
    let coarse_out = lower.forward_output(&theta_lo)?;
    Ok(fine_out - coarse_out)
}

/// Estimate pair-k moments offline from prior draws: sample mean and
/// unbiased sample covariance of the bias over `n` draws from the
/// level-(k+1) prior.
pub fn offline_moments(
    hierarchy: &ModelHierarchy,
    k: usize,
    n: usize,
    stream: StreamSeed,
) -> Result<BiasPairModel, EvalError> {
    assert!(n >= 2, "offline moment estimation needs at least two draws");
    let mut rng = stream.rng();
    let prior = &hierarchy.levels[k + 1].prior;
    let dim = hierarchy.levels[k + 1].forward.output_dim();

    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let theta = LevelState::new(k + 1, prior.sample(&mut rng));
        samples.push(bias_sample(hierarchy, k, &theta)?);
    }
    let mut mean = DVector::zeros(dim);
    for b in &samples {
        mean += b;
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    for b in &samples {
        let d = b - &mean;
        cov += &d * d.transpose();
    }
    cov /= (n - 1) as f64;
    Ok(BiasPairModel { pair: k, mean, covariance: cov, count: n })
}

/// Runtime state of the error model inside one chain: the pair moments
/// plus a cached factorization of `Sigma_bias + Sigma_noise` per level.
pub struct AemRuntime {
    bias: BiasModel,
    combined: Vec<Cholesky<f64, Dyn>>,
    generation: u64,
    adapting: bool,
    freeze_at_burn_in_end: bool,
}

impl AemRuntime {
    /// Fresh model with zero moments. Fails if the hierarchy's levels do
    /// not share an observation space.
    pub fn new(hierarchy: &ModelHierarchy, freeze_at_burn_in_end: bool) -> Result<Self, BuildError> {
        let top = hierarchy.top_level();
        if top == 0 {
            return Err(BuildError::Invalid("error model needs at least two levels".into()));
        }
        let dim = hierarchy.levels[top].forward.output_dim();
        for (l, level) in hierarchy.levels.iter().enumerate() {
            if level.forward.output_dim() != dim {
                return Err(BuildError::Invalid(format!(
                    "level {l} output dimension {} differs from finest ({dim}); \
                     the error model needs a shared observation space",
                    level.forward.output_dim()
                )));
            }
        }
        let bias = BiasModel::empty(top, dim);
        let mut runtime = AemRuntime {
            bias,
            combined: Vec::new(),
            generation: 0,
            adapting: true,
            freeze_at_burn_in_end,
        };
        runtime.refactorize(hierarchy);
        Ok(runtime)
    }

    /// Start from offline prior-sampled moments for every pair.
    pub fn with_offline_moments(
        hierarchy: &ModelHierarchy,
        samples_per_pair: usize,
        stream: StreamSeed,
        freeze_at_burn_in_end: bool,
    ) -> Result<Self, BuildError> {
        let mut runtime = Self::new(hierarchy, freeze_at_burn_in_end)?;
        for k in 0..hierarchy.top_level() {
            runtime.bias.pairs[k] = offline_moments(hierarchy, k, samples_per_pair, stream.child(k as u64))
                .map_err(|e| BuildError::Invalid(format!("offline moments for pair {k}: {e}")))?;
        }
        runtime.generation += 1;
        runtime.refactorize(hierarchy);
        Ok(runtime)
    }

    pub fn bias(&self) -> &BiasModel {
        &self.bias
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn is_adapting(&self) -> bool {
        self.adapting
    }

    pub fn set_adapting(&mut self, on: bool) {
        self.adapting = on;
    }

    pub fn end_burn_in(&mut self) {
        if self.freeze_at_burn_in_end {
            self.adapting = false;
        }
    }

    fn refactorize(&mut self, hierarchy: &ModelHierarchy) {
        let top = hierarchy.top_level();
        self.combined = (0..top)
            .map(|l| {
                let total = self.bias.total_covariance(l) + hierarchy.levels[l].noise.to_matrix();
                Cholesky::new(total).expect("bias + noise covariance must stay positive-definite")
            })
            .collect();
    }

    /// Bias-corrected log-likelihood for a level below the finest:
    /// `-1/2 (F(theta) + mu - d)^T (Sigma_bias + Sigma_noise)^-1 (...)`.
    pub fn corrected_log_likelihood(
        &self,
        hierarchy: &ModelHierarchy,
        level: usize,
        output: &DVector<f64>,
    ) -> f64 {
        debug_assert!(level < hierarchy.top_level());
        let residual = output + self.bias.total_mean(level) - &hierarchy.levels[level].data;
        let z = self.combined[level].solve(&residual);
        -0.5 * residual.dot(&z)
    }

    /// Absorb one adjacent-pair observation (fine output at `upper_level`,
    /// coarse output at `upper_level - 1`, same parameter value).
    pub fn observe_pair(
        &mut self,
        hierarchy: &ModelHierarchy,
        upper_level: usize,
        fine_output: &DVector<f64>,
        coarse_output: &DVector<f64>,
    ) {
        if !self.adapting {
            return;
        }
        let b = fine_output - coarse_output;
        self.bias.pairs[upper_level - 1].update(&b);
        self.generation += 1;
        self.refactorize(hierarchy);
    }
}

/// Convenience wrapper: corrected likelihood from a bare bias model, used
/// when inspecting persisted snapshots.
pub fn corrected_log_likelihood(
    hierarchy: &ModelHierarchy,
    level: usize,
    theta: &LevelState,
    bias: &BiasModel,
) -> Result<f64, EvalError> {
    let output = hierarchy.levels[level].forward_output(theta)?;
    let total = bias.total_covariance(level) + hierarchy.levels[level].noise.to_matrix();
    let chol = Cholesky::new(total).expect("bias + noise covariance must stay positive-definite");
    let residual = output + bias.total_mean(level) - &hierarchy.levels[level].data;
    let z = chol.solve(&residual);
    Ok(-0.5 * residual.dot(&z))
}
