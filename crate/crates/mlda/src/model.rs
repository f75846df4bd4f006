//! Parameter-space embedding and level-indexed posterior densities.
//!
//! A hierarchy is an ordered list of increasingly accurate (and expensive)
//! posterior densities over embedded parameter spaces: the state at level
//! `l` is a prefix of the state at level `l + 1`. The extra trailing
//! components of the finer state are its *fine modes*; the shared prefix
//! holds the *coarse modes*.
//!
//! All densities are handled as unnormalized log-densities. Acceptance
//! ratios downstream are formed as differences of these values, so any
//! additive constant (evidence, prior normalization) cancels.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::EvalError;
use crate::rng::ChainRng;

/// State dimensions per level. Non-decreasing: the coarse state is a
/// prefix of the fine state.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelPartition {
    dims: Vec<usize>,
}

impl LevelPartition {
    /// Panics if `dims` is empty, contains a zero, or decreases.
    pub fn new(dims: Vec<usize>) -> Self {
        assert!(!dims.is_empty(), "partition needs at least one level");
        assert!(dims.iter().all(|&d| d > 0), "level dimensions must be positive");
        assert!(
            dims.windows(2).all(|w| w[0] <= w[1]),
            "level dimensions must be non-decreasing, got {dims:?}"
        );
        LevelPartition { dims }
    }

    pub fn num_levels(&self) -> usize {
        self.dims.len()
    }

    /// Index of the finest level.
    pub fn top_level(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn dim(&self, level: usize) -> usize {
        self.dims[level]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of fine modes introduced at `level` relative to `level - 1`.
    pub fn fine_dim(&self, level: usize) -> usize {
        assert!(level >= 1, "level 0 has no coarse/fine split");
        self.dims[level] - self.dims[level - 1]
    }
}

/// A parameter vector tagged with its level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelState {
    pub level: usize,
    pub values: DVector<f64>,
}

impl LevelState {
    pub fn new(level: usize, values: DVector<f64>) -> Self {
        LevelState { level, values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Split a state into its fine modes and the embedded coarse state.
///
/// The coarse modes are exactly the first `dims[level - 1]` components;
/// the fine modes are whatever remains (possibly nothing, when adjacent
/// levels share a dimension). Panics at level 0.
pub fn split_state(partition: &LevelPartition, theta: &LevelState) -> (DVector<f64>, LevelState) {
    assert!(theta.level >= 1, "cannot split a level-0 state");
    assert_eq!(theta.dim(), partition.dim(theta.level), "state/partition dimension mismatch");
    let coarse_dim = partition.dim(theta.level - 1);
    let coarse = DVector::from(theta.values.rows(0, coarse_dim).clone_owned());
    let fine = DVector::from(theta.values.rows(coarse_dim, theta.dim() - coarse_dim).clone_owned());
    (fine, LevelState::new(theta.level - 1, coarse))
}

/// Inverse of [`split_state`]: prepend the coarse modes to the fine modes.
pub fn join_state(fine: &DVector<f64>, coarse: &LevelState) -> LevelState {
    let mut values = DVector::zeros(coarse.dim() + fine.len());
    values.rows_mut(0, coarse.dim()).copy_from(&coarse.values);
    values.rows_mut(coarse.dim(), fine.len()).copy_from(fine);
    LevelState::new(coarse.level + 1, values)
}

/// A deterministic map from parameters to model outputs.
pub trait ForwardModel: Send + Sync {
    fn output_dim(&self) -> usize;
    fn apply(&self, theta: &DVector<f64>) -> Result<DVector<f64>, EvalError>;
}

/// Forward model defined by a closure; handy in tests and toy problems.
pub struct FnForward<F> {
    pub output_dim: usize,
    pub f: F,
}

impl<F> ForwardModel for FnForward<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn apply(&self, theta: &DVector<f64>) -> Result<DVector<f64>, EvalError> {
        Ok((self.f)(theta))
    }
}

/// Observation-noise covariance with its factorization cached at
/// construction, so every likelihood evaluation reuses it.
#[derive(Clone, Debug)]
pub enum NoiseModel {
    /// `sigma^2 I`.
    Isotropic { dim: usize, variance: f64 },
    /// Dense symmetric positive-definite covariance.
    Full { cholesky: Cholesky<f64, Dyn> },
}

impl NoiseModel {
    pub fn isotropic(dim: usize, std_dev: f64) -> Self {
        assert!(std_dev > 0.0, "noise standard deviation must be positive");
        NoiseModel::Isotropic { dim, variance: std_dev * std_dev }
    }

    pub fn full(covariance: DMatrix<f64>) -> Self {
        assert_eq!(covariance.nrows(), covariance.ncols());
        let cholesky = Cholesky::new(covariance).expect("noise covariance must be positive-definite");
        NoiseModel::Full { cholesky }
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseModel::Isotropic { dim, .. } => *dim,
            NoiseModel::Full { cholesky } => cholesky.l_dirty().nrows(),
        }
    }

    /// Quadratic form `r^T Sigma^-1 r`.
    pub fn mahalanobis_squared(&self, residual: &DVector<f64>) -> f64 {
        assert_eq!(residual.len(), self.dim(), "residual/noise dimension mismatch");
        match self {
            NoiseModel::Isotropic { variance, .. } => residual.norm_squared() / variance,
            NoiseModel::Full { cholesky } => {
                let z = cholesky.solve(residual);
                residual.dot(&z)
            }
        }
    }

    /// Dense covariance matrix (used when combining with a bias model).
    pub fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            NoiseModel::Isotropic { dim, variance } => DMatrix::identity(*dim, *dim) * *variance,
            NoiseModel::Full { cholesky } => {
                let l = cholesky.l();
                &l * l.transpose()
            }
        }
    }
}

/// One marginal of an independent-components prior.
#[derive(Clone, Debug)]
pub enum Marginal {
    Normal { mean: f64, std_dev: f64 },
    /// Inverse gamma with density `~ x^(-shape-1) exp(-scale/x)` on x > 0.
    /// Log-density is minus infinity at non-positive values, so proposals
    /// there are rejected automatically.
    InvGamma { shape: f64, scale: f64 },
}

impl Marginal {
    pub fn log_density(&self, x: f64) -> f64 {
        match self {
            Marginal::Normal { mean, std_dev } => {
                let z = (x - mean) / std_dev;
                -0.5 * z * z - std_dev.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            Marginal::InvGamma { shape, scale } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape * scale.ln() - ln_gamma(*shape) - (shape + 1.0) * x.ln() - scale / x
            }
        }
    }

    pub fn sample(&self, rng: &mut ChainRng) -> f64 {
        match self {
            Marginal::Normal { mean, std_dev } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std_dev * z
            }
            Marginal::InvGamma { shape, scale } => {
                // If G ~ Gamma(shape, rate = scale) then 1/G ~ InvGamma(shape, scale).
                let g = Gamma::new(*shape, 1.0 / *scale).expect("invalid inverse-gamma parameters");
                1.0 / g.sample(rng)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Marginal::Normal { mean, .. } => *mean,
            Marginal::InvGamma { shape, scale } => {
                if *shape > 1.0 {
                    scale / (shape - 1.0)
                } else {
                    // Mean undefined; the mode is a reasonable stand-in for
                    // filling unobserved fine modes.
                    scale / (shape + 1.0)
                }
            }
        }
    }
}

/// Prior distribution over a level's full state vector.
#[derive(Clone, Debug)]
pub enum Prior {
    /// Independent standard normals (KL coefficients).
    StandardNormal { dim: usize },
    /// Independent, possibly heterogeneous marginals.
    Independent(Vec<Marginal>),
    /// Improper flat prior; log-density 0 everywhere. Not sampleable.
    Flat { dim: usize },
}

impl Prior {
    pub fn dim(&self) -> usize {
        match self {
            Prior::StandardNormal { dim } => *dim,
            Prior::Independent(ms) => ms.len(),
            Prior::Flat { dim } => *dim,
        }
    }

    pub fn log_density(&self, theta: &DVector<f64>) -> f64 {
        assert_eq!(theta.len(), self.dim(), "state/prior dimension mismatch");
        match self {
            Prior::StandardNormal { dim } => {
                -0.5 * theta.norm_squared() - 0.5 * (*dim as f64) * (2.0 * std::f64::consts::PI).ln()
            }
            Prior::Independent(ms) => ms.iter().zip(theta.iter()).map(|(m, &x)| m.log_density(x)).sum(),
            Prior::Flat { .. } => 0.0,
        }
    }

    pub fn sample(&self, rng: &mut ChainRng) -> DVector<f64> {
        match self {
            Prior::StandardNormal { dim } => {
                DVector::from_iterator(*dim, (0..*dim).map(|_| StandardNormal.sample(rng)))
            }
            Prior::Independent(ms) => DVector::from_iterator(ms.len(), ms.iter().map(|m| m.sample(rng))),
            Prior::Flat { .. } => panic!("flat prior cannot be sampled"),
        }
    }

    /// Marginal prior over a contiguous block of components.
    pub fn slice(&self, offset: usize, len: usize) -> Prior {
        assert!(offset + len <= self.dim());
        match self {
            Prior::StandardNormal { .. } => Prior::StandardNormal { dim: len },
            Prior::Independent(ms) => Prior::Independent(ms[offset..offset + len].to_vec()),
            Prior::Flat { .. } => Prior::Flat { dim: len },
        }
    }

    /// Component-wise mean (used to embed coarse states into finer spaces).
    pub fn mean(&self) -> DVector<f64> {
        match self {
            Prior::StandardNormal { dim } => DVector::zeros(*dim),
            Prior::Independent(ms) => DVector::from_iterator(ms.len(), ms.iter().map(|m| m.mean())),
            Prior::Flat { dim } => DVector::zeros(*dim),
        }
    }
}

/// Lanczos approximation of `ln Gamma(x)` for x > 0.
fn ln_gamma(x: f64) -> f64 {
    // g = 7, n = 9 coefficients.
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return pi.ln() - (pi * x).sin().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// One level of the hierarchy: forward map, data, noise and prior.
pub struct PosteriorLevel {
    pub forward: Box<dyn ForwardModel>,
    pub data: DVector<f64>,
    pub noise: NoiseModel,
    pub prior: Prior,
}

impl PosteriorLevel {
    pub fn new(forward: Box<dyn ForwardModel>, data: DVector<f64>, noise: NoiseModel, prior: Prior) -> Self {
        assert_eq!(noise.dim(), data.len(), "noise covariance dimension must match data length");
        assert_eq!(
            forward.output_dim(),
            data.len(),
            "forward output length must match data length"
        );
        PosteriorLevel { forward, data, noise, prior }
    }

    pub fn state_dim(&self) -> usize {
        self.prior.dim()
    }

    /// Run the forward model, rejecting non-finite outputs.
    pub fn forward_output(&self, theta: &LevelState) -> Result<DVector<f64>, EvalError> {
        assert_eq!(theta.dim(), self.state_dim(), "state dimension does not match level");
        let out = self.forward.apply(&theta.values)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite { state: theta.values.iter().copied().collect() });
        }
        Ok(out)
    }

    /// `-1/2 (F(theta) - d)^T Sigma_eps^-1 (F(theta) - d)`, computed in log
    /// space throughout.
    pub fn log_likelihood(&self, theta: &LevelState) -> Result<f64, EvalError> {
        let out = self.forward_output(theta)?;
        Ok(self.log_likelihood_of_output(&out))
    }

    /// Likelihood of an already-computed forward output.
    pub fn log_likelihood_of_output(&self, output: &DVector<f64>) -> f64 {
        let residual = output - &self.data;
        -0.5 * self.noise.mahalanobis_squared(&residual)
    }

    /// Unnormalized log-posterior: log-likelihood plus prior log-density.
    pub fn log_posterior(&self, theta: &LevelState) -> Result<f64, EvalError> {
        Ok(self.log_likelihood(theta)? + self.prior.log_density(&theta.values))
    }
}

/// Ordered levels 0..=L sharing a nested parameter embedding.
pub struct ModelHierarchy {
    pub levels: Vec<PosteriorLevel>,
    pub partition: LevelPartition,
}

impl ModelHierarchy {
    pub fn new(levels: Vec<PosteriorLevel>, partition: LevelPartition) -> Self {
        assert_eq!(levels.len(), partition.num_levels(), "one posterior per level");
        for (l, level) in levels.iter().enumerate() {
            assert_eq!(
                level.state_dim(),
                partition.dim(l),
                "level {l} state dimension does not match partition"
            );
        }
        ModelHierarchy { levels, partition }
    }

    pub fn top_level(&self) -> usize {
        self.partition.top_level()
    }

    pub fn level(&self, l: usize) -> &PosteriorLevel {
        &self.levels[l]
    }
}
