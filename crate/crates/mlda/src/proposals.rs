//! Proposal kernels and subchain-length distributions.
//!
//! Coarsest-level kernels (random walk, differential evolution) propose
//! full states; fine-mode kernels propose only the components a level adds
//! over the next-coarser one. Both report the log proposal-density ratio
//! `log q(current | proposed) - log q(proposed | current)` so acceptance
//! computations stay exact for asymmetric kernels and reduce to the plain
//! density ratio for symmetric ones.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::Prior;
use crate::rng::ChainRng;

/// Distribution of coarse-subchain lengths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubchainPmf {
    /// Uniform on {1, ..., max_length}. Consumes one draw.
    Uniform { max_length: usize },
    /// Always `length`. Consumes no randomness.
    Fixed { length: usize },
}

impl SubchainPmf {
    pub fn uniform(max_length: usize) -> Self {
        assert!(max_length >= 1);
        SubchainPmf::Uniform { max_length }
    }

    pub fn fixed(length: usize) -> Self {
        assert!(length >= 1);
        SubchainPmf::Fixed { length }
    }

    pub fn max_length(&self) -> usize {
        match self {
            SubchainPmf::Uniform { max_length } => *max_length,
            SubchainPmf::Fixed { length } => *length,
        }
    }

    pub fn draw(&self, rng: &mut ChainRng) -> usize {
        match self {
            SubchainPmf::Uniform { max_length } => rng.random_range(1..=*max_length),
            SubchainPmf::Fixed { length } => *length,
        }
    }
}

/// Acceptance-rate window targeted by step tuning.
pub const TUNE_TARGET_WINDOW: (f64, f64) = (0.2, 0.5);

/// Multiplicative step-size update: grow when accepting too often, shrink
/// when accepting too rarely, leave alone inside the window. Only called
/// during burn-in; adaptation must stop afterwards so the transition
/// kernel is fixed.
pub fn tune_step(current_scale: f64, observed_acceptance_rate: f64, window: (f64, f64)) -> f64 {
    const FACTOR: f64 = 1.1;
    if observed_acceptance_rate > window.1 {
        current_scale * FACTOR
    } else if observed_acceptance_rate < window.0 {
        current_scale / FACTOR
    } else {
        current_scale
    }
}

/// Full-state proposal kernel for the coarsest level.
pub trait Proposal: Send {
    fn propose(&mut self, current: &DVector<f64>, rng: &mut ChainRng) -> DVector<f64>;

    /// `log q(current | proposed) - log q(proposed | current)`. Zero for
    /// symmetric kernels.
    fn log_q_ratio(&self, _current: &DVector<f64>, _proposed: &DVector<f64>) -> f64 {
        0.0
    }

    /// Observe the outcome of an accept/reject step (archive growth,
    /// acceptance-rate windows).
    fn observe(&mut self, _accepted: bool, _state: &DVector<f64>) {}

    /// Enable or disable step-size tuning. Tuning is off by default and is
    /// only switched on for the burn-in phase.
    fn set_tuning(&mut self, _on: bool) {}
}

/// Isotropic Gaussian random walk with optional burn-in tuning.
pub struct RandomWalkProposal {
    scale: f64,
    tuning: bool,
    window_accepts: usize,
    window_total: usize,
    window_len: usize,
}

impl RandomWalkProposal {
    pub fn new(scale: f64) -> Self {
        assert!(scale > 0.0, "step scale must be positive");
        RandomWalkProposal { scale, tuning: false, window_accepts: 0, window_total: 0, window_len: 100 }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

impl Proposal for RandomWalkProposal {
    fn propose(&mut self, current: &DVector<f64>, rng: &mut ChainRng) -> DVector<f64> {
        DVector::from_iterator(
            current.len(),
            current.iter().map(|&x| {
                let z: f64 = StandardNormal.sample(rng);
                x + self.scale * z
            }),
        )
    }

    fn observe(&mut self, accepted: bool, _state: &DVector<f64>) {
        if !self.tuning {
            return;
        }
        self.window_total += 1;
        if accepted {
            self.window_accepts += 1;
        }
        if self.window_total == self.window_len {
            let rate = self.window_accepts as f64 / self.window_total as f64;
            self.scale = tune_step(self.scale, rate, TUNE_TARGET_WINDOW);
            self.window_total = 0;
            self.window_accepts = 0;
        }
    }

    fn set_tuning(&mut self, on: bool) {
        self.tuning = on;
        self.window_total = 0;
        self.window_accepts = 0;
    }
}

/// Differential-evolution proposal with a growing archive of past states:
/// `psi = theta + gamma (z1 - z2) + jitter`, where `z1 != z2` are drawn
/// uniformly from the archive. Symmetric given the archive, since the pair
/// `(z1, z2)` and its swap are equally likely.
///
/// The archive absorbs the chain's own trajectory, thinned one in ten,
/// whether or not the step was accepted; repeated states contribute zero
/// difference vectors, so a freshly warmed archive behaves like a
/// jitter-only walk until the chain has spread out.
pub struct DemczProposal {
    history: Vec<DVector<f64>>,
    gamma: f64,
    jitter_scale: f64,
    tuning: bool,
    scale: f64,
    window_accepts: usize,
    window_total: usize,
    window_len: usize,
    observed: usize,
    thin: usize,
}

impl DemczProposal {
    /// `gamma = None` uses the standard scaling `2.38 / sqrt(2 R)` for
    /// dimension R.
    pub fn new(dim: usize, gamma: Option<f64>, jitter_scale: f64) -> Self {
        let gamma = gamma.unwrap_or(2.38 / (2.0 * dim as f64).sqrt());
        DemczProposal {
            history: Vec::new(),
            gamma,
            jitter_scale,
            tuning: false,
            scale: 1.0,
            window_accepts: 0,
            window_total: 0,
            window_len: 100,
            observed: 0,
            thin: 10,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Overall step multiplier adjusted by burn-in tuning.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    /// Seed the archive before sampling starts. The proposal needs at
    /// least two archived states to form a difference vector.
    pub fn warm_start(&mut self, states: impl IntoIterator<Item = DVector<f64>>) {
        self.history.extend(states);
    }
}

impl Proposal for DemczProposal {
    fn propose(&mut self, current: &DVector<f64>, rng: &mut ChainRng) -> DVector<f64> {
        assert!(
            self.history.len() >= 2,
            "differential-evolution proposal needs an archive of at least two states"
        );
        let i = rng.random_range(0..self.history.len());
        let mut j = rng.random_range(0..self.history.len() - 1);
        if j >= i {
            j += 1;
        }
        let diff = &self.history[i] - &self.history[j];
        DVector::from_iterator(
            current.len(),
            current.iter().zip(diff.iter()).map(|(&x, &d)| {
                let z: f64 = StandardNormal.sample(rng);
                x + self.scale * (self.gamma * d + self.jitter_scale * z)
            }),
        )
    }

    fn observe(&mut self, accepted: bool, state: &DVector<f64>) {
        self.observed += 1;
        if self.observed % self.thin == 0 {
            self.history.push(state.clone());
        }
        if !self.tuning {
            return;
        }
        self.window_total += 1;
        if accepted {
            self.window_accepts += 1;
        }
        if self.window_total == self.window_len {
            let rate = self.window_accepts as f64 / self.window_total as f64;
            self.scale = tune_step(self.scale, rate, TUNE_TARGET_WINDOW);
            self.window_total = 0;
            self.window_accepts = 0;
        }
    }

    fn set_tuning(&mut self, on: bool) {
        self.tuning = on;
        self.window_total = 0;
        self.window_accepts = 0;
    }
}

/// Kernel over the fine modes a level adds over the next-coarser one.
/// Implementations must leave coarse modes untouched by construction and
/// must consume no randomness when the fine space is empty.
pub trait FineProposal: Send {
    fn dim(&self) -> usize;

    fn propose(&mut self, current_fine: &DVector<f64>, rng: &mut ChainRng) -> DVector<f64>;

    /// `log q(current | proposed) - log q(proposed | current)` over fine
    /// modes only.
    fn log_q_ratio(&self, _current_fine: &DVector<f64>, _proposed_fine: &DVector<f64>) -> f64 {
        0.0
    }
}

/// Independence sampler drawing fine modes from their prior marginal.
/// Guarantees irreducibility over fine modes regardless of the subchain.
pub struct PriorFineProposal {
    marginal: Prior,
}

impl PriorFineProposal {
    pub fn new(marginal: Prior) -> Self {
        PriorFineProposal { marginal }
    }
}

impl FineProposal for PriorFineProposal {
    fn dim(&self) -> usize {
        self.marginal.dim()
    }

    fn propose(&mut self, _current_fine: &DVector<f64>, rng: &mut ChainRng) -> DVector<f64> {
        if self.marginal.dim() == 0 {
            return DVector::zeros(0);
        }
        self.marginal.sample(rng)
    }

    fn log_q_ratio(&self, current_fine: &DVector<f64>, proposed_fine: &DVector<f64>) -> f64 {
        if self.marginal.dim() == 0 {
            return 0.0;
        }
        // q(x | y) = p(x): the ratio is p(current) / p(proposed).
        self.marginal.log_density(current_fine) - self.marginal.log_density(proposed_fine)
    }
}

/// Gaussian random walk over fine modes.
pub struct RandomWalkFineProposal {
    dim: usize,
    scale: f64,
}

impl RandomWalkFineProposal {
    pub fn new(dim: usize, scale: f64) -> Self {
        assert!(scale > 0.0);
        RandomWalkFineProposal { dim, scale }
    }
}

impl FineProposal for RandomWalkFineProposal {
    fn dim(&self) -> usize {
        self.dim
    }

    fn propose(&mut self, current_fine: &DVector<f64>, rng: &mut ChainRng) -> DVector<f64> {
        DVector::from_iterator(
            self.dim,
            current_fine.iter().map(|&x| {
                let z: f64 = StandardNormal.sample(rng);
                x + self.scale * z
            }),
        )
    }
}

/// Keeps fine modes frozen at their current values. Useful for sampling a
/// conditional, and as the trivial kernel on an empty fine space.
pub struct IdentityFineProposal {
    dim: usize,
}

impl IdentityFineProposal {
    pub fn new(dim: usize) -> Self {
        IdentityFineProposal { dim }
    }
}

impl FineProposal for IdentityFineProposal {
    fn dim(&self) -> usize {
        self.dim
    }

    fn propose(&mut self, current_fine: &DVector<f64>, _rng: &mut ChainRng) -> DVector<f64> {
        current_fine.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeed;

    #[test]
    fn subchain_pmf_degenerate_cases() {
        let mut rng = StreamSeed::root(0).rng();
        let single = SubchainPmf::uniform(1);
        let fixed = SubchainPmf::fixed(5);
        for _ in 0..50 {
            assert_eq!(single.draw(&mut rng), 1);
            assert_eq!(fixed.draw(&mut rng), 5);
        }
    }

    #[test]
    fn subchain_pmf_uniform_frequencies() {
        // Chi-square style check: each outcome within 3 sigma of 1/J.
        let j = 10;
        let n = 100_000;
        let pmf = SubchainPmf::uniform(j);
        let mut rng = StreamSeed::root(7).rng();
        let mut counts = vec![0usize; j];
        for _ in 0..n {
            counts[pmf.draw(&mut rng) - 1] += 1;
        }
        let p = 1.0 / j as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        for &c in &counts {
            let freq = c as f64 / n as f64;
            assert!((freq - p).abs() < 3.0 * sigma, "frequency {freq} too far from {p}");
        }
    }

    #[test]
    fn random_walk_mean_is_current_state() {
        let mut rw = RandomWalkProposal::new(0.5);
        let theta = DVector::from_vec(vec![1.0, -2.0]);
        let mut rng = StreamSeed::root(3).rng();
        let n = 100_000;
        let mut sum = DVector::zeros(2);
        for _ in 0..n {
            sum += rw.propose(&theta, &mut rng);
        }
        let mean = sum / n as f64;
        let se = 0.5 / (n as f64).sqrt();
        for k in 0..2 {
            assert!((mean[k] - theta[k]).abs() < 3.0 * se);
        }
    }

    #[test]
    fn random_walk_is_symmetric() {
        let rw = RandomWalkProposal::new(0.5);
        let a = DVector::from_vec(vec![0.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, -1.0]);
        assert_eq!(rw.log_q_ratio(&a, &b), 0.0);
    }

    #[test]
    fn tune_step_direction() {
        assert_eq!(tune_step(1.0, 0.35, TUNE_TARGET_WINDOW), 1.0);
        assert!(tune_step(1.0, 0.05, TUNE_TARGET_WINDOW) < 1.0);
        assert!(tune_step(1.0, 0.90, TUNE_TARGET_WINDOW) > 1.0);
    }

    #[test]
    fn demcz_identical_history_reduces_to_jitter() {
        let mut p = DemczProposal::new(2, None, 1e-3);
        p.warm_start(vec![DVector::from_vec(vec![1.0, 1.0]), DVector::from_vec(vec![1.0, 1.0])]);
        let theta = DVector::from_vec(vec![0.0, 0.0]);
        let mut rng = StreamSeed::root(1).rng();
        let psi = p.propose(&theta, &mut rng);
        for k in 0..2 {
            assert!((psi[k] - theta[k]).abs() < 1e-2, "difference vector should vanish");
        }
    }

    #[test]
    fn demcz_gamma_zero_is_jitter_only_walk() {
        let mut p = DemczProposal::new(2, Some(0.0), 0.1);
        p.warm_start(vec![DVector::from_vec(vec![5.0, 5.0]), DVector::from_vec(vec![-5.0, 3.0])]);
        let theta = DVector::zeros(2);
        let mut rng = StreamSeed::root(2).rng();
        let n = 50_000;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let psi = p.propose(&theta, &mut rng);
            sum2 += psi.norm_squared();
        }
        // Per-component variance should be jitter^2.
        let var = sum2 / (2.0 * n as f64);
        assert!((var - 0.01).abs() < 0.001, "variance {var}");
    }

    #[test]
    fn demcz_default_gamma_and_proposal_variance() {
        // With archive states z ~ N(0, I), the jump gamma (z1 - z2) has
        // per-component variance 2 gamma^2 (plus negligible jitter). The
        // default gamma = 2.38 / sqrt(2 R) therefore gives variance
        // 2.38^2 / R per component.
        let dim = 4;
        let mut p = DemczProposal::new(dim, None, 1e-8);
        assert!((p.gamma() - 2.38 / (2.0 * dim as f64).sqrt()).abs() < 1e-15);

        let mut rng = StreamSeed::root(9).rng();
        let prior = Prior::StandardNormal { dim };
        p.warm_start((0..2000).map(|_| prior.sample(&mut rng)));
        let theta = DVector::zeros(dim);
        let n = 40_000;
        let mut sum2 = 0.0;
        for _ in 0..n {
            sum2 += p.propose(&theta, &mut rng).norm_squared();
        }
        let var = sum2 / ((dim * n) as f64);
        let expect = 2.38 * 2.38 / dim as f64;
        assert!(
            (var - expect).abs() < 0.05 * expect,
            "per-component variance {var}, expected about {expect}"
        );
    }

    #[test]
    #[should_panic]
    fn demcz_requires_two_archived_states() {
        let mut p = DemczProposal::new(1, None, 1e-6);
        p.warm_start(vec![DVector::zeros(1)]);
        let mut rng = StreamSeed::root(0).rng();
        let _ = p.propose(&DVector::zeros(1), &mut rng);
    }

    #[test]
    fn prior_fine_proposal_ratio_matches_densities() {
        let mut q = PriorFineProposal::new(Prior::StandardNormal { dim: 2 });
        let mut rng = StreamSeed::root(4).rng();
        let cur = DVector::from_vec(vec![0.1, 0.2]);
        let prop = q.propose(&cur, &mut rng);
        let expect = -0.5 * cur.norm_squared() + 0.5 * prop.norm_squared();
        assert!((q.log_q_ratio(&cur, &prop) - expect).abs() < 1e-12);
    }

    #[test]
    fn empty_fine_proposal_consumes_no_randomness() {
        let mut q = PriorFineProposal::new(Prior::StandardNormal { dim: 0 });
        let mut rng_a = StreamSeed::root(5).rng();
        let mut rng_b = StreamSeed::root(5).rng();
        let _ = q.propose(&DVector::zeros(0), &mut rng_a);
        use rand::Rng;
        assert_eq!(rng_a.random::<u64>(), rng_b.random::<u64>());
    }
}
