//! Predator–prey inference: fit the Lotka–Volterra system to noisy
//! population observations. Coarser levels integrate over a shorter prefix
//! of the time window and use the matching prefix of the data, so the
//! state (initial densities and rate constants) is identical at every
//! level.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::EvalError;
use crate::estimator::{QoiSpec, QuantityOfInterest};
use crate::model::{
    ForwardModel, LevelPartition, Marginal, ModelHierarchy, NoiseModel, PosteriorLevel, Prior,
};
use crate::ode::{integrate_rk45, Rk45Options};
use crate::proposals::{FineProposal, PriorFineProposal};

/// Parameter layout: `(N0, P0, a, b, c, d)` — initial prey and predator
/// densities, prey birth rate, encounter rate, predator growth rate,
/// predator death rate.
pub const PARAM_DIM: usize = 6;

fn lotka_volterra(params: &DVector<f64>) -> impl Fn(f64, &[f64], &mut [f64]) + '_ {
    let (a, b, c, d) = (params[2], params[3], params[4], params[5]);
    move |_t: f64, y: &[f64], dy: &mut [f64]| {
        dy[0] = a * y[0] - b * y[0] * y[1];
        dy[1] = c * y[0] * y[1] - d * y[1];
    }
}

struct PredatorPreyForward {
    obs_times: Vec<f64>,
    t_end: f64,
    opts: Rk45Options,
    free: Vec<usize>,
    pinned: DVector<f64>,
}

impl PredatorPreyForward {
    fn full_parameters(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut full = self.pinned.clone();
        for (slot, &index) in self.free.iter().enumerate() {
            full[index] = theta[slot];
        }
        full
    }
}

impl ForwardModel for PredatorPreyForward {
    fn output_dim(&self) -> usize {
        2 * self.obs_times.len()
    }

    fn apply(&self, theta: &DVector<f64>) -> Result<DVector<f64>, EvalError> {
        assert_eq!(theta.len(), self.free.len());
        let theta = self.full_parameters(theta);
        let y0 = [theta[0], theta[1]];
        let rhs = lotka_volterra(&theta);
        let trajectory = integrate_rk45(&rhs, &y0, (0.0, self.t_end), &self.obs_times, &self.opts)
            .map_err(|e| EvalError::ForwardFailed(e.to_string()))?;
        // Interleaved (prey, predator) per time, so a shorter window's
        // output is a strict prefix of a longer one's.
        let mut out = DVector::zeros(2 * trajectory.len());
        for (i, y) in trajectory.iter().enumerate() {
            out[2 * i] = y[0];
            out[2 * i + 1] = y[1];
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct PredatorPreyProblem {
    /// Integration window end per level, coarsest first.
    pub windows: Vec<f64>,
    /// Observation spacing; observations sit at `dt, 2 dt, ...` within
    /// each level's window.
    pub obs_dt: f64,
    pub noise_sd: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Indices of the parameters being inferred; the rest stay pinned at
    /// `pinned`. Defaults to all six.
    pub free: Vec<usize>,
    /// Full parameter vector supplying the pinned components.
    pub pinned: DVector<f64>,
}

impl PredatorPreyProblem {
    /// Full three-level study: windows `[0,4]`, `[0,8]`, `[0,12]`, unit
    /// observation noise.
    pub fn paper_scale() -> Self {
        PredatorPreyProblem {
            windows: vec![4.0, 8.0, 12.0],
            obs_dt: 0.5,
            noise_sd: 1.0,
            rel_tol: 1e-8,
            abs_tol: 1e-8,
            free: (0..PARAM_DIM).collect(),
            pinned: Self::true_parameters(),
        }
    }

    /// Shortened variant with the same window structure.
    pub fn desk_scale() -> Self {
        PredatorPreyProblem { free: (0..PARAM_DIM).collect(), ..Self::paper_scale() }
    }

    /// Restrict inference to a subset of parameters, pinning the others.
    pub fn with_free_parameters(mut self, free: Vec<usize>) -> Self {
        assert!(!free.is_empty() && free.iter().all(|&i| i < PARAM_DIM));
        self.free = free;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.free.len()
    }

    /// The parameters the synthetic data is generated from.
    pub fn true_parameters() -> DVector<f64> {
        DVector::from_vec(vec![10.0, 5.0, 3.0, 0.7, 0.2, 1.0])
    }

    pub fn full_prior() -> Prior {
        Prior::Independent(vec![
            Marginal::Normal { mean: 10.8, std_dev: 1.0 },
            Marginal::Normal { mean: 5.3, std_dev: 1.0 },
            Marginal::Normal { mean: 2.5, std_dev: 0.5 },
            Marginal::InvGamma { shape: 1.0, scale: 0.5 },
            Marginal::InvGamma { shape: 1.0, scale: 0.5 },
            Marginal::Normal { mean: 1.2, std_dev: 0.3 },
        ])
    }

    /// Prior over the inferred parameters.
    pub fn prior(&self) -> Prior {
        let Prior::Independent(all) = Self::full_prior() else { unreachable!() };
        Prior::Independent(self.free.iter().map(|&i| all[i].clone()).collect())
    }

    pub fn num_levels(&self) -> usize {
        self.windows.len()
    }

    pub fn obs_times(&self, level: usize) -> Vec<f64> {
        let t_end = self.windows[level];
        let count = (t_end / self.obs_dt + 1e-9).floor() as usize;
        (1..=count).map(|i| i as f64 * self.obs_dt).collect()
    }

    fn forward_model(&self, level: usize) -> PredatorPreyForward {
        PredatorPreyForward {
            obs_times: self.obs_times(level),
            t_end: self.windows[level],
            opts: Rk45Options { rel_tol: self.rel_tol, abs_tol: self.abs_tol, max_steps: 100_000 },
            free: self.free.clone(),
            pinned: self.pinned.clone(),
        }
    }

    /// Stacked (prey, predator) trajectory at the level's observation
    /// times.
    pub fn forward(&self, theta: &DVector<f64>, level: usize) -> Result<DVector<f64>, EvalError> {
        self.forward_model(level).apply(theta)
    }

    /// Finest-window trajectory of the full parameter vector `theta_star`
    /// plus seeded noise per observation.
    pub fn synthetic_data(&self, theta_star: &DVector<f64>, noise_seed: u64) -> Result<DVector<f64>, EvalError> {
        assert_eq!(theta_star.len(), PARAM_DIM, "synthetic data needs the full parameter vector");
        let free_part = DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| theta_star[i]));
        let clean = self.forward(&free_part, self.num_levels() - 1)?;
        Ok(super::perturb_with_noise(&clean, self.noise_sd, noise_seed))
    }

    /// Hierarchy against a finest-window data vector; each level keeps the
    /// matching prefix of the data.
    pub fn hierarchy(&self, fine_data: &DVector<f64>) -> ModelHierarchy {
        assert!(
            self.windows.windows(2).all(|w| w[0] < w[1]),
            "windows must grow across levels"
        );
        let fine_len = 2 * self.obs_times(self.num_levels() - 1).len();
        assert_eq!(fine_data.len(), fine_len, "data length must match the finest window");

        let levels = (0..self.num_levels())
            .map(|l| {
                let forward = self.forward_model(l);
                let n_obs = forward.output_dim();
                let data = DVector::from(fine_data.rows(0, n_obs).clone_owned());
                PosteriorLevel::new(
                    Box::new(forward),
                    data,
                    NoiseModel::isotropic(n_obs, self.noise_sd),
                    self.prior(),
                )
            })
            .collect();
        ModelHierarchy::new(levels, LevelPartition::new(vec![self.state_dim(); self.num_levels()]))
    }

    pub fn hierarchy_arc(&self, fine_data: &DVector<f64>) -> Arc<ModelHierarchy> {
        Arc::new(self.hierarchy(fine_data))
    }

    /// Mean predator density over each level's window: the strided mean
    /// over the predator entries of the stacked output.
    pub fn mean_predator_qoi(&self) -> QuantityOfInterest {
        QuantityOfInterest::per_level(
            (0..self.num_levels())
                .map(|l| QoiSpec::ForwardStridedMean { offset: 1, stride: 2, count: self.obs_times(l).len() })
                .collect(),
        )
    }

    pub fn fine_proposals(&self) -> Vec<Box<dyn FineProposal>> {
        (1..self.num_levels())
            .map(|_| {
                Box::new(PriorFineProposal::new(Prior::Independent(Vec::new()))) as Box<dyn FineProposal>
            })
            .collect()
    }
}
