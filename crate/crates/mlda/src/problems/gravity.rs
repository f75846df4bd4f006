//! Gravity surveying: recover a subsurface mass density at known depth
//! from the vertical gravitational signal at the surface.
//!
//! The forward map is the midpoint-quadrature discretization of the
//! integral `g(s) = \int d / ||s - t||^3 f(t) dt` over the unit square at
//! depth `d`, a dense linear system. The density field carries a Matérn
//! 3/2 prior realized through a truncated expansion on the finest
//! quadrature grid; coarser levels reuse the same coefficients with the
//! eigenfunctions interpolated to their grids, so the level hierarchy is
//! purely a quadrature-resolution hierarchy.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{BuildError, EvalError};
use crate::field::{kl_decompose_on_grid, CovarianceKernel, Grid2, KlExpansion};
use crate::model::{
    ForwardModel, LevelPartition, ModelHierarchy, NoiseModel, PosteriorLevel, Prior,
};
use crate::proposals::{FineProposal, PriorFineProposal};

/// The quadrature matrix: entry `(i, j)` couples surface collocation
/// midpoint `s_i` (an `n x n` grid) to subsurface quadrature midpoint
/// `t_j` (an `m x m` grid at depth `d`), with weight `1/m^2` and the full
/// three-dimensional distance including the vertical offset.
pub fn assemble_gravity_matrix(m: usize, n: usize, depth: f64) -> DMatrix<f64> {
    assert!(m >= 1 && n >= 1);
    assert!(depth > 0.0);
    let surface = Grid2::midpoints(n).points();
    let subsurface = Grid2::midpoints(m).points();
    let weight = 1.0 / (m * m) as f64;
    DMatrix::from_fn(n * n, m * m, |i, j| {
        let s = surface[i];
        let t = subsurface[j];
        let dist2 = (s[0] - t[0]).powi(2) + (s[1] - t[1]).powi(2) + depth * depth;
        weight * depth / dist2.powf(1.5)
    })
}

struct GravityForward {
    matrix: DMatrix<f64>,
    kl: KlExpansion,
}

impl ForwardModel for GravityForward {
    fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, theta: &DVector<f64>) -> Result<DVector<f64>, EvalError> {
        Ok(&self.matrix * self.kl.realize(theta))
    }
}

/// Problem definition; `quadrature_m` lists the levels coarsest first.
#[derive(Clone, Debug)]
pub struct GravityProblem {
    pub depth: f64,
    pub collocation_n: usize,
    pub quadrature_m: Vec<usize>,
    pub kl_modes: usize,
    pub kernel: CovarianceKernel,
    pub noise_sd: f64,
}

impl GravityProblem {
    /// The configuration of the full-size survey study: depth 0.1, a
    /// 100 x 100 signal, levels with 20 and 100 quadrature points per
    /// direction, and 32 Matérn modes with length scale 0.2.
    pub fn paper_scale() -> Self {
        GravityProblem {
            depth: 0.1,
            collocation_n: 100,
            quadrature_m: vec![20, 100],
            kl_modes: 32,
            kernel: CovarianceKernel::Matern32 { variance: 1.0, length_scale: 0.2 },
            noise_sd: 0.1,
        }
    }

    /// A desk-size variant that keeps the structure but runs in seconds.
    pub fn desk_scale() -> Self {
        GravityProblem {
            depth: 0.1,
            collocation_n: 20,
            quadrature_m: vec![10, 40],
            kl_modes: 8,
            kernel: CovarianceKernel::Matern32 { variance: 1.0, length_scale: 0.2 },
            noise_sd: 0.1,
        }
    }

    pub fn num_levels(&self) -> usize {
        self.quadrature_m.len()
    }

    /// Expansion on the finest quadrature grid; coarser levels project it.
    pub fn fine_expansion(&self) -> Result<KlExpansion, BuildError> {
        let fine_m = *self.quadrature_m.last().unwrap();
        kl_decompose_on_grid(&self.kernel, &Grid2::midpoints(fine_m), self.kl_modes)
    }

    /// Build the hierarchy against an observed signal.
    pub fn hierarchy(&self, data: DVector<f64>) -> Result<ModelHierarchy, BuildError> {
        assert!(
            self.quadrature_m.windows(2).all(|w| w[0] < w[1]),
            "quadrature resolutions must increase across levels"
        );
        let n_obs = self.collocation_n * self.collocation_n;
        assert_eq!(data.len(), n_obs, "data length must be n^2");
        let kl_fine = self.fine_expansion()?;

        let mut levels = Vec::with_capacity(self.num_levels());
        for (idx, &m) in self.quadrature_m.iter().enumerate() {
            let kl = if idx + 1 == self.num_levels() {
                kl_fine.clone()
            } else {
                kl_fine.project_to_grid(&Grid2::midpoints(m))
            };
            let forward = GravityForward {
                matrix: assemble_gravity_matrix(m, self.collocation_n, self.depth),
                kl,
            };
            levels.push(PosteriorLevel::new(
                Box::new(forward),
                data.clone(),
                NoiseModel::isotropic(n_obs, self.noise_sd),
                Prior::StandardNormal { dim: self.kl_modes },
            ));
        }
        let partition = LevelPartition::new(vec![self.kl_modes; self.num_levels()]);
        Ok(ModelHierarchy::new(levels, partition))
    }

    /// Noiseless signal of the finest level for a coefficient vector.
    pub fn forward(&self, hierarchy: &ModelHierarchy, theta: &DVector<f64>) -> DVector<f64> {
        let state = crate::model::LevelState::new(hierarchy.top_level(), theta.clone());
        hierarchy.levels[hierarchy.top_level()].forward_output(&state).expect("linear map cannot fail")
    }

    /// Synthetic observed signal: finest forward output of `theta_star`
    /// plus seeded white noise.
    pub fn synthetic_data(&self, theta_star: &DVector<f64>, noise_seed: u64) -> Result<DVector<f64>, BuildError> {
        let fine_m = *self.quadrature_m.last().unwrap();
        let kl = self.fine_expansion()?;
        let matrix = assemble_gravity_matrix(fine_m, self.collocation_n, self.depth);
        let clean = &matrix * kl.realize(theta_star);
        Ok(super::perturb_with_noise(&clean, self.noise_sd, noise_seed))
    }

    /// Levels share the whole coefficient vector, so fine proposals are
    /// empty at every level pair.
    pub fn fine_proposals(&self) -> Vec<Box<dyn FineProposal>> {
        (1..self.num_levels())
            .map(|_| Box::new(PriorFineProposal::new(Prior::StandardNormal { dim: 0 })) as Box<dyn FineProposal>)
            .collect()
    }

    pub fn hierarchy_arc(&self, data: DVector<f64>) -> Result<Arc<ModelHierarchy>, BuildError> {
        Ok(Arc::new(self.hierarchy(data)?))
    }
}
