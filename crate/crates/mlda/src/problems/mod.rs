//! Benchmark inverse problems: gravity surveying, predator–prey dynamics,
//! and subsurface Darcy flow. Each builds a model hierarchy whose levels
//! share one parameter vector (no extra fine modes), coarser levels being
//! cheaper approximations of the finest forward map.

mod darcy;
mod gravity;
mod predator_prey;

pub use darcy::DarcyProblem;
pub use gravity::{assemble_gravity_matrix, GravityProblem};
pub use predator_prey::PredatorPreyProblem;

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

use crate::rng::StreamSeed;

/// Finest-level forward output perturbed by seeded white noise of the
/// given standard deviation.
pub fn perturb_with_noise(output: &DVector<f64>, noise_sd: f64, noise_seed: u64) -> DVector<f64> {
    let mut rng = StreamSeed::root(noise_seed).rng();
    DVector::from_iterator(
        output.len(),
        output.iter().map(|&v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + noise_sd * z
        }),
    )
}
