//! Acceptance suite. Each test prints one pass line; run with
//! `cargo test --test acceptance -- --nocapture` to see them.

use std::path::{Path, PathBuf};
use std::process::Command;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use mlda::diagnostics::effective_sample_size;
use mlda::estimator::{mlda_estimate, standard_estimate, MultilevelSamples, QoiSpec, QuantityOfInterest};
use mlda::model::Prior;
use mlda::proposals::{
    FineProposal, IdentityFineProposal, Proposal, RandomWalkProposal, SubchainPmf,
};
use mlda::rng::{mix, ChainRng, StreamSeed};
use mlda::samplers::{da_run, mlda_run, rst_run, tlda_run, FnLevels, MldaConfig};

use mlda_cli::config::Config;
use mlda_cli::experiment;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load_config(name: &str) -> Config {
    let path = configs_dir().join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    Config::from_json(&text).expect("bundled config validates")
}

// ---------------------------------------------------------------------------
// Exact finite-state kernels, built directly from the algorithm definitions.
// Column x holds the distribution of the next state given state x.
// ---------------------------------------------------------------------------

mod kernels {
    use nalgebra::DMatrix;

    /// Metropolis–Hastings kernel for target `pi` and proposal matrix `q`
    /// (`q[(y, x)] = q(y | x)`).
    pub fn mh(pi: &[f64], q: &DMatrix<f64>) -> DMatrix<f64> {
        let n = pi.len();
        let mut k = DMatrix::zeros(n, n);
        for x in 0..n {
            let mut stay = 1.0;
            for y in 0..n {
                if y == x || q[(y, x)] == 0.0 {
                    continue;
                }
                let alpha = (pi[y] * q[(x, y)] / (pi[x] * q[(y, x)])).min(1.0);
                k[(y, x)] = q[(y, x)] * alpha;
                stay -= k[(y, x)];
            }
            k[(x, x)] = stay;
        }
        k
    }

    /// Second accept/reject stage applied to an effective proposal kernel:
    /// `alpha(y | x) = min(1, num(y, x))` with `num` the two-density ratio
    /// (optionally including a proposal-density correction).
    pub fn second_stage(
        proposal: &DMatrix<f64>,
        ratio: impl Fn(usize, usize) -> f64,
    ) -> DMatrix<f64> {
        let n = proposal.nrows();
        let mut k = DMatrix::zeros(n, n);
        for x in 0..n {
            let mut stay = proposal[(x, x)];
            for y in 0..n {
                if y == x {
                    continue;
                }
                let alpha = ratio(y, x).min(1.0);
                k[(y, x)] = proposal[(y, x)] * alpha;
                stay += proposal[(y, x)] * (1.0 - alpha);
            }
            k[(x, x)] = stay;
        }
        k
    }

    /// Uniform mixture of powers `1..=j` of a kernel.
    pub fn power_mixture(k: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
        let n = k.nrows();
        let mut mix = DMatrix::zeros(n, n);
        let mut power = DMatrix::identity(n, n);
        for _ in 0..j {
            power = k * power;
            mix += &power;
        }
        mix / j as f64
    }

    /// Largest violation of `pi(x) K(y|x) = pi(y) K(x|y)`.
    pub fn detailed_balance_violation(pi: &[f64], k: &DMatrix<f64>) -> f64 {
        let n = pi.len();
        let mut worst: f64 = 0.0;
        for x in 0..n {
            for y in 0..n {
                worst = worst.max((pi[x] * k[(y, x)] - pi[y] * k[(x, y)]).abs());
            }
        }
        worst
    }

    /// Columns must sum to one.
    pub fn stochastic_violation(k: &DMatrix<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for x in 0..k.ncols() {
            worst = worst.max((k.column(x).sum() - 1.0).abs());
            for y in 0..k.nrows() {
                worst = worst.max((-k[(y, x)]).max(0.0));
            }
        }
        worst
    }
}

/// Enumerable proposal over 0..n-1 coded as 1-dimensional states: uniform
/// independence draw.
struct UniformStateProposal {
    n: usize,
}

impl Proposal for UniformStateProposal {
    fn propose(&mut self, _current: &DVector<f64>, rng: &mut ChainRng) -> DVector<f64> {
        DVector::from_element(1, rng.random_range(0..self.n) as f64)
    }
}

/// Uniform independence proposal over one fine coordinate with values
/// 0..n-1.
struct UniformFineProposal {
    n: usize,
}

impl FineProposal for UniformFineProposal {
    fn dim(&self) -> usize {
        1
    }

    fn propose(&mut self, _current: &DVector<f64>, rng: &mut ChainRng) -> DVector<f64> {
        DVector::from_element(1, rng.random_range(0..self.n) as f64)
    }
}

/// Non-uniform independence proposal over one fine coordinate; exercises
/// the proposal-density correction of the composite acceptance.
struct WeightedFineProposal {
    weights: Vec<f64>,
}

impl FineProposal for WeightedFineProposal {
    fn dim(&self) -> usize {
        1
    }

    fn propose(&mut self, _current: &DVector<f64>, rng: &mut ChainRng) -> DVector<f64> {
        let u: f64 = rng.random();
        let total: f64 = self.weights.iter().sum();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w / total;
            if u < acc {
                return DVector::from_element(1, i as f64);
            }
        }
        DVector::from_element(1, (self.weights.len() - 1) as f64)
    }

    fn log_q_ratio(&self, current: &DVector<f64>, proposed: &DVector<f64>) -> f64 {
        self.weights[current[0] as usize].ln() - self.weights[proposed[0] as usize].ln()
    }
}

/// Fixed strictly positive toy densities.
const PI0: [f64; 2] = [0.35, 0.65];
const PI1: [f64; 4] = [0.10, 0.30, 0.24, 0.36];
const PI2: [f64; 8] = [0.05, 0.10, 0.07, 0.13, 0.16, 0.09, 0.22, 0.18];
const FINE_WEIGHTS: [f64; 2] = [0.3, 0.7];

fn level1_index(state: &DVector<f64>) -> usize {
    (state[0] as usize) * 2 + state[1] as usize
}

fn level2_index(state: &DVector<f64>) -> usize {
    ((state[0] as usize) * 2 + state[1] as usize) * 2 + state[2] as usize
}

/// Exact level-1 kernel: subchain on the coarse coordinate, weighted
/// independence proposal on the fine coordinate, two-density acceptance
/// with proposal correction.
fn exact_level1_kernel(j1: usize) -> DMatrix<f64> {
    let q0 = DMatrix::from_element(2, 2, 0.5);
    let k0 = kernels::mh(&PI0, &q0);
    // Lift to the 4-state product (c, f): coarse kernel acts on c.
    let mut coarse_lift = DMatrix::zeros(4, 4);
    let mut fine_lift = DMatrix::zeros(4, 4);
    for c in 0..2 {
        for f in 0..2 {
            let x = c * 2 + f;
            for c2 in 0..2 {
                coarse_lift[(c2 * 2 + f, x)] = k0[(c2, c)];
            }
            let total: f64 = FINE_WEIGHTS.iter().sum();
            for f2 in 0..2 {
                fine_lift[(c * 2 + f2, x)] = FINE_WEIGHTS[f2] / total;
            }
        }
    }
    let coarse_mix = kernels::power_mixture(&coarse_lift, j1);
    let proposal = &fine_lift * &coarse_mix;
    kernels::second_stage(&proposal, |y, x| {
        let (cx, fx) = (x / 2, x % 2);
        let (cy, fy) = (y / 2, y % 2);
        // Two-density ratio times the fine-proposal density correction.
        (PI1[y] * PI0[cx] * FINE_WEIGHTS[fx]) / (PI1[x] * PI0[cy] * FINE_WEIGHTS[fy])
    })
}

/// Exact level-2 kernel: level-1 subchains propose the coarse block, a
/// uniform independence kernel proposes the extra fine coordinate.
fn exact_level2_kernel(j1: usize, j2: usize) -> DMatrix<f64> {
    let k1 = exact_level1_kernel(j1);
    let mut k1_lift = DMatrix::zeros(8, 8);
    let mut fine_lift = DMatrix::zeros(8, 8);
    for s in 0..4 {
        for f in 0..2 {
            let x = s * 2 + f;
            for s2 in 0..4 {
                k1_lift[(s2 * 2 + f, x)] = k1[(s2, s)];
            }
            for f2 in 0..2 {
                fine_lift[(s * 2 + f2, x)] = 0.5;
            }
        }
    }
    let mix = kernels::power_mixture(&k1_lift, j2);
    let proposal = &fine_lift * &mix;
    kernels::second_stage(&proposal, |y, x| {
        let sx = x / 2;
        let sy = y / 2;
        (PI2[y] * PI1[sx]) / (PI2[x] * PI1[sy])
    })
}

fn discrete_levels3() -> FnLevels {
    FnLevels::new(
        vec![1, 2, 3],
        vec![
            Box::new(|x: &DVector<f64>| PI0[x[0] as usize].ln()),
            Box::new(|x: &DVector<f64>| PI1[level1_index(x)].ln()),
            Box::new(|x: &DVector<f64>| PI2[level2_index(x)].ln()),
        ],
    )
}

#[test]
fn c01_detailed_balance_oracles() {
    // Metropolis–Hastings on five states with a cyclic proposal.
    let pi5 = [0.1, 0.25, 0.2, 0.3, 0.15];
    let mut q5 = DMatrix::zeros(5, 5);
    for x in 0..5usize {
        q5[((x + 1) % 5, x)] = 0.5;
        q5[((x + 4) % 5, x)] = 0.5;
    }
    let k_mh = kernels::mh(&pi5, &q5);
    let mut worst = kernels::detailed_balance_violation(&pi5, &k_mh);
    assert!(kernels::stochastic_violation(&k_mh) < 1e-12);

    // Delayed acceptance and randomized subchains on a coarse/fine pair
    // over the same five states.
    let pic5 = [0.18, 0.22, 0.15, 0.28, 0.17];
    let k_coarse = kernels::mh(&pic5, &q5);
    let da_proposal = kernels::power_mixture(&k_coarse, 1);
    let k_da = kernels::second_stage(&da_proposal, |y, x| (pi5[y] * pic5[x]) / (pi5[x] * pic5[y]));
    worst = worst.max(kernels::detailed_balance_violation(&pi5, &k_da));

    for j in [2usize, 3] {
        let rst_proposal = kernels::power_mixture(&k_coarse, j);
        let k_rst =
            kernels::second_stage(&rst_proposal, |y, x| (pi5[y] * pic5[x]) / (pi5[x] * pic5[y]));
        worst = worst.max(kernels::detailed_balance_violation(&pi5, &k_rst));
        assert!(kernels::stochastic_violation(&k_rst) < 1e-12);
    }

    // Two-level kernel with embedded states and a non-symmetric fine
    // proposal, then the recursive three-level kernel.
    let k1 = exact_level1_kernel(3);
    worst = worst.max(kernels::detailed_balance_violation(&PI1, &k1));
    assert!(kernels::stochastic_violation(&k1) < 1e-12);

    let k2 = exact_level2_kernel(3, 2);
    worst = worst.max(kernels::detailed_balance_violation(&PI2, &k2));
    assert!(kernels::stochastic_violation(&k2) < 1e-12);

    assert!(worst <= 1e-12, "worst detailed-balance violation {worst}");

    // Tie the implementation to the oracle: empirical transition
    // frequencies of the simulated three-level sampler against the exact
    // kernel.
    let mut levels = discrete_levels3();
    let mut proposal = UniformStateProposal { n: 2 };
    let mut fine: Vec<Box<dyn FineProposal>> = vec![
        Box::new(WeightedFineProposal { weights: FINE_WEIGHTS.to_vec() }),
        Box::new(UniformFineProposal { n: 2 }),
    ];
    let config = MldaConfig {
        subchain: vec![SubchainPmf::uniform(3), SubchainPmf::uniform(2)],
        n_steps: 200_000,
        burn_in: 0,
        seed: 90210,
        estimator_mode: false,
    };
    let theta0 = DVector::from_vec(vec![0.0, 0.0, 0.0]);
    let out = mlda_run(&mut levels, &config, &mut proposal, &mut fine, &theta0, None).unwrap();
    let top = out.records.last().unwrap();
    let mut counts = vec![vec![0u64; 8]; 8];
    let mut from = level2_index(&theta0);
    for state in &top.states {
        let to = level2_index(state);
        counts[from][to] += 1;
        from = to;
    }
    let mut worst_emp: f64 = 0.0;
    for x in 0..8 {
        let visits: u64 = counts[x].iter().sum();
        for y in 0..8 {
            let p = k2[(y, x)];
            let freq = counts[x][y] as f64 / visits as f64;
            let se = (p * (1.0 - p) / visits as f64).sqrt().max(1e-4);
            worst_emp = worst_emp.max((freq - p).abs() / se);
        }
    }
    assert!(worst_emp < 5.0, "empirical kernel off by {worst_emp} standard errors");

    println!(
        "acceptance c01 detailed-balance oracles: PASS (max violation {worst:.2e}, empirical within {worst_emp:.1} se)"
    );
}

#[test]
fn c02_special_case_collapses() {
    let n = 1000;
    let theta0 = DVector::from_vec(vec![0.3, -0.1]);
    let seed = 77;

    let make_pair = || {
        FnLevels::pair(
            2,
            |x: &DVector<f64>| -0.5 * (x[0] - 0.4).powi(2) - 0.5 * x[1].powi(2),
            |x: &DVector<f64>| -0.5 * x.norm_squared() - 0.2 * x[0] * x[1],
        )
    };

    // Delayed acceptance against the fixed-length-one subchain sampler.
    let mut a = make_pair();
    let mut pa = RandomWalkProposal::new(0.7);
    let da = da_run(&mut a, &mut pa, &theta0, n, StreamSeed::root(seed), None).unwrap();
    let mut b = make_pair();
    let mut pb = RandomWalkProposal::new(0.7);
    let rst1 = rst_run(&mut b, &mut pb, SubchainPmf::fixed(1), &theta0, n, StreamSeed::root(seed), None)
        .unwrap();
    for i in 0..n {
        assert_eq!(da.states[i], rst1.states[i], "DA/RST trajectories split at {i}");
        assert_eq!(da.accepted[i], rst1.accepted[i]);
    }

    // Randomized subchains against the two-level sampler with no fine
    // modes.
    let pmf = SubchainPmf::uniform(3);
    let mut c = make_pair();
    let mut pc = RandomWalkProposal::new(0.7);
    let rst = rst_run(&mut c, &mut pc, pmf, &theta0, n, StreamSeed::root(seed), None).unwrap();
    let mut d = make_pair();
    let mut pd = RandomWalkProposal::new(0.7);
    let mut no_fine = IdentityFineProposal::new(0);
    let tlda =
        tlda_run(&mut d, &mut pd, &mut no_fine, pmf, &theta0, n, StreamSeed::root(seed), None).unwrap();
    for i in 0..n {
        assert_eq!(rst.states[i], tlda.states[i], "RST/TLDA trajectories split at {i}");
    }

    // Two-level sampler against the recursive sampler with one level pair,
    // including real fine modes.
    let make_embedded = || {
        FnLevels::new(
            vec![1, 2],
            vec![
                Box::new(|x: &DVector<f64>| -0.5 * (x[0] + 0.2).powi(2)),
                Box::new(|x: &DVector<f64>| -0.5 * x.norm_squared() + 0.1 * x[0] * x[1]),
            ],
        )
    };
    let theta0e = DVector::from_vec(vec![0.1, 0.5]);
    let mut e = make_embedded();
    let mut pe = RandomWalkProposal::new(0.8);
    let mut fine_e = mlda::proposals::RandomWalkFineProposal::new(1, 0.6);
    let tlda2 =
        tlda_run(&mut e, &mut pe, &mut fine_e, pmf, &theta0e, n, StreamSeed::root(seed), None).unwrap();
    let mut f = make_embedded();
    let mut pf = RandomWalkProposal::new(0.8);
    let mut fine_f: Vec<Box<dyn FineProposal>> =
        vec![Box::new(mlda::proposals::RandomWalkFineProposal::new(1, 0.6))];
    let config = MldaConfig {
        subchain: vec![pmf],
        n_steps: n,
        burn_in: 0,
        seed,
        estimator_mode: false,
    };
    let mlda_out = mlda_run(&mut f, &config, &mut pf, &mut fine_f, &theta0e, None).unwrap();
    let top = mlda_out.records.last().unwrap();
    for i in 0..n {
        assert_eq!(tlda2.states[i], top.states[i], "TLDA/MLDA trajectories split at {i}");
    }

    println!("acceptance c02 special-case collapses: PASS (bitwise over {n} steps)");
}

#[test]
fn c03_linear_gaussian_posterior_recovery() {
    // Two-level hierarchy of linear-Gaussian posteriors; the finest has a
    // closed-form mean to recover.
    let dim = 2;
    let noise_sd = 0.5_f64;
    let truth = DVector::from_vec(vec![0.7, -0.4]);
    let data = mlda::problems::perturb_with_noise(&truth, noise_sd, 314);

    // Posterior: precision I + A^T A / sigma^2 with A = I.
    let post_var = 1.0 / (1.0 + 1.0 / (noise_sd * noise_sd));
    let post_mean = &data * (post_var / (noise_sd * noise_sd));

    let coarse_scale = 0.92;
    let data_c = data.clone();
    let data_f = data.clone();
    let var2 = noise_sd * noise_sd;
    let mut levels = FnLevels::new(
        vec![dim, dim],
        vec![
            Box::new(move |x: &DVector<f64>| {
                let r = x * coarse_scale - &data_c;
                -0.5 * r.norm_squared() / var2 - 0.5 * x.norm_squared()
            }),
            Box::new(move |x: &DVector<f64>| {
                let r = x - &data_f;
                -0.5 * r.norm_squared() / var2 - 0.5 * x.norm_squared()
            }),
        ],
    );

    let n = 20_000;
    let mut chains: Vec<Vec<Vec<f64>>> = vec![Vec::new(); dim];
    for chain in 0..2u64 {
        let mut proposal = RandomWalkProposal::new(0.5);
        let mut fine: Vec<Box<dyn FineProposal>> = vec![Box::new(IdentityFineProposal::new(0))];
        let config = MldaConfig {
            subchain: vec![SubchainPmf::uniform(5)],
            n_steps: n,
            burn_in: 2000,
            seed: mix(2718, chain),
            estimator_mode: false,
        };
        let out = mlda_run(&mut levels, &config, &mut proposal, &mut fine, &DVector::zeros(dim), None)
            .unwrap();
        let top = out.records.last().unwrap();
        for d in 0..dim {
            chains[d].push(top.component(d));
        }
    }

    let mut worst_sigma = 0.0f64;
    for d in 0..dim {
        let all: Vec<f64> = chains[d].iter().flatten().copied().collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let sd = mlda::estimator::variance(&all).sqrt();
        let ess = effective_sample_size(&chains[d]).unwrap();
        let se = sd / ess.sqrt();
        let dev = (mean - post_mean[d]).abs() / se;
        worst_sigma = worst_sigma.max(dev);
        assert!(
            dev <= 3.0,
            "component {d}: mean {mean} vs {} ({dev:.2} standard errors)",
            post_mean[d]
        );
    }
    println!(
        "acceptance c03 linear-gaussian posterior recovery: PASS (worst deviation {worst_sigma:.2} se)"
    );
}

#[test]
fn c04_estimator_unbiasedness() {
    // Degenerate hierarchy: both levels are the same density, so the
    // multilevel and single-level estimators share a target and their
    // difference must be statistically zero under the uniform-draw
    // attribution.
    let reps = 20;
    let mut diffs = Vec::with_capacity(reps);
    for rep in 0..reps as u64 {
        let mut levels = FnLevels::pair(
            1,
            |x: &DVector<f64>| -0.5 * x.norm_squared(),
            |x: &DVector<f64>| -0.5 * x.norm_squared(),
        );
        let mut proposal = RandomWalkProposal::new(2.4);
        let mut fine: Vec<Box<dyn FineProposal>> = vec![Box::new(IdentityFineProposal::new(0))];
        let config = MldaConfig {
            subchain: vec![SubchainPmf::uniform(5)],
            n_steps: 2000,
            burn_in: 200,
            seed: mix(55_000, rep),
            estimator_mode: true,
        };
        let qoi = QuantityOfInterest::uniform(QoiSpec::StateComponent(0), 2);
        let out = mlda_run(
            &mut levels,
            &config,
            &mut proposal,
            &mut fine,
            &DVector::zeros(1),
            Some(&qoi),
        )
        .unwrap();
        let samples = MultilevelSamples::from_records(&out.records);
        let ml = mlda_estimate(&samples);
        let single = standard_estimate(&samples.qoi_at_states[1]);
        diffs.push(ml - single);
    }
    let mean = diffs.iter().sum::<f64>() / reps as f64;
    let sd = mlda::estimator::variance(&diffs).sqrt();
    let se = sd / (reps as f64).sqrt();
    assert!(
        mean.abs() <= 3.0 * se,
        "multilevel-minus-single mean {mean} exceeds 3 se ({se})"
    );
    println!(
        "acceptance c04 estimator unbiasedness: PASS (mean difference {mean:.2e}, 3 se = {:.2e})",
        3.0 * se
    );
}

#[test]
fn c05_variance_reduction_direction() {
    // Desk predator-prey study with two subchain levels of length 10. The
    // windows overlap tightly and inference is restricted to the two rate
    // parameters so the levels couple strongly; the multilevel estimator's
    // final error then beats the single-level estimator's in most seeded
    // replications.
    let config_text = r#"{
        "problem": {
            "type": "predator_prey",
            "obs_dt": 0.5, "noise_sd": 2.0, "rel_tol": 1e-8, "abs_tol": 1e-8,
            "truth": { "values": [10.0, 5.0, 3.0, 0.7, 0.2, 1.0] },
            "noise_seed": 1501,
            "infer": ["a", "d"]
        },
        "hierarchy": { "resolutions": [11.0, 11.5, 12.0] },
        "proposals": {
            "coarsest": { "type": "demcz", "gamma": 1.0, "jitter_scale": 0.01, "initial_history": 2 }
        },
        "sampler": {
            "draws": 600, "burn_in": 300, "subchain_lengths": [10, 10],
            "subchain_mode": "uniform", "seed": 150001, "estimator_mode": true,
            "chains": 2, "initial": "prior_mean"
        },
        "estimator": { "qoi": "mean_predators" },
        "aem": { "enabled": false },
        "output": {}
    }"#;
    let config = Config::from_json(config_text).expect("criterion config validates");

    // Long pilot run for the reference expectation.
    let mut long = config.clone();
    long.sampler.draws = 10_000;
    long.sampler.burn_in = 2000;
    let pilot = experiment::build(&long, 987_654, 2).expect("pilot builds");
    let mut pilot_estimates = Vec::new();
    for chain in 0..2 {
        let out = pilot.run_chain(chain).expect("pilot chain runs");
        let samples = MultilevelSamples::from_records(&out.records);
        pilot_estimates.push(mlda_estimate(&samples));
    }
    let reference = pilot_estimates.iter().sum::<f64>() / pilot_estimates.len() as f64;

    let reps = 10;
    let mut wins = 0;
    for rep in 0..reps as u64 {
        let experiment = experiment::build(&config, 10_000 + rep, 2).expect("replication builds");
        let mut ml_sum = 0.0;
        let mut std_sum = 0.0;
        for chain in 0..2 {
            let out = experiment.run_chain(chain).expect("chain runs");
            let samples = MultilevelSamples::from_records(&out.records);
            ml_sum += mlda_estimate(&samples);
            std_sum += standard_estimate(samples.qoi_at_states.last().unwrap());
        }
        let ml_err = (ml_sum / 2.0 - reference).abs();
        let std_err = (std_sum / 2.0 - reference).abs();
        if ml_err <= std_err {
            wins += 1;
        }
    }
    assert!(
        wins * 10 >= reps * 8,
        "multilevel estimator won only {wins}/{reps} replications"
    );
    println!("acceptance c05 variance-reduction direction: PASS ({wins}/{reps} replications)");
}

#[test]
fn c06_aem_effect_direction() {
    let with_aem = load_config("darcy_desk.json");
    let without_aem = load_config("darcy_desk_no_aem.json");

    let run_mean_ess = |config: &Config| -> f64 {
        let experiment = experiment::build(config, config.sampler.seed, 2).expect("builds");
        let outputs: Vec<_> = (0..2).map(|c| experiment.run_chain(c).expect("chain runs")).collect();
        let dim = 8.min(config.hierarchy.kl_modes.unwrap());
        let mut total = 0.0;
        for comp in 0..dim {
            let chains: Vec<Vec<f64>> = outputs
                .iter()
                .map(|o| o.records.last().unwrap().component(comp))
                .collect();
            total += effective_sample_size(&chains).expect("ess");
        }
        total / dim as f64
    };

    let ess_with = run_mean_ess(&with_aem);
    let ess_without = run_mean_ess(&without_aem);
    assert!(
        ess_with >= 1.5 * ess_without,
        "mean ESS with error model {ess_with:.1} vs without {ess_without:.1}: ratio {:.2} < 1.5",
        ess_with / ess_without
    );
    println!(
        "acceptance c06 adaptive-error-model direction: PASS (ESS {ess_with:.1} vs {ess_without:.1}, ratio {:.2})",
        ess_with / ess_without
    );
}

#[test]
fn c07_gravity_efficiency_direction() {
    let tlda_config = load_config("gravity_desk.json");
    let rwmh_config = load_config("gravity_rwmh_desk.json");

    let run_es_per_s = |config: &Config| -> Vec<f64> {
        let experiment = experiment::build(config, config.sampler.seed, 2).expect("builds");
        let start = std::time::Instant::now();
        let outputs: Vec<_> = (0..2).map(|c| experiment.run_chain(c).expect("chain runs")).collect();
        let wall = start.elapsed().as_secs_f64();
        (0..8)
            .map(|comp| {
                let chains: Vec<Vec<f64>> = outputs
                    .iter()
                    .map(|o| o.records.last().unwrap().component(comp))
                    .collect();
                effective_sample_size(&chains).expect("ess") / wall
            })
            .collect()
    };

    let es_tlda = run_es_per_s(&tlda_config);
    let es_rwmh = run_es_per_s(&rwmh_config);
    let wins = es_tlda.iter().zip(&es_rwmh).filter(|(a, b)| a >= b).count();
    assert!(
        wins >= 6,
        "two-level sampler beat the random walk on only {wins}/8 leading coefficients \
         ({es_tlda:?} vs {es_rwmh:?})"
    );
    println!("acceptance c07 efficiency direction: PASS ({wins}/8 coefficients)");
}

#[test]
fn c08_aem_moment_recursion() {
    use mlda::aem::BiasPairModel;
    let dim = 4;
    let n = 1000;
    let mut rng = StreamSeed::root(8086).rng();
    let prior = Prior::StandardNormal { dim };
    let samples: Vec<DVector<f64>> =
        (0..n).map(|_| prior.sample(&mut rng) * 1.7 + DVector::from_element(dim, 0.3)).collect();

    let mut recursive = BiasPairModel::empty(0, dim);
    for b in &samples {
        recursive.update(b);
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

    let mean_err = (&recursive.mean - &mean).amax() / mean.amax();
    let cov_err = (&recursive.covariance - &cov).amax() / cov.amax();
    assert!(mean_err <= 1e-10, "mean relative error {mean_err}");
    assert!(cov_err <= 1e-10, "covariance relative error {cov_err}");
    println!(
        "acceptance c08 moment recursion: PASS (mean err {mean_err:.1e}, cov err {cov_err:.1e})"
    );
}

#[test]
fn c09_numerical_kernels() {
    // Adaptive integrator against the exponential decay closed form.
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
    let out = mlda::ode::integrate_rk45(
        &rhs,
        &[1.0],
        (0.0, 1.0),
        &[1.0],
        &mlda::ode::Rk45Options { rel_tol: 1e-8, abs_tol: 1e-8, max_steps: 100_000 },
    )
    .unwrap();
    let ode_err = (out[0][0] - (-1.0f64).exp()).abs();
    assert!(ode_err <= 1e-6, "integrator error {ode_err}");

    // Pressure solve reproduces the linear head exactly for unit
    // conductivity.
    let mesh = mlda::fem::StructuredMesh::new(17);
    let heads = mlda::fem::solve_darcy(&mesh, &vec![1.0; mesh.num_triangles()]);
    let mut fem_err: f64 = 0.0;
    for idx in 0..mesh.num_nodes() {
        fem_err = fem_err.max((heads[idx] - mesh.node_coords(idx)[0]).abs());
    }
    assert!(fem_err <= 1e-12, "pressure solve error {fem_err}");

    // Field-expansion eigenpairs satisfy the weighted eigenproblem.
    let grid = mlda::field::Grid2::midpoints(10);
    let kernel = mlda::field::CovarianceKernel::Matern32 { variance: 1.0, length_scale: 0.2 };
    let kl = mlda::field::kl_decompose_on_grid(&kernel, &grid, 12).unwrap();
    let cov = mlda::field::covariance_matrix(&kernel, &grid.points());
    let weights = grid.weights();
    let mut kl_err: f64 = 0.0;
    for i in 0..kl.order() {
        let phi = DVector::from(kl.eigenfunctions.column(i).clone_owned());
        let wphi =
            DVector::from_iterator(phi.len(), phi.iter().zip(&weights).map(|(p, w)| p * w));
        kl_err = kl_err.max((&cov * wphi - &phi * kl.eigenvalues[i]).amax());
    }
    assert!(kl_err <= 1e-8, "eigen residual {kl_err}");

    // Quadrature matrix against an independent double-loop oracle.
    let (m, n, depth) = (9, 6, 0.2);
    let a = mlda::problems::assemble_gravity_matrix(m, n, depth);
    let hm = 1.0 / m as f64;
    let hn = 1.0 / n as f64;
    let mut grav_err: f64 = 0.0;
    for iy in 0..n {
        for ix in 0..n {
            for l in 0..m {
                for k in 0..m {
                    let s = [(ix as f64 + 0.5) * hn, (iy as f64 + 0.5) * hn];
                    let t = [(k as f64 + 0.5) * hm, (l as f64 + 0.5) * hm];
                    let r2 = (s[0] - t[0]).powi(2) + (s[1] - t[1]).powi(2) + depth * depth;
                    let expect = (1.0 / (m * m) as f64) * depth / r2.powf(1.5);
                    grav_err = grav_err.max((a[(iy * n + ix, l * m + k)] - expect).abs());
                }
            }
        }
    }
    assert!(grav_err <= 1e-14, "quadrature matrix error {grav_err}");

    println!(
        "acceptance c09 numerical kernels: PASS (ode {ode_err:.1e}, fem {fem_err:.1e}, \
         eigen {kl_err:.1e}, quadrature {grav_err:.1e})"
    );
}

#[test]
fn bundled_configs_validate() {
    let mut count = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            let text = std::fs::read_to_string(&path).unwrap();
            Config::from_json(&text)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 9, "expected the full bundled config set, found {count}");
}

#[test]
fn c10_determinism() {
    let binary = env!("CARGO_BIN_EXE_mlda");
    let out_root = std::env::temp_dir().join(format!("mlda_determinism_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&out_root);
    std::fs::create_dir_all(&out_root).unwrap();

    let run = |config: &str, tag: &str, threads: usize| -> PathBuf {
        let out = out_root.join(tag);
        let status = Command::new(binary)
            .args([
                "run",
                configs_dir().join(config).to_str().unwrap(),
                "--output-dir",
                out.to_str().unwrap(),
                "--threads",
                &threads.to_string(),
            ])
            .status()
            .expect("binary runs");
        assert!(status.success(), "{config} failed");
        out
    };

    // Wall-clock timings are the one legitimately nondeterministic
    // artifact; everything else must match byte for byte.
    let compare = |a: &Path, b: &Path| {
        let mut names: Vec<String> = std::fs::read_dir(a)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n != "timings.json")
            .collect();
        names.sort();
        assert!(!names.is_empty());
        for name in names {
            let x = std::fs::read(a.join(&name)).unwrap();
            let y = std::fs::read(b.join(&name)).unwrap_or_else(|_| panic!("{name} missing"));
            assert_eq!(x, y, "{name} differs between runs");
        }
    };

    let mut checked = 0;
    for config in ["gaussian_smoke.json", "predator_prey_desk.json", "darcy_desk.json", "gravity_desk.json"] {
        let tag = config.trim_end_matches(".json");
        let first = run(config, &format!("{tag}_a"), 1);
        let second = run(config, &format!("{tag}_b"), 2);
        compare(&first, &second);
        checked += 1;
    }
    let _ = std::fs::remove_dir_all(&out_root);
    println!("acceptance c10 determinism: PASS ({checked} configs, independent of thread count)");
}
