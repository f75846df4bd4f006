//! Posterior-expectation estimators over multilevel chain output.
//!
//! The single-level estimator is the plain sample mean of a quantity of
//! interest over the finest chain. The multilevel estimator rewrites the
//! same expectation as a telescoping sum: the coarsest-level mean plus a
//! correction per level pair, each correction estimated from quantities
//! evaluated at subchain states and at the coarse proposals attributed to
//! fine-level iterations. Corrections are strongly correlated differences,
//! so their variance is far below the variance of the quantity itself.

use nalgebra::DVector;

use crate::samplers::ChainRecord;

/// How to evaluate a scalar quantity of interest at one level.
#[derive(Clone, Debug, PartialEq)]
pub enum QoiSpec {
    /// A single component of the state vector.
    StateComponent(usize),
    /// Mean of a contiguous block of the forward-model output.
    ForwardMean { offset: usize, len: usize },
    /// Mean of every `stride`-th forward output starting at `offset`.
    ForwardStridedMean { offset: usize, stride: usize, count: usize },
}

impl QoiSpec {
    pub fn evaluate(&self, state: &DVector<f64>, forward: Option<&DVector<f64>>) -> f64 {
        match self {
            QoiSpec::StateComponent(i) => state[*i],
            QoiSpec::ForwardMean { offset, len } => {
                let out = forward.expect("forward-output quantity of interest needs a forward evaluation");
                assert!(offset + len <= out.len(), "quantity-of-interest block out of range");
                out.rows(*offset, *len).sum() / *len as f64
            }
            QoiSpec::ForwardStridedMean { offset, stride, count } => {
                let out = forward.expect("forward-output quantity of interest needs a forward evaluation");
                assert!(offset + (count - 1) * stride < out.len(), "quantity-of-interest block out of range");
                (0..*count).map(|i| out[offset + i * stride]).sum::<f64>() / *count as f64
            }
        }
    }
}

/// A quantity of interest defined on every level of a hierarchy.
#[derive(Clone, Debug)]
pub struct QuantityOfInterest {
    specs: Vec<QoiSpec>,
}

impl QuantityOfInterest {
    pub fn per_level(specs: Vec<QoiSpec>) -> Self {
        assert!(!specs.is_empty());
        QuantityOfInterest { specs }
    }

    /// The same evaluator at every level.
    pub fn uniform(spec: QoiSpec, num_levels: usize) -> Self {
        QuantityOfInterest { specs: vec![spec; num_levels] }
    }

    pub fn num_levels(&self) -> usize {
        self.specs.len()
    }

    pub fn evaluate(&self, level: usize, state: &DVector<f64>, forward: Option<&DVector<f64>>) -> f64 {
        self.specs[level].evaluate(state, forward)
    }
}

/// Per-level sample material for the multilevel estimator.
///
/// `qoi_at_states[l]` holds the quantity evaluated at every recorded state
/// of level `l`; `qoi_at_proposals[l]` (for `l < L`) holds it at the
/// level-`l` proposals attributed to the level-`l+1` iterations. With fixed
/// subchain lengths `J_1..J_L`, the counts obey
/// `N_l = N * J_{l+1} * ... * J_L`.
#[derive(Clone, Debug, Default)]
pub struct MultilevelSamples {
    pub qoi_at_states: Vec<Vec<f64>>,
    pub qoi_at_proposals: Vec<Vec<f64>>,
}

impl MultilevelSamples {
    /// Extract estimator material from per-level chain records.
    pub fn from_records(records: &[ChainRecord]) -> Self {
        let top = records.len() - 1;
        let qoi_at_states = records.iter().map(|r| r.qois.clone()).collect();
        let qoi_at_proposals = (0..top).map(|l| records[l + 1].coarse_proposal_qois.clone()).collect();
        MultilevelSamples { qoi_at_states, qoi_at_proposals }
    }

    pub fn num_levels(&self) -> usize {
        self.qoi_at_states.len()
    }

    /// Panics if the attributed-proposal counts do not line up with the
    /// next-finer level, naming the offending level.
    pub fn validate(&self) {
        for l in 0..self.num_levels() - 1 {
            assert_eq!(
                self.qoi_at_proposals[l].len(),
                self.qoi_at_states[l + 1].len(),
                "level {l}: proposal count must match level {} sample count",
                l + 1
            );
        }
    }
}

/// Kahan-compensated sum.
fn kahan_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

fn kahan_mean(values: &[f64]) -> f64 {
    kahan_sum(values) / values.len() as f64
}

/// Arithmetic mean of the quantity over one chain. Panics on empty input.
pub fn standard_estimate(qoi_values: &[f64]) -> f64 {
    assert!(!qoi_values.is_empty(), "cannot estimate from an empty chain");
    kahan_mean(qoi_values)
}

/// The multilevel estimate: coarsest mean plus per-level correction means.
pub fn mlda_estimate(samples: &MultilevelSamples) -> f64 {
    samples.validate();
    let mut estimate = standard_estimate(&samples.qoi_at_states[0]);
    for l in 1..samples.num_levels() {
        estimate += correction_mean(samples, l);
    }
    estimate
}

/// Mean of `Q_l(state_j) - Q_{l-1}(proposal_j)` over level-`l` iterations.
pub fn correction_mean(samples: &MultilevelSamples, level: usize) -> f64 {
    let states = &samples.qoi_at_states[level];
    let proposals = &samples.qoi_at_proposals[level - 1];
    assert!(!states.is_empty(), "level {level} has no samples");
    let diffs: Vec<f64> = states.iter().zip(proposals.iter()).map(|(s, p)| s - p).collect();
    kahan_mean(&diffs)
}

/// Sample variance of the level correction terms, for balancing subchain
/// lengths by hand.
pub fn correction_variance(samples: &MultilevelSamples, level: usize) -> f64 {
    let states = &samples.qoi_at_states[level];
    let proposals = &samples.qoi_at_proposals[level - 1];
    let diffs: Vec<f64> = states.iter().zip(proposals.iter()).map(|(s, p)| s - p).collect();
    variance(&diffs)
}

pub fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = kahan_mean(values);
    let ss: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    kahan_sum(&ss) / (values.len() - 1) as f64
}

/// Batch-means standard error with about sqrt(N) batches; the standard
/// interval method for correlated chains.
pub fn batch_means_standard_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 4 {
        return f64::NAN;
    }
    let n_batches = (n as f64).sqrt().floor() as usize;
    let batch_len = n / n_batches;
    let means: Vec<f64> = (0..n_batches)
        .map(|b| kahan_mean(&values[b * batch_len..(b + 1) * batch_len]))
        .collect();
    (variance(&means) / n_batches as f64).sqrt()
}

/// Running absolute error of both estimators against a known reference,
/// reported after each top-level iteration.
///
/// Requires fixed subchain lengths so each top-level iteration owns a
/// fixed block of samples at every lower level.
pub fn error_trace(
    samples: &MultilevelSamples,
    subchain_lengths: &[usize],
    reference: f64,
) -> Vec<(usize, f64, f64)> {
    samples.validate();
    let top = samples.num_levels() - 1;
    assert_eq!(subchain_lengths.len(), top, "one subchain length per level pair");
    let n_top = samples.qoi_at_states[top].len();

    // samples per top-level iteration at each level
    let mut block = vec![1usize; samples.num_levels()];
    for l in (0..top).rev() {
        block[l] = block[l + 1] * subchain_lengths[l];
    }

    let mut trace = Vec::with_capacity(n_top);
    for n in 1..=n_top {
        let standard = standard_estimate(&samples.qoi_at_states[top][..n]);
        let mut ml = standard_estimate(&samples.qoi_at_states[0][..n * block[0]]);
        for l in 1..=top {
            let states = &samples.qoi_at_states[l][..n * block[l]];
            let proposals = &samples.qoi_at_proposals[l - 1][..n * block[l]];
            let diffs: Vec<f64> = states.iter().zip(proposals.iter()).map(|(s, p)| s - p).collect();
            ml += kahan_mean(&diffs);
        }
        trace.push((n, (ml - reference).abs(), (standard - reference).abs()));
    }
    trace
}
