//! The `run` command: execute chains, write every artifact.
//!
//! Everything except `timings.json` is a deterministic function of the
//! effective config and the seed; wall-clock-dependent quantities
//! (durations, effective samples per second) are quarantined in that one
//! file so output directories can be compared byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::Serialize;

use mlda::diagnostics::{autocorrelation, effective_sample_size};
use mlda::estimator::{
    correction_mean, correction_variance, error_trace, mlda_estimate, standard_estimate,
    MultilevelSamples,
};
use mlda::samplers::ChainRecord;
use mlda::storage::{write_bias_model, write_chain, write_qoi_stream};

use crate::config::Config;
use crate::experiment::{ChainOutput, Experiment};

pub struct RunArtifacts {
    pub written: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Metadata<'a> {
    problem: &'a str,
    seed: u64,
    chains: usize,
    config_hash: String,
    version: &'a str,
    /// Parameters the synthetic data was generated from.
    truth: Vec<f64>,
}

#[derive(Serialize)]
pub struct DiagnosticsReport {
    pub levels: usize,
    pub draws_per_chain: usize,
    /// `acceptance_rates[chain][level]`.
    pub acceptance_rates: Vec<Vec<f64>>,
    /// Effective sample size per leading state component, all chains
    /// combined at the finest level.
    pub ess: Vec<f64>,
    /// `acf[component][lag]`, averaged over chains at the finest level.
    pub acf: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct Timings {
    wall_seconds_per_chain: Vec<f64>,
    total_wall_seconds: f64,
    /// Effective samples per second per leading component (combined ESS
    /// over total wall time).
    es_per_second: Vec<f64>,
}

#[derive(Serialize)]
struct CorrectionReport {
    level: usize,
    mean: f64,
    variance: f64,
}

#[derive(Serialize)]
struct ChainEstimate {
    standard: f64,
    multilevel: f64,
    corrections: Vec<CorrectionReport>,
}

#[derive(Serialize)]
struct EstimateReport {
    qoi: String,
    per_chain: Vec<ChainEstimate>,
    pooled_standard: f64,
    pooled_multilevel: f64,
    reference: Option<f64>,
    final_abs_error_standard: Option<f64>,
    final_abs_error_multilevel: Option<f64>,
}

fn write_text(written: &mut Vec<PathBuf>, path: PathBuf, text: String) -> Result<()> {
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(())
}

fn write_json<T: Serialize>(written: &mut Vec<PathBuf>, path: PathBuf, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(written, path, text)
}

/// Execute all chains of an experiment and write artifacts into `out_dir`.
/// On failure every file written so far is removed.
pub fn run(experiment: &Experiment, out_dir: &Path, threads: usize) -> Result<RunArtifacts> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut written = Vec::new();
    let result = run_inner(experiment, out_dir, threads, &mut written);
    if result.is_err() {
        for path in &written {
            let _ = fs::remove_file(path);
        }
    }
    result.map(|()| RunArtifacts { written })
}

fn run_inner(
    experiment: &Experiment,
    out_dir: &Path,
    threads: usize,
    written: &mut Vec<PathBuf>,
) -> Result<()> {
    let config = &experiment.config;

    // Chains are independent; order of completion never matters because
    // each one is driven by its own pre-split stream and collected by
    // index.
    let chain_ids: Vec<usize> = (0..experiment.chains).collect();
    let outputs: Vec<Result<ChainOutput>> = if threads == 1 {
        chain_ids.iter().map(|&c| experiment.run_chain(c)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .context("building thread pool")?;
        pool.install(|| {
            use rayon::prelude::*;
            chain_ids.par_iter().map(|&c| experiment.run_chain(c)).collect()
        })
    };
    let outputs: Vec<ChainOutput> = outputs.into_iter().collect::<Result<_>>()?;

    // Effective config and metadata.
    write_json(written, out_dir.join("effective_config.json"), config)?;
    write_json(
        written,
        out_dir.join("metadata.json"),
        &Metadata {
            problem: config.problem.kind(),
            seed: experiment.seed,
            chains: experiment.chains,
            config_hash: format!("{:016x}", config.content_hash()),
            version: env!("CARGO_PKG_VERSION"),
            truth: experiment.truth.iter().copied().collect(),
        },
    )?;

    // Chain CSVs and estimator streams.
    for (c, output) in outputs.iter().enumerate() {
        for record in &output.records {
            let path = out_dir.join(format!("chain{c}_level{}.csv", record.level));
            write_chain(record, &path).map_err(|e| anyhow!("{e}"))?;
            written.push(path);
        }
        if config.sampler.estimator_mode {
            let samples = MultilevelSamples::from_records(&output.records);
            for level in 0..samples.num_levels() {
                let path = out_dir.join(format!("qoi_chain{c}_level{level}.csv"));
                let proposals = (level + 1 < samples.num_levels())
                    .then(|| samples.qoi_at_proposals[level].as_slice());
                write_qoi_stream(&samples.qoi_at_states[level], proposals, &path)
                    .map_err(|e| anyhow!("{e}"))?;
                written.push(path);
            }
        }
        if let Some(bias) = &output.bias_snapshot {
            let path = out_dir.join(format!("bias_chain{c}.txt"));
            write_bias_model(bias, &path).map_err(|e| anyhow!("{e}"))?;
            written.push(path);
        }
    }

    // Diagnostics over the finest level, acceptance rates per level.
    let records_per_chain: Vec<&[ChainRecord]> =
        outputs.iter().map(|o| o.records.as_slice()).collect();
    let report = diagnostics_report(&records_per_chain, config)?;
    write_json(written, out_dir.join("diagnostics.json"), &report)?;
    let top_records: Vec<&ChainRecord> =
        outputs.iter().map(|o| o.records.last().expect("at least one level")).collect();

    // Wall-clock artifacts, quarantined from the deterministic set.
    let total_wall: f64 = outputs.iter().map(|o| o.wall_seconds).sum();
    write_json(
        written,
        out_dir.join("timings.json"),
        &Timings {
            wall_seconds_per_chain: outputs.iter().map(|o| o.wall_seconds).collect(),
            total_wall_seconds: total_wall,
            es_per_second: report.ess.iter().map(|e| e / total_wall).collect(),
        },
    )?;

    // Autocorrelation curves as plot data.
    let mut acf_csv = String::from("lag");
    for comp in 0..report.acf.len() {
        let _ = write!(acf_csv, ",component_{comp}");
    }
    acf_csv.push('\n');
    for lag in 0..report.acf.first().map_or(0, |a| a.len()) {
        let _ = write!(acf_csv, "{lag}");
        for series in &report.acf {
            let _ = write!(acf_csv, ",{:.16e}", series[lag]);
        }
        acf_csv.push('\n');
    }
    write_text(written, out_dir.join("acf.csv"), acf_csv)?;

    if config.sampler.estimator_mode {
        let estimate = estimate_report(experiment, &outputs)?;
        write_json(written, out_dir.join("estimate.json"), &estimate)?;

        if let Some(reference) = config.estimator.reference {
            let mut trace_csv = String::from("chain,iteration,multilevel_abs_error,standard_abs_error\n");
            for (c, output) in outputs.iter().enumerate() {
                let samples = MultilevelSamples::from_records(&output.records);
                let trace =
                    error_trace(&samples, &config.sampler.subchain_lengths, reference);
                for (n, ml, std) in trace {
                    let _ = write!(trace_csv, "{c},{n},{ml:.16e},{std:.16e}\n");
                }
            }
            write_text(written, out_dir.join("error_trace.csv"), trace_csv)?;
        }
    }

    // Posterior trajectory samples for the predator–prey study.
    if config.output.trajectory_draws > 0 {
        if let Some(problem) = &experiment.predator_prey {
            let record = top_records[0];
            let k = config.output.trajectory_draws.min(record.len());
            let mut csv = String::from("draw,time,prey,predators\n");
            let times = problem.obs_times(problem.num_levels() - 1);
            for d in 0..k {
                let idx = (d * record.len()) / k;
                let theta = &record.states[idx];
                let out = problem
                    .forward(theta, problem.num_levels() - 1)
                    .map_err(|e| anyhow!("trajectory draw: {e}"))?;
                for (ti, t) in times.iter().enumerate() {
                    let _ = write!(csv, "{d},{t},{:.16e},{:.16e}\n", out[2 * ti], out[2 * ti + 1]);
                }
            }
            write_text(written, out_dir.join("trajectories.csv"), csv)?;
        }
    }

    Ok(())
}

pub fn diagnostics_report(records_per_chain: &[&[ChainRecord]], config: &Config) -> Result<DiagnosticsReport> {
    let levels = records_per_chain[0].len();
    let top_records: Vec<&ChainRecord> =
        records_per_chain.iter().map(|recs| recs.last().expect("at least one level")).collect();
    let dim = top_records[0].states.first().map(|s| s.len()).unwrap_or(0);
    let components = config.output.acf_components.min(dim);
    let draws = top_records[0].len();

    let mut ess = Vec::with_capacity(components);
    let mut acf = Vec::with_capacity(components);
    for comp in 0..components {
        let chains: Vec<Vec<f64>> = top_records.iter().map(|r| r.component(comp)).collect();
        let e = effective_sample_size(&chains).map_err(|e| anyhow!("component {comp}: {e}"))?;
        ess.push(e);

        let max_lag = config.output.acf_max_lag.min(draws.saturating_sub(1));
        let mut mean_acf = vec![0.0; max_lag + 1];
        for chain in &chains {
            let a = autocorrelation(chain, max_lag).map_err(|e| anyhow!("component {comp}: {e}"))?;
            for (m, v) in mean_acf.iter_mut().zip(a) {
                *m += v / top_records.len() as f64;
            }
        }
        acf.push(mean_acf);
    }

    Ok(DiagnosticsReport {
        levels,
        draws_per_chain: draws,
        acceptance_rates: records_per_chain
            .iter()
            .map(|recs| recs.iter().map(|r| r.acceptance_rate()).collect())
            .collect(),
        ess,
        acf,
    })
}

fn estimate_report(experiment: &Experiment, outputs: &[ChainOutput]) -> Result<EstimateReport> {
    let config = &experiment.config;
    let mut per_chain = Vec::with_capacity(outputs.len());
    for output in outputs {
        let samples = MultilevelSamples::from_records(&output.records);
        let top = samples.num_levels() - 1;
        let standard = standard_estimate(&samples.qoi_at_states[top]);
        let multilevel = mlda_estimate(&samples);
        let corrections = (1..=top)
            .map(|level| CorrectionReport {
                level,
                mean: correction_mean(&samples, level),
                variance: correction_variance(&samples, level),
            })
            .collect();
        per_chain.push(ChainEstimate { standard, multilevel, corrections });
    }
    let pooled_standard = per_chain.iter().map(|c| c.standard).sum::<f64>() / per_chain.len() as f64;
    let pooled_multilevel =
        per_chain.iter().map(|c| c.multilevel).sum::<f64>() / per_chain.len() as f64;
    let reference = config.estimator.reference;
    Ok(EstimateReport {
        qoi: config.estimator.qoi.clone().unwrap_or_else(|| "state_0".into()),
        per_chain,
        pooled_standard,
        pooled_multilevel,
        reference,
        final_abs_error_standard: reference.map(|r| (pooled_standard - r).abs()),
        final_abs_error_multilevel: reference.map(|r| (pooled_multilevel - r).abs()),
    })
}
