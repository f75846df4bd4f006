//! The `diagnose` and `estimate` commands: recompute reports from stored
//! chain artifacts, fully decoupled from the sampling run.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use mlda::estimator::{
    correction_mean, correction_variance, mlda_estimate, standard_estimate, MultilevelSamples,
};
use mlda::samplers::ChainRecord;
use mlda::storage::{read_chain, read_qoi_stream};

use crate::config::Config;
use crate::runner::{diagnostics_report, DiagnosticsReport};

/// Chain records grouped as `[chain][level]` from the files
/// `chain<c>_level<l>.csv` in a run directory.
pub fn load_chains(dir: &Path) -> Result<Vec<Vec<ChainRecord>>> {
    let mut by_chain: BTreeMap<usize, BTreeMap<usize, ChainRecord>> = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(stem) = name.strip_suffix(".csv") else { continue };
        let Some(rest) = stem.strip_prefix("chain") else { continue };
        let Some((chain_str, level_str)) = rest.split_once("_level") else { continue };
        let (Ok(chain), Ok(level)) = (chain_str.parse::<usize>(), level_str.parse::<usize>()) else {
            continue;
        };
        let record = read_chain(&path).map_err(|e| anyhow!("{e}"))?;
        by_chain.entry(chain).or_default().insert(level, record);
    }
    if by_chain.is_empty() {
        bail!("no chain files found in {}", dir.display());
    }
    let mut chains = Vec::new();
    for (chain, levels) in by_chain {
        let expected: Vec<usize> = (0..levels.len()).collect();
        let found: Vec<usize> = levels.keys().copied().collect();
        if expected != found {
            bail!("chain {chain}: level files not contiguous ({found:?})");
        }
        chains.push(levels.into_values().collect());
    }
    Ok(chains)
}

fn load_effective_config(dir: &Path) -> Result<Config> {
    let path = dir.join("effective_config.json");
    let text =
        fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Config::from_json(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

/// Recompute diagnostics from stored chains.
pub fn diagnose(dir: &Path) -> Result<DiagnosticsReport> {
    let config = load_effective_config(dir)?;
    let chains = load_chains(dir)?;
    let views: Vec<&[ChainRecord]> = chains.iter().map(|c| c.as_slice()).collect();
    diagnostics_report(&views, &config)
}

#[derive(Serialize)]
pub struct StoredEstimateReport {
    pub qoi: String,
    pub per_chain_standard: Vec<f64>,
    pub per_chain_multilevel: Vec<f64>,
    pub per_level_correction_mean: Vec<f64>,
    pub per_level_correction_variance: Vec<f64>,
    pub pooled_standard: f64,
    pub pooled_multilevel: f64,
    pub reference: Option<f64>,
}

/// Recompute the estimates from stored quantity-of-interest streams.
pub fn estimate(dir: &Path, reference_override: Option<f64>) -> Result<StoredEstimateReport> {
    let config = load_effective_config(dir)?;
    if !config.sampler.estimator_mode {
        bail!("run was not recorded in estimator mode; no sample streams to estimate from");
    }
    let levels = config.hierarchy.resolutions.len();

    let mut per_chain_standard = Vec::new();
    let mut per_chain_multilevel = Vec::new();
    let mut correction_means = vec![0.0; levels.saturating_sub(1)];
    let mut correction_vars = vec![0.0; levels.saturating_sub(1)];

    let mut chain = 0usize;
    loop {
        let first = dir.join(format!("qoi_chain{chain}_level0.csv"));
        if !first.exists() {
            break;
        }
        let mut samples = MultilevelSamples::default();
        for level in 0..levels {
            let path = dir.join(format!("qoi_chain{chain}_level{level}.csv"));
            let (states, proposals) = read_qoi_stream(&path).map_err(|e| anyhow!("{e}"))?;
            samples.qoi_at_states.push(states);
            if level + 1 < levels {
                samples.qoi_at_proposals.push(proposals);
            }
        }
        samples.validate();
        per_chain_standard.push(standard_estimate(&samples.qoi_at_states[levels - 1]));
        per_chain_multilevel.push(mlda_estimate(&samples));
        for level in 1..levels {
            correction_means[level - 1] += correction_mean(&samples, level);
            correction_vars[level - 1] += correction_variance(&samples, level);
        }
        chain += 1;
    }
    if chain == 0 {
        bail!("no quantity-of-interest streams found in {}", dir.display());
    }
    for v in correction_means.iter_mut().chain(correction_vars.iter_mut()) {
        *v /= chain as f64;
    }

    Ok(StoredEstimateReport {
        qoi: config.estimator.qoi.clone().unwrap_or_else(|| "state_0".into()),
        pooled_standard: per_chain_standard.iter().sum::<f64>() / chain as f64,
        pooled_multilevel: per_chain_multilevel.iter().sum::<f64>() / chain as f64,
        per_chain_standard,
        per_chain_multilevel,
        per_level_correction_mean: correction_means,
        per_level_correction_variance: correction_vars,
        reference: reference_override.or(config.estimator.reference),
    })
}
