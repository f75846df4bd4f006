//! Deterministic persistence: chain CSVs, estimator sample streams, bias
//! snapshots, and run metadata.
//!
//! Floats are written as decimal with 17 significant digits, which
//! round-trips 64-bit values exactly, so stored artifacts are both
//! diffable and bit-faithful. Given the same inputs the bytes are
//! identical run to run.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::aem::{BiasModel, BiasPairModel};
use crate::error::StorageError;
use crate::samplers::ChainRecord;

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, source: std::io::Error) -> StorageError {
    StorageError::Io { path: path.display().to_string(), source }
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> StorageError {
    StorageError::Malformed { path: path.display().to_string(), line, message: message.into() }
}

fn parse_f64(path: &Path, line: usize, tok: &str) -> Result<f64, StorageError> {
    tok.parse::<f64>().map_err(|_| malformed(path, line, format!("bad float {tok:?}")))
}

/// Serialize one per-level record as CSV with the header
/// `iteration,level,accepted,log_posterior,qoi,state_0,...`.
pub fn write_chain(record: &ChainRecord, path: &Path) -> Result<(), StorageError> {
    let dim = record.states.first().map_or(0, |s| s.len());
    let mut out = String::new();
    out.push_str("iteration,level,accepted,log_posterior,qoi");
    for d in 0..dim {
        let _ = write!(out, ",state_{d}");
    }
    out.push('\n');
    for i in 0..record.len() {
        let _ = write!(
            out,
            "{i},{},{},{},{}",
            record.level,
            record.accepted[i] as u8,
            fmt_f64(record.log_posteriors[i]),
            fmt_f64(record.qois[i]),
        );
        for v in record.states[i].iter() {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Inverse of [`write_chain`]. Proposal attributions are not part of the
/// chain CSV; they live in the estimator sample streams.
pub fn read_chain(path: &Path) -> Result<ChainRecord, StorageError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| malformed(path, 1, "empty file"))?;
    if !header.starts_with("iteration,level,accepted,log_posterior,qoi") {
        return Err(malformed(path, 1, "unexpected header"));
    }
    let dim = header.split(',').count() - 5;

    let mut record = ChainRecord::new(0);
    let mut first = true;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split(',').collect();
        if tok.len() != 5 + dim {
            return Err(malformed(path, lineno, format!("expected {} fields, got {}", 5 + dim, tok.len())));
        }
        let level: usize =
            tok[1].parse().map_err(|_| malformed(path, lineno, format!("bad level {:?}", tok[1])))?;
        if first {
            record.level = level;
            first = false;
        } else if record.level != level {
            return Err(malformed(path, lineno, "level changed mid-file"));
        }
        record.accepted.push(match tok[2] {
            "0" => false,
            "1" => true,
            other => return Err(malformed(path, lineno, format!("bad accepted flag {other:?}"))),
        });
        record.log_posteriors.push(parse_f64(path, lineno, tok[3])?);
        record.qois.push(parse_f64(path, lineno, tok[4])?);
        let mut state = DVector::zeros(dim);
        for d in 0..dim {
            state[d] = parse_f64(path, lineno, tok[5 + d])?;
        }
        record.states.push(state);
    }
    Ok(record)
}

/// Estimator sample stream for one level: the quantity of interest at
/// every recorded state and (levels >= 1) at every attributed coarse
/// proposal of the level above.
pub fn write_qoi_stream(
    qoi_at_states: &[f64],
    qoi_at_proposals: Option<&[f64]>,
    path: &Path,
) -> Result<(), StorageError> {
    let mut out = String::from("kind,index,value\n");
    for (i, v) in qoi_at_states.iter().enumerate() {
        let _ = write!(out, "state,{i},{}\n", fmt_f64(*v));
    }
    if let Some(props) = qoi_at_proposals {
        for (i, v) in props.iter().enumerate() {
            let _ = write!(out, "proposal,{i},{}\n", fmt_f64(*v));
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_qoi_stream(path: &Path) -> Result<(Vec<f64>, Vec<f64>), StorageError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut states = Vec::new();
    let mut proposals = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let tok: Vec<&str> = line.split(',').collect();
        if tok.len() != 3 {
            return Err(malformed(path, lineno, "expected 3 fields"));
        }
        let value = parse_f64(path, lineno, tok[2])?;
        match tok[0] {
            "state" => states.push(value),
            "proposal" => proposals.push(value),
            other => return Err(malformed(path, lineno, format!("unknown kind {other:?}"))),
        }
    }
    Ok((states, proposals))
}

/// Text snapshot of a bias model: per pair, a count line, the mean vector
/// and the covariance in row-major order.
pub fn write_bias_model(model: &BiasModel, path: &Path) -> Result<(), StorageError> {
    let mut out = String::new();
    for pair in &model.pairs {
        let _ = writeln!(out, "pair {} count {} dim {}", pair.pair, pair.count, pair.dim());
        out.push_str("mean");
        for v in pair.mean.iter() {
            let _ = write!(out, " {}", fmt_f64(*v));
        }
        out.push('\n');
        out.push_str("covariance");
        for r in 0..pair.dim() {
            for c in 0..pair.dim() {
                let _ = write!(out, " {}", fmt_f64(pair.covariance[(r, c)]));
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_bias_model(path: &Path) -> Result<BiasModel, StorageError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut pairs = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some((idx, line)) = lines.next() {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let head: Vec<&str> = line.split_whitespace().collect();
        if head.len() != 6 || head[0] != "pair" {
            return Err(malformed(path, lineno, "expected 'pair <k> count <n> dim <d>'"));
        }
        let pair: usize = head[1].parse().map_err(|_| malformed(path, lineno, "bad pair index"))?;
        let count: usize = head[3].parse().map_err(|_| malformed(path, lineno, "bad count"))?;
        let dim: usize = head[5].parse().map_err(|_| malformed(path, lineno, "bad dim"))?;

        let (midx, mean_line) = lines.next().ok_or_else(|| malformed(path, lineno, "missing mean"))?;
        let mtok: Vec<&str> = mean_line.split_whitespace().collect();
        if mtok.len() != dim + 1 || mtok[0] != "mean" {
            return Err(malformed(path, midx + 1, "bad mean line"));
        }
        let mut mean = DVector::zeros(dim);
        for d in 0..dim {
            mean[d] = parse_f64(path, midx + 1, mtok[d + 1])?;
        }

        let (cidx, cov_line) = lines.next().ok_or_else(|| malformed(path, lineno, "missing covariance"))?;
        let ctok: Vec<&str> = cov_line.split_whitespace().collect();
        if ctok.len() != dim * dim + 1 || ctok[0] != "covariance" {
            return Err(malformed(path, cidx + 1, "bad covariance line"));
        }
        let mut covariance = DMatrix::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                covariance[(r, c)] = parse_f64(path, cidx + 1, ctok[1 + r * dim + c])?;
            }
        }
        pairs.push(BiasPairModel { pair, mean, covariance, count });
    }
    Ok(BiasModel { pairs })
}
