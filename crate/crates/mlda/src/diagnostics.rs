//! Chain quality metrics: autocorrelation, effective sample size,
//! acceptance rates, and effective samples per second.
//!
//! The effective sample size follows the rank-normalization recipe: chains
//! are split in half, all draws are jointly mapped through average ranks
//! to normal scores, and the paired autocorrelations are truncated by
//! Geyer's initial monotone positive sequence. Rank normalization makes
//! the estimate exactly invariant under monotone transformations of the
//! series.

use crate::error::DiagnosticsError;
use crate::samplers::ChainRecord;

/// Biased (1/N-normalized) autocorrelation estimates up to `max_lag`
/// inclusive; `acf[0] = 1`. Errors on constant series.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>, DiagnosticsError> {
    if series.len() < 4 {
        return Err(DiagnosticsError::TooShort { needed: 4, got: series.len() });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(DiagnosticsError::NonFinite);
    }
    let acov = autocovariance_fft(series, max_lag);
    if acov[0] <= 0.0 {
        return Err(DiagnosticsError::ConstantSeries);
    }
    Ok(acov.iter().map(|v| v / acov[0]).collect())
}

/// Autocovariance via the Wiener–Khinchin route: pad, transform, take the
/// squared magnitude, transform back. 1/N normalization.
pub fn autocovariance_fft(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut re = vec![0.0; size];
    let mut im = vec![0.0; size];
    for (i, &v) in series.iter().enumerate() {
        re[i] = v - mean;
    }
    fft(&mut re, &mut im, false);
    for i in 0..size {
        let mag = re[i] * re[i] + im[i] * im[i];
        re[i] = mag;
        im[i] = 0.0;
    }
    fft(&mut re, &mut im, true);
    let lags = max_lag.min(n - 1);
    (0..=lags).map(|k| re[k] / n as f64).collect()
}

/// Iterative radix-2 complex transform (inverse includes the 1/n factor).
fn fft(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let angle = sign * 2.0 * std::f64::consts::PI / len as f64;
        let (w_re, w_im) = (angle.cos(), angle.sin());
        let mut start = 0;
        while start < n {
            let (mut cur_re, mut cur_im) = (1.0, 0.0);
            for k in 0..len / 2 {
                let a = start + k;
                let b = a + len / 2;
                let t_re = re[b] * cur_re - im[b] * cur_im;
                let t_im = re[b] * cur_im + im[b] * cur_re;
                re[b] = re[a] - t_re;
                im[b] = im[a] - t_im;
                re[a] += t_re;
                im[a] += t_im;
                let next_re = cur_re * w_re - cur_im * w_im;
                cur_im = cur_re * w_im + cur_im * w_re;
                cur_re = next_re;
            }
            start += len;
        }
        len <<= 1;
    }
    if inverse {
        for i in 0..n {
            re[i] /= n as f64;
            im[i] /= n as f64;
        }
    }
}

/// Inverse standard normal CDF (Acklam's rational approximation, absolute
/// error below 1.2e-9 over (0,1)).
fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -inverse_normal_cdf(1.0 - p)
    }
}

/// Split each chain in half (dropping the middle draw of odd-length
/// chains) and map all draws jointly to normal scores through average
/// ranks.
fn split_and_rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let half = chains.iter().map(|c| c.len() / 2).min().unwrap();
    let mut split: Vec<Vec<f64>> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        split.push(c[..half].to_vec());
        split.push(c[c.len() - half..].to_vec());
    }

    let total = 2 * chains.len() * half;
    let mut tagged: Vec<(f64, usize)> = Vec::with_capacity(total);
    for (ci, c) in split.iter().enumerate() {
        for (i, &v) in c.iter().enumerate() {
            tagged.push((v, ci * half + i));
        }
    }
    tagged.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // Average ranks over ties, then the Blom-style normal score.
    let mut z = vec![0.0; total];
    let mut i = 0;
    while i < total {
        let mut j = i;
        while j + 1 < total && tagged[j + 1].0 == tagged[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let score = inverse_normal_cdf((avg_rank - 0.375) / (total as f64 + 0.25));
        for t in &tagged[i..=j] {
            z[t.1] = score;
        }
        i = j + 1;
    }

    split
        .iter()
        .enumerate()
        .map(|(ci, _)| z[ci * half..(ci + 1) * half].to_vec())
        .collect()
}

/// Rank-normalized split-chain effective sample size.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Result<f64, DiagnosticsError> {
    if chains.is_empty() {
        return Err(DiagnosticsError::TooShort { needed: 8, got: 0 });
    }
    let shortest = chains.iter().map(|c| c.len()).min().unwrap();
    if shortest < 8 {
        return Err(DiagnosticsError::TooShort { needed: 8, got: shortest });
    }
    for c in chains {
        if c.iter().any(|v| !v.is_finite()) {
            return Err(DiagnosticsError::NonFinite);
        }
    }
    let first = chains[0][0];
    if chains.iter().all(|c| c.iter().all(|&v| v == first)) {
        return Err(DiagnosticsError::ConstantSeries);
    }

    let split = split_and_rank_normalize(chains);
    let m = split.len();
    let n = split[0].len();

    let acovs: Vec<Vec<f64>> = split.iter().map(|c| autocovariance_fft(c, n - 1)).collect();
    let chain_vars: Vec<f64> = acovs.iter().map(|a| a[0] * n as f64 / (n - 1) as f64).collect();
    let mean_var = chain_vars.iter().sum::<f64>() / m as f64;
    let mut var_plus = mean_var * (n - 1) as f64 / n as f64;
    if m > 1 {
        let means: Vec<f64> = split.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
        let grand = means.iter().sum::<f64>() / m as f64;
        let b = means.iter().map(|mu| (mu - grand) * (mu - grand)).sum::<f64>() / (m - 1) as f64;
        var_plus += b;
    }
    if var_plus <= 0.0 {
        return Err(DiagnosticsError::ConstantSeries);
    }

    let mean_acov = |t: usize| -> f64 { acovs.iter().map(|a| a[t]).sum::<f64>() / m as f64 };

    // Geyer initial positive sequence over paired autocorrelations.
    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
    rho[1] = rho_odd;
    let mut s = 1;
    while s < n.saturating_sub(4) && rho_even + rho_odd > 0.0 {
        rho_even = 1.0 - (mean_var - mean_acov(s + 1)) / var_plus;
        rho_odd = 1.0 - (mean_var - mean_acov(s + 2)) / var_plus;
        if rho_even + rho_odd >= 0.0 {
            rho[s + 1] = rho_even;
            rho[s + 2] = rho_odd;
        }
        s += 2;
    }
    let max_s = s;
    if rho_even > 0.0 {
        rho[max_s + 1] = rho_even;
    }

    // Initial monotone smoothing of the pair sums.
    let mut s = 1;
    while max_s >= 3 && s <= max_s - 3 {
        if rho[s + 1] + rho[s + 2] > rho[s - 1] + rho[s] {
            let avg = (rho[s - 1] + rho[s]) / 2.0;
            rho[s + 1] = avg;
            rho[s + 2] = avg;
        }
        s += 2;
    }

    let total = (m * n) as f64;
    let tau = -1.0 + 2.0 * rho[..max_s].iter().sum::<f64>() + rho[max_s + 1];
    let ess = total / tau;
    Ok(ess.min(total * total.log10()))
}

/// Fraction of accepted iterations inside a window of a record.
pub fn acceptance_rate(record: &ChainRecord, window: std::ops::Range<usize>) -> f64 {
    assert!(!window.is_empty(), "empty acceptance window");
    assert!(window.end <= record.len());
    let hits = record.accepted[window.clone()].iter().filter(|&&a| a).count();
    hits as f64 / window.len() as f64
}

/// Effective samples per wall-clock second.
pub fn es_per_second(ess: f64, wall_time_seconds: f64) -> f64 {
    assert!(wall_time_seconds > 0.0, "wall time must be positive");
    ess / wall_time_seconds
}
