//! Explicit adaptive Runge–Kutta integration, Dormand–Prince 5(4).
//!
//! Seven stages with the first-same-as-last property, an embedded
//! fourth-order error estimate driving proportional step control, and the
//! standard fifth-order continuous extension for dense output at requested
//! times.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (stiff problem or too tight tolerance)")]
    StepUnderflow { t: f64 },
    #[error("exceeded {max_steps} steps at t = {t}")]
    TooManySteps { max_steps: usize, t: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct Rk45Options {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for Rk45Options {
    fn default() -> Self {
        Rk45Options { rel_tol: 1e-8, abs_tol: 1e-8, max_steps: 100_000 }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];

/// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Dense-output coefficients for the fifth-order continuous extension.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Integrate `dy/dt = rhs(t, y)` over `t_span` and return the solution at
/// the requested output times, which must be non-decreasing and inside the
/// span.
pub fn integrate_rk45(
    rhs: &dyn Fn(f64, &[f64], &mut [f64]),
    y0: &[f64],
    t_span: (f64, f64),
    out_times: &[f64],
    opts: &Rk45Options,
) -> Result<Vec<Vec<f64>>, OdeError> {
    let (t0, t_end) = t_span;
    assert!(t_end > t0, "degenerate time span");
    assert!(y0.iter().all(|v| v.is_finite()), "initial state must be finite");
    for w in out_times.windows(2) {
        assert!(w[0] <= w[1], "output times must be non-decreasing");
    }
    if let (Some(&first), Some(&last)) = (out_times.first(), out_times.last()) {
        assert!(first >= t0 && last <= t_end, "output times must lie inside the span");
    }

    let dim = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; dim]; 7];
    rhs(t, &y, &mut k[0]);

    let mut h = initial_step(&k[0], &y, t_end - t0);
    let mut outputs = Vec::with_capacity(out_times.len());
    let mut next_out = 0;

    // Emit any outputs at exactly t0.
    while next_out < out_times.len() && out_times[next_out] <= t {
        outputs.push(y.clone());
        next_out += 1;
    }

    let mut y_stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut steps = 0usize;

    while t < t_end {
        steps += 1;
        if steps > opts.max_steps {
            return Err(OdeError::TooManySteps { max_steps: opts.max_steps, t });
        }
        if h < 1e-14 * (t.abs().max(1.0)) {
            return Err(OdeError::StepUnderflow { t });
        }
        if t + h > t_end {
            h = t_end - t;
        }

        // Stages 2..7; k[0] carries f(t, y) from the previous step (FSAL).
        let mut finite = true;
        'stages: for s in 1..7 {
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                y_stage[i] = y[i] + h * acc;
            }
            if y_stage.iter().any(|v| !v.is_finite()) {
                finite = false;
                break 'stages;
            }
            rhs(t + C[s] * h, &y_stage, &mut k[s]);
        }
        if !finite {
            // Overflowing trial step; retry smaller. The underflow guard
            // above ends genuinely divergent problems.
            h *= 0.2;
            continue;
        }
        // Fifth-order solution is the last stage input (row 7 of A equals b).
        y_new.copy_from_slice(&y_stage);

        // Scaled error norm from the embedded fourth-order weights.
        let mut err_sq = 0.0;
        for i in 0..dim {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            e *= h;
            let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / dim as f64).sqrt();

        if !err.is_finite() {
            h *= 0.2;
            continue;
        }

        if err <= 1.0 {
            // Accept. Dense output for any requested times inside the step.
            while next_out < out_times.len() && out_times[next_out] <= t + h {
                let sigma = ((out_times[next_out] - t) / h).clamp(0.0, 1.0);
                outputs.push(dense_eval(&y, &y_new, &k, h, sigma, dim));
                next_out += 1;
            }
            t += h;
            y.copy_from_slice(&y_new);
            k.swap(0, 6);
        }

        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }

    // Times exactly at t_end that floating point left behind.
    while next_out < out_times.len() {
        outputs.push(y.clone());
        next_out += 1;
    }
    Ok(outputs)
}

/// Fifth-order interpolant inside an accepted step.
fn dense_eval(y: &[f64], y_new: &[f64], k: &[Vec<f64>], h: f64, sigma: f64, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for i in 0..dim {
        let dy = y_new[i] - y[i];
        let bspl = h * k[0][i] - dy;
        let r1 = y[i];
        let r2 = dy;
        let r3 = bspl;
        let r4 = dy - h * k[6][i] - bspl;
        let mut r5 = 0.0;
        for (j, kj) in k.iter().enumerate() {
            r5 += D[j] * kj[i];
        }
        r5 *= h;
        out[i] = r1 + sigma * (r2 + (1.0 - sigma) * (r3 + sigma * (r4 + (1.0 - sigma) * r5)));
    }
    out
}

/// Conservative first step from the initial slope.
fn initial_step(f0: &[f64], y0: &[f64], span: f64) -> f64 {
    let d0 = y0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let d1 = f0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let h = if d1 > 1e-10 { 0.01 * (d0.max(1e-6) / d1) } else { span * 1e-3 };
    h.min(span * 0.1).max(span * 1e-8)
}
