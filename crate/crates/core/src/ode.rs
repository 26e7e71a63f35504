//! Deterministic explicit integrators.
//!
//! The right-hand side writes the derivative into a caller-provided buffer:
//! `rhs(t, x, dxdt)`. States are plain `f64` slices so the same routines serve
//! plant simulation and flattened matrix ODEs.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Classical fourth-order Runge–Kutta with a constant step.
    Rk4 { step: f64 },
    /// Dormand–Prince 5(4) with error-per-step control.
    Rk45 { abs_tol: f64, rel_tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub method: Method,
    pub max_steps: usize,
}

impl SolverSettings {
    pub const DEFAULT_MAX_STEPS: usize = 10_000_000;

    pub fn rk4(step: f64) -> Self {
        Self {
            method: Method::Rk4 { step },
            max_steps: Self::DEFAULT_MAX_STEPS,
        }
    }

    pub fn rk45(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            method: Method::Rk45 { abs_tol, rel_tol },
            max_steps: Self::DEFAULT_MAX_STEPS,
        }
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps < 1 {
            return Err(Error::Settings("max_steps must be at least 1"));
        }
        match self.method {
            Method::Rk4 { step } if !(step > 0.0 && step.is_finite()) => {
                Err(Error::Settings("fixed step must be positive and finite"))
            }
            Method::Rk45 { abs_tol, rel_tol } if !(abs_tol > 0.0 && rel_tol > 0.0) => {
                Err(Error::Settings("tolerances must be positive"))
            }
            _ => Ok(()),
        }
    }
}

impl Default for SolverSettings {
    /// RK4 with a 10 ms step.
    fn default() -> Self {
        Self::rk4(0.01)
    }
}

/// States at the requested sample times plus step statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub samples: Vec<(f64, Vec<f64>)>,
    /// Accepted steps (including partial steps onto sample times).
    pub steps: usize,
    /// Rejected trial steps of the adaptive method.
    pub rejected: usize,
}

/// Integrates `ẋ = rhs(t, x)` over `span` and returns the state at every entry
/// of `sample_times`.
///
/// Sample times must be sorted and inside the span. With [`Method::Rk4`] the
/// main step grid `t_start + k·step` does not depend on the sample times;
/// samples falling between grid points are reached by an auxiliary partial
/// step, so the trajectory is bit-reproducible for identical inputs.
pub fn integrate<F>(
    mut rhs: F,
    x0: &[f64],
    span: (f64, f64),
    settings: &SolverSettings,
    sample_times: &[f64],
) -> Result<Solution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    settings.validate()?;
    let (t_start, t_end) = span;
    if !(t_end > t_start) {
        return Err(Error::Invalid("integration span must satisfy t_end > t_start".into()));
    }
    let slack = 1e-12 * t_end.abs().max(t_start.abs()).max(1.0);
    if sample_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Invalid("sample times must be sorted".into()));
    }
    if sample_times
        .iter()
        .any(|&t| t < t_start - slack || t > t_end + slack || !t.is_finite())
    {
        return Err(Error::Invalid("sample times must lie within the integration span".into()));
    }
    if x0.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { t: t_start });
    }
    match settings.method {
        Method::Rk4 { step } => rk4(&mut rhs, x0, span, step, settings.max_steps, sample_times, slack),
        Method::Rk45 { abs_tol, rel_tol } => dopri(
            &mut rhs,
            x0,
            span,
            abs_tol,
            rel_tol,
            settings.max_steps,
            sample_times,
            slack,
        ),
    }
}

struct Rk4Work {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Work {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step<F>(&mut self, rhs: &mut F, t: f64, x: &[f64], h: f64, out: &mut [f64]) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let n = x.len();
        rhs(t, x, &mut self.k1)?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        rhs(t + 0.5 * h, &self.tmp, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        rhs(t + 0.5 * h, &self.tmp, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        rhs(t + h, &self.tmp, &mut self.k4)?;
        for i in 0..n {
            out[i] = x[i] + h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: t + h });
        }
        Ok(())
    }
}

fn rk4<F>(
    rhs: &mut F,
    x0: &[f64],
    (t_start, t_end): (f64, f64),
    step: f64,
    max_steps: usize,
    sample_times: &[f64],
    slack: f64,
) -> Result<Solution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = x0.len();
    let mut work = Rk4Work::new(n);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    let mut partial = vec![0.0; n];
    let mut samples = Vec::with_capacity(sample_times.len());
    let mut pending = sample_times.iter().copied().peekable();

    // Samples at the initial time.
    while let Some(&ts) = pending.peek() {
        if ts > t_start + slack {
            break;
        }
        samples.push((ts, x.clone()));
        pending.next();
    }

    let span = t_end - t_start;
    let total = Float::ceil(span / step - 1e-9) as usize;
    let total = total.max(1);
    let mut steps = 0;
    for k in 0..total {
        if pending.peek().is_none() {
            break;
        }
        if steps >= max_steps {
            return Err(Error::MaxSteps {
                t: t_start + k as f64 * step,
                max_steps,
            });
        }
        let t = t_start + k as f64 * step;
        let t_next = if k + 1 == total { t_end } else { t_start + (k + 1) as f64 * step };
        work.step(rhs, t, &x, t_next - t, &mut next)?;
        steps += 1;
        while let Some(&ts) = pending.peek() {
            if ts >= t_next - slack {
                break;
            }
            work.step(rhs, t, &x, ts - t, &mut partial)?;
            steps += 1;
            samples.push((ts, partial.clone()));
            pending.next();
        }
        core::mem::swap(&mut x, &mut next);
        while let Some(&ts) = pending.peek() {
            if ts > t_next + slack {
                break;
            }
            samples.push((ts, x.clone()));
            pending.next();
        }
    }
    Ok(Solution {
        samples,
        steps,
        rejected: 0,
    })
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[allow(clippy::too_many_arguments)]
fn dopri<F>(
    rhs: &mut F,
    x0: &[f64],
    (t_start, t_end): (f64, f64),
    abs_tol: f64,
    rel_tol: f64,
    max_steps: usize,
    sample_times: &[f64],
    slack: f64,
) -> Result<Solution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = x0.len();
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; n]).collect();
    let mut stage = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut x = x0.to_vec();
    let mut t = t_start;
    let mut samples = Vec::with_capacity(sample_times.len());
    let mut pending = sample_times.iter().copied().peekable();
    while let Some(&ts) = pending.peek() {
        if ts > t_start + slack {
            break;
        }
        samples.push((ts, x.clone()));
        pending.next();
    }

    let span = t_end - t_start;
    let mut h = initial_step(rhs, t, &x, abs_tol, rel_tol, span, &mut k)?;
    let h_min = 1e-14 * t_end.abs().max(t_start.abs()).max(1.0);
    let mut attempts = 0;
    let mut steps = 0;
    let mut rejected = 0;

    while let Some(&target) = pending.peek() {
        if attempts >= max_steps {
            return Err(Error::MaxSteps { t, max_steps });
        }
        attempts += 1;
        let remaining = target - t;
        let landing = h >= remaining - slack;
        let h_try = if landing { remaining } else { h };

        rhs(t, &x, &mut k[0])?;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = x[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += h_try * A[s][j] * kj[i];
                }
                stage[i] = acc;
            }
            rhs(t + C[s] * h_try, &stage, &mut k[s])?;
        }
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut hi = 0.0;
            let mut lo = 0.0;
            for s in 0..7 {
                hi += B5[s] * k[s][i];
                lo += B4[s] * k[s][i];
            }
            x_new[i] = x[i] + h_try * hi;
            let scale = abs_tol + rel_tol * x[i].abs().max(x_new[i].abs());
            let e = h_try * (hi - lo) / scale;
            err_sq += e * e;
        }
        let err = if n == 0 { 0.0 } else { Float::sqrt(err_sq / n as f64) };
        if !err.is_finite() || x_new.iter().any(|v| !v.is_finite()) {
            if h_try <= h_min {
                return Err(Error::NonFinite { t });
            }
            h = h_try * 0.1;
            rejected += 1;
            continue;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * Float::powf(err, -0.2)).clamp(0.2, 5.0)
        };
        if err <= 1.0 {
            t = if landing { target } else { t + h_try };
            core::mem::swap(&mut x, &mut x_new);
            steps += 1;
            if landing {
                // Keep the proposal from before the shortened landing step.
                h = h.max(h_try * factor);
                while let Some(&ts) = pending.peek() {
                    if ts > t + slack {
                        break;
                    }
                    samples.push((ts, x.clone()));
                    pending.next();
                }
            } else {
                h = h_try * factor;
            }
        } else {
            rejected += 1;
            h = h_try * factor.min(1.0);
            if h < h_min {
                return Err(Error::StepUnderflow { t });
            }
        }
    }
    Ok(Solution {
        samples,
        steps,
        rejected,
    })
}

fn initial_step<F>(
    rhs: &mut F,
    t: f64,
    x: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    span: f64,
    k: &mut [Vec<f64>],
) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = x.len();
    if n == 0 {
        return Ok(span);
    }
    rhs(t, x, &mut k[0])?;
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..n {
        let scale = abs_tol + rel_tol * x[i].abs();
        d0 += (x[i] / scale) * (x[i] / scale);
        d1 += (k[0][i] / scale) * (k[0][i] / scale);
    }
    let d0 = Float::sqrt(d0 / n as f64);
    let d1 = Float::sqrt(d1 / n as f64);
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    Ok(h.min(span).max(1e-12 * span))
}
