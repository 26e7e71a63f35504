//! Scenario description, closed-loop co-simulation and tracking metrics.

use alloc::vec::Vec;
use alloc::{format, vec};

use nalgebra::DVector;
use num_traits::Float;

use crate::analysis::PiecewiseConstant;
use crate::controller::{ControllerState, IntegralController};
use crate::ltv::{LtvSystem, MatrixFunction};
use crate::ode::{integrate, SolverSettings};
use crate::tank::{self, ProposedTankController, StandardIController, TankParams};
use crate::{Error, Result};

/// Half-width of the settling band relative to `|r(t)|`.
pub const SETTLING_BAND: f64 = 0.02;

/// Hysteresis of the oscillation counter relative to the band half-width.
pub const OSCILLATION_DEADBAND: f64 = 1e-3;

#[derive(Debug, Clone)]
pub enum Plant {
    TwoTank(TankParams),
    Linear(LtvSystem),
}

#[derive(Debug, Clone)]
pub enum ControllerSpec {
    /// Two-tank only: the proposed law with `H = [α α]`.
    Proposed { antiwindup: bool },
    /// Two-tank only: `q = qref + kI v`, `v̇ = −β (z2 − zref2)`.
    StandardI,
    /// Linear plant: generic integral controller.
    Integral(IntegralController),
    /// Linear plant: static state feedback `u = −K(t) x`.
    StateFeedback(MatrixFunction),
    /// Open loop: `q = qref` for the tanks, `u = 0` for a linear plant.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Disturbance {
    Zero,
    Constant(DVector<f64>),
    PiecewiseConstant(PiecewiseConstant),
    /// `offset + amplitude · sin(2π frequency t)`, componentwise.
    Sine {
        offset: DVector<f64>,
        amplitude: DVector<f64>,
        frequency: f64,
    },
}

impl Disturbance {
    pub fn eval(&self, t: f64, dim: usize) -> DVector<f64> {
        match self {
            Disturbance::Zero => DVector::zeros(dim),
            Disturbance::Constant(w) => w.clone(),
            Disturbance::PiecewiseConstant(w) => w.at(t).clone(),
            Disturbance::Sine {
                offset,
                amplitude,
                frequency,
            } => offset + amplitude * Float::sin(2.0 * core::f64::consts::PI * frequency * t),
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Disturbance::Zero => None,
            Disturbance::Constant(w) => Some(w.len()),
            Disturbance::PiecewiseConstant(w) => w.values.first().map(|v| v.len()),
            Disturbance::Sine { offset, .. } => Some(offset.len()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub plant: Plant,
    pub controller: ControllerSpec,
    pub disturbance: Disturbance,
    /// Plant state at `t0` (tank levels in cm for the two-tank plant).
    pub x0: DVector<f64>,
    /// Integrator state at `t0`. `None` means `H(t0) x0` for the integral
    /// controller and zero for the tank controllers.
    pub v0: Option<DVector<f64>>,
    pub t0: f64,
    pub horizon: f64,
    pub sample_interval: f64,
    pub solver: SolverSettings,
    /// Componentwise input limits `(lower, upper)`.
    pub saturation: Option<(f64, f64)>,
}

impl Scenario {
    /// The tank case study: empty tanks, constant inflow `w`, pump limits `[0, Q]`.
    pub fn two_tank(params: TankParams, controller: ControllerSpec) -> Self {
        Self {
            plant: Plant::TwoTank(params),
            controller,
            disturbance: Disturbance::Constant(DVector::from_element(1, params.w)),
            x0: DVector::zeros(2),
            v0: None,
            t0: 0.0,
            horizon: params.horizon,
            sample_interval: 0.1,
            solver: SolverSettings::rk4(0.01),
            saturation: Some((0.0, params.q_sat)),
        }
    }

    /// Linear plant without disturbance or saturation.
    pub fn linear(sys: LtvSystem, controller: ControllerSpec, x0: DVector<f64>, horizon: f64) -> Self {
        Self {
            plant: Plant::Linear(sys),
            controller,
            disturbance: Disturbance::Zero,
            x0,
            v0: None,
            t0: 0.0,
            horizon,
            sample_interval: 0.1,
            solver: SolverSettings::rk4(0.01),
            saturation: None,
        }
    }

    pub fn with_disturbance(mut self, disturbance: Disturbance) -> Self {
        self.disturbance = disturbance;
        self
    }

    /// Sample times `t0 + k Δ` up to and including `t0 + horizon`.
    pub fn sample_times(&self) -> Vec<f64> {
        let count = Float::ceil(self.horizon / self.sample_interval - 1e-9) as usize;
        let end = self.t0 + self.horizon;
        (0..=count)
            .map(|k| (self.t0 + k as f64 * self.sample_interval).min(end))
            .collect()
    }

    fn dims(&self) -> (usize, usize, usize) {
        match &self.plant {
            Plant::TwoTank(_) => (2, 1, 1),
            Plant::Linear(sys) => {
                let d = sys.dims();
                (d.n, d.l, d.p)
            }
        }
    }

    fn integrator_dim(&self) -> usize {
        match &self.controller {
            ControllerSpec::Proposed { .. } | ControllerSpec::StandardI => 1,
            ControllerSpec::Integral(c) => c.dims().0,
            ControllerSpec::StateFeedback(_) | ControllerSpec::None => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.sample_interval > 0.0 && self.sample_interval.is_finite()) {
            return Err(Error::Invalid("sample interval must be positive".into()));
        }
        self.solver.validate()?;
        let (n, l, p) = self.dims();
        if self.x0.len() != n {
            return Err(Error::Shape {
                what: "initial state",
                expected: (n, 1),
                got: (self.x0.len(), 1),
            });
        }
        if let Some(dim) = self.disturbance.dim() {
            if dim != p {
                return Err(Error::Shape {
                    what: "disturbance",
                    expected: (p, 1),
                    got: (dim, 1),
                });
            }
        }
        if let Disturbance::Sine { offset, amplitude, .. } = &self.disturbance {
            if offset.len() != amplitude.len() {
                return Err(Error::Invalid("sine disturbance offset and amplitude differ in length".into()));
            }
        }
        if let Some((lo, hi)) = self.saturation {
            if !(lo <= hi) {
                return Err(Error::Invalid("saturation needs lower <= upper".into()));
            }
        }
        match (&self.plant, &self.controller) {
            (Plant::TwoTank(params), _) => {
                params.validate()?;
                if matches!(
                    self.controller,
                    ControllerSpec::Integral(_) | ControllerSpec::StateFeedback(_)
                ) {
                    return Err(Error::Invalid(
                        "the two-tank plant takes the proposed, standard-I or no controller".into(),
                    ));
                }
            }
            (Plant::Linear(_), ControllerSpec::Proposed { .. } | ControllerSpec::StandardI) => {
                return Err(Error::Invalid("tank controllers need the two-tank plant".into()));
            }
            (Plant::Linear(_), ControllerSpec::Integral(c)) => {
                if c.dims() != (l, n) {
                    return Err(Error::Shape {
                        what: "controller vs plant",
                        expected: (l, n),
                        got: c.dims(),
                    });
                }
            }
            (Plant::Linear(_), ControllerSpec::StateFeedback(k)) => {
                if k.shape() != (l, n) {
                    return Err(Error::Shape {
                        what: "K",
                        expected: (l, n),
                        got: k.shape(),
                    });
                }
            }
            (Plant::Linear(_), ControllerSpec::None) => {}
        }
        let m = self.integrator_dim();
        if let Some(v0) = &self.v0 {
            if v0.len() != m {
                return Err(Error::Shape {
                    what: "initial integrator state",
                    expected: (m, 1),
                    got: (v0.len(), 1),
                });
            }
        }
        Ok(())
    }
}

/// One recorded instant of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    /// Plant state (tank levels for the two-tank plant).
    pub x: DVector<f64>,
    /// Reference state (zero for linear plants).
    pub reference: DVector<f64>,
    pub v: DVector<f64>,
    /// Unconstrained control (absolute pump voltage `q` for the tanks).
    pub u: DVector<f64>,
    /// Applied control after saturation.
    pub u_star: DVector<f64>,
    pub w: DVector<f64>,
    /// Feedforward input (`qref` for the tanks, zero otherwise).
    pub u_ref: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub steps: usize,
    pub rejected: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Component `i` of the plant state.
    pub fn state(&self, i: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.x[i]).collect()
    }

    /// Component `i` of the reference.
    pub fn reference(&self, i: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.reference[i]).collect()
    }

    /// `(t, x(t) − xref(t))` pairs.
    pub fn errors(&self) -> Vec<(f64, DVector<f64>)> {
        self.samples.iter().map(|s| (s.t, &s.x - &s.reference)).collect()
    }

    /// Tracking metrics of state component `i` against its reference.
    pub fn tracking_metrics(&self, i: usize) -> TrackingMetrics {
        tracking_metrics(&self.times(), &self.state(i), &self.reference(i))
    }
}

struct Signals {
    reference: DVector<f64>,
    u: DVector<f64>,
    u_star: DVector<f64>,
    w: DVector<f64>,
    u_ref: DVector<f64>,
    dx: DVector<f64>,
    dv: DVector<f64>,
}

fn clamp(u: &DVector<f64>, limits: Option<(f64, f64)>) -> DVector<f64> {
    match limits {
        Some((lo, hi)) => u.map(|v| v.min(hi).max(lo)),
        None => u.clone(),
    }
}

/// Evaluates controller outputs and state derivatives at one instant.
fn signals(s: &Scenario, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> Result<Signals> {
    let (_, l, p) = s.dims();
    let w = s.disturbance.eval(t, p);
    match &s.plant {
        Plant::TwoTank(params) => {
            let r = tank::reference_trajectory(params, t)?;
            let z = [x[0], x[1]];
            let (q, dv) = match &s.controller {
                ControllerSpec::Proposed { antiwindup } => {
                    let c = ProposedTankController::new(*params).with_antiwindup(*antiwindup);
                    let q = c.control(&r, z, v[0]);
                    let q_star = clamp(&DVector::from_element(1, q), s.saturation)[0];
                    (q, vec![c.integrator_rate(&r, z, q, q_star)])
                }
                ControllerSpec::StandardI => {
                    let c = StandardIController::new(*params);
                    (c.control(&r, v[0]), vec![c.integrator_rate(&r, z)])
                }
                _ => (r.qref, vec![]),
            };
            let u = DVector::from_element(1, q);
            let u_star = clamp(&u, s.saturation);
            let dz = tank::two_tank_rhs(params, z, u_star[0], w[0]);
            Ok(Signals {
                reference: DVector::from_column_slice(&[r.zref1, r.zref2]),
                u,
                u_star,
                w,
                u_ref: DVector::from_element(1, r.qref),
                dx: DVector::from_column_slice(&dz),
                dv: DVector::from_vec(dv),
            })
        }
        Plant::Linear(sys) => {
            let (u, integral) = match &s.controller {
                ControllerSpec::Integral(c) => {
                    let state = ControllerState { v: v.clone() };
                    (c.control_output(t, x, &state)?, Some(c))
                }
                ControllerSpec::StateFeedback(k) => (-(k.eval(t)? * x), None),
                _ => (DVector::zeros(l), None),
            };
            let u_star = clamp(&u, s.saturation);
            let m = sys.eval(t)?;
            let dx = &m.a * x + &m.b * &u_star + &m.f * &w;
            let dv = match integral {
                Some(c) => c.integrator_rate(sys, t, x, &u, &u_star)?,
                None => DVector::zeros(0),
            };
            Ok(Signals {
                reference: DVector::zeros(x.len()),
                u,
                u_star,
                w,
                u_ref: DVector::zeros(l),
                dx,
                dv,
            })
        }
    }
}

/// Co-integrates plant and controller states and records every sample time.
pub fn run_scenario(s: &Scenario) -> Result<Trajectory> {
    s.validate()?;
    let n = s.x0.len();
    let m = s.integrator_dim();
    let v0 = match (&s.v0, &s.controller) {
        (Some(v0), _) => v0.clone(),
        (None, ControllerSpec::Integral(c)) => c.init_integrator(s.t0, &s.x0)?.v,
        (None, _) => DVector::zeros(m),
    };
    let mut y0 = s.x0.as_slice().to_vec();
    y0.extend_from_slice(v0.as_slice());
    let times = s.sample_times();
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let x = DVector::from_column_slice(&y[..n]);
        let v = DVector::from_column_slice(&y[n..]);
        let sig = signals(s, t, &x, &v)?;
        dy[..n].copy_from_slice(sig.dx.as_slice());
        dy[n..].copy_from_slice(sig.dv.as_slice());
        Ok(())
    };
    let sol = integrate(rhs, &y0, (s.t0, s.t0 + s.horizon), &s.solver, &times)?;
    let mut samples = Vec::with_capacity(sol.samples.len());
    for (t, y) in &sol.samples {
        let x = DVector::from_column_slice(&y[..n]);
        let v = DVector::from_column_slice(&y[n..]);
        let sig = signals(s, *t, &x, &v)?;
        samples.push(Sample {
            t: *t,
            x,
            reference: sig.reference,
            v,
            u: sig.u,
            u_star: sig.u_star,
            w: sig.w,
            u_ref: sig.u_ref,
        });
    }
    Ok(Trajectory {
        samples,
        steps: sol.steps,
        rejected: sol.rejected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingMetrics {
    /// Time of the last entry into the ±2 % band; `0` if the signal never
    /// leaves it and `+∞` if the final sample lies outside.
    pub settling_time_2pct: f64,
    /// `max(0, max_t (y − r − band))`, the largest excursion above the band.
    pub max_overshoot: f64,
    /// Sign changes of `y − r` after the first band entry, with hysteresis.
    pub oscillation_count: usize,
    /// `|y − r|` at the last sample.
    pub final_error: f64,
}

/// Settling, overshoot and oscillation metrics of `y` against `r` on a common grid.
///
/// The band half-width is `0.02 |r(t)|`. Sign changes are counted once the
/// error has crossed `±10⁻³` band half-widths, so numerical chatter around
/// zero does not register.
pub fn tracking_metrics(times: &[f64], y: &[f64], r: &[f64]) -> TrackingMetrics {
    let len = times.len().min(y.len()).min(r.len());
    if len == 0 {
        return TrackingMetrics {
            settling_time_2pct: f64::INFINITY,
            max_overshoot: 0.0,
            oscillation_count: 0,
            final_error: f64::INFINITY,
        };
    }
    let err: Vec<f64> = (0..len).map(|i| y[i] - r[i]).collect();
    let band: Vec<f64> = (0..len).map(|i| SETTLING_BAND * r[i].abs()).collect();
    let inside = |i: usize| err[i].abs() <= band[i];

    let settling_time_2pct = match (0..len).rev().find(|&i| !inside(i)) {
        None => times[0],
        Some(i) if i + 1 == len => f64::INFINITY,
        Some(i) => {
            // Interpolate where the excess |e| − band crosses zero on [t_i, t_{i+1}].
            let g0 = err[i].abs() - band[i];
            let g1 = err[i + 1].abs() - band[i + 1];
            let frac = if g0 - g1 > 0.0 { g0 / (g0 - g1) } else { 1.0 };
            times[i] + frac * (times[i + 1] - times[i])
        }
    } - times[0];

    let max_overshoot = (0..len).map(|i| err[i] - band[i]).fold(0.0, f64::max);

    let mut oscillation_count = 0;
    if let Some(first) = (0..len).find(|&i| inside(i)) {
        let mut sign = 0i8;
        for i in first..len {
            let dead = OSCILLATION_DEADBAND * band[i];
            let s = if err[i] > dead {
                1
            } else if err[i] < -dead {
                -1
            } else {
                0
            };
            if s != 0 {
                if sign != 0 && s != sign {
                    oscillation_count += 1;
                }
                sign = s;
            }
        }
    }

    TrackingMetrics {
        settling_time_2pct,
        max_overshoot,
        oscillation_count,
        final_error: err[len - 1].abs(),
    }
}

/// `max |y − r|` over the trailing `fraction` of the time span.
pub fn tail_error(times: &[f64], y: &[f64], r: &[f64], fraction: f64) -> f64 {
    let Some((&start, &end)) = times.first().zip(times.last()) else {
        return f64::INFINITY;
    };
    let cutoff = end - fraction * (end - start);
    times
        .iter()
        .zip(y.iter().zip(r))
        .filter(|(t, _)| **t >= cutoff)
        .map(|(_, (y, r))| (y - r).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn grid(end: f64, dt: f64) -> Vec<f64> {
        let n = Float::round(end / dt) as usize;
        (0..=n).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn perfect_tracking() {
        let t = grid(10.0, 0.1);
        let r = vec![7.0; t.len()];
        let m = tracking_metrics(&t, &r, &r);
        assert_eq!(m.settling_time_2pct, 0.0);
        assert_eq!(m.oscillation_count, 0);
        assert_eq!(m.max_overshoot, 0.0);
        assert_eq!(m.final_error, 0.0);
    }

    #[test]
    fn exponential_band_crossing() {
        let t = grid(10.0, 0.1);
        let r = vec![7.0; t.len()];
        let y: Vec<f64> = t.iter().map(|&t| 7.0 + Float::exp(-t)).collect();
        let m = tracking_metrics(&t, &y, &r);
        let exact = Float::ln(1.0 / 0.14);
        assert!((m.settling_time_2pct - exact).abs() < 2e-3, "{}", m.settling_time_2pct);
        assert_eq!(m.oscillation_count, 0);
        assert!((m.max_overshoot - (1.0 - 0.14)).abs() < 1e-12);
    }

    #[test]
    fn diverging_error_never_settles() {
        let t = grid(5.0, 0.1);
        let r = vec![7.0; t.len()];
        let y: Vec<f64> = t.iter().map(|&t| 7.0 + 0.01 * Float::exp(t)).collect();
        assert_eq!(tracking_metrics(&t, &y, &r).settling_time_2pct, f64::INFINITY);
    }

    #[test]
    fn oscillations_ignore_chatter() {
        let t = grid(100.0, 0.1);
        let r = vec![10.0; t.len()];
        let y: Vec<f64> = t.iter().map(|&t| 10.0 + 0.1 * Float::sin(t)).collect();
        // sin(t) changes sign at π, 2π, ..., 31π within 100 s.
        assert_eq!(tracking_metrics(&t, &y, &r).oscillation_count, 31);
        let chatter: Vec<f64> = t.iter().enumerate().map(|(i, _)| 10.0 + if i % 2 == 0 { 1e-6 } else { -1e-6 }).collect();
        assert_eq!(tracking_metrics(&t, &chatter, &r).oscillation_count, 0);
    }

    #[test]
    fn tail_error_window() {
        let t = grid(10.0, 1.0);
        let y: Vec<f64> = t.iter().map(|&t| if t < 8.0 { 5.0 } else { 0.1 }).collect();
        let r = vec![0.0; t.len()];
        assert_eq!(tail_error(&t, &y, &r, 0.2), 0.1);
        assert_eq!(tail_error(&t, &y, &r, 0.5), 5.0);
    }

    #[test]
    fn sample_grid_ends_on_horizon() {
        let p = TankParams {
            horizon: 1.05,
            ..TankParams::default()
        };
        let s = Scenario::two_tank(p, ControllerSpec::None);
        let times = s.sample_times();
        assert_eq!(times.len(), 12);
        assert_eq!(*times.last().unwrap(), 1.05);
    }

    #[test]
    fn reference_consistency_open_loop() {
        let p = TankParams {
            horizon: 10.0,
            w: 0.0,
            ..TankParams::default()
        };
        let r0 = tank::reference_trajectory(&p, 0.0).unwrap();
        let mut s = Scenario::two_tank(p, ControllerSpec::None);
        s.x0 = DVector::from_column_slice(&[r0.zref1, r0.zref2]);
        let traj = run_scenario(&s).unwrap();
        for sample in &traj.samples {
            assert!((&sample.x - &sample.reference).amax() < 1e-9);
        }
    }

    #[test]
    fn nominal_output_preserved_on_linear_plant() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.5]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let sys = LtvSystem::time_invariant(a, b.clone(), b.clone(), DMatrix::identity(2, 2)).unwrap();
        let k = MatrixFunction::constant(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]));
        let ctrl = IntegralController::new(
            k.clone(),
            MatrixFunction::constant(b.transpose()),
            DMatrix::from_element(1, 1, 2.0),
        )
        .unwrap();
        let x0 = DVector::from_column_slice(&[1.0, -1.0]);
        let with_integral = run_scenario(&Scenario::linear(sys.clone(), ControllerSpec::Integral(ctrl), x0.clone(), 20.0)).unwrap();
        let nominal = run_scenario(&Scenario::linear(sys, ControllerSpec::StateFeedback(k.clone()), x0, 20.0)).unwrap();
        for (a, b) in with_integral.samples.iter().zip(&nominal.samples) {
            assert!((&a.x - &b.x).amax() < 1e-12);
            assert!((&a.u + k.eval(a.t).unwrap() * &a.x).amax() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let s = Scenario {
            x0: DVector::zeros(3),
            ..Scenario::two_tank(TankParams::default(), ControllerSpec::StandardI)
        };
        assert!(matches!(run_scenario(&s), Err(Error::Shape { .. })));
        let s = Scenario::two_tank(TankParams::default(), ControllerSpec::StateFeedback(MatrixFunction::zeros(1, 2)));
        assert!(matches!(run_scenario(&s), Err(Error::Invalid(_))));
    }
}
