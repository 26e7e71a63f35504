//! Two coupled tanks: the lower tank level follows a sinusoidal reference
//! while a constant inflow disturbance acts on the upper tank.
//!
//! ```text
//! ż1 = −c1 √z1 + c3 q + w
//! ż2 =  c1 √z1 − c2 √z2
//! ```
//!
//! Levels are in cm, the pump voltage `q` in V, time in s.

use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::controller::IntegralController;
use crate::linalg::sqrt;
use crate::ltv::{LtvSystem, MatrixFunction};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TankParams {
    /// Outflow coefficient of the upper tank, √cm/s.
    pub c1: f64,
    /// Outflow coefficient of the lower tank, √cm/s.
    pub c2: f64,
    /// Pump gain, cm/(V·s).
    pub c3: f64,
    /// Reference offset, cm.
    pub c4: f64,
    /// Reference amplitude, cm.
    pub c5: f64,
    /// Reference frequency, Hz.
    pub c6: f64,
    /// Inflow disturbance, cm/s.
    pub w: f64,
    /// Pump saturation limit, V.
    pub q_sat: f64,
    /// Simulation horizon, s.
    pub horizon: f64,
    /// Entry of `H = [α α]` of the proposed controller.
    pub alpha: f64,
    /// Integrator gain of the standard I-controller, 1/s.
    pub beta_i: f64,
    /// Integral gain `kI`.
    pub ki: f64,
}

impl Default for TankParams {
    fn default() -> Self {
        Self {
            c1: 0.513,
            c2: 0.513,
            c3: 0.299,
            c4: 7.0,
            c5: 2.0,
            c6: 0.008,
            w: 0.5,
            q_sat: 8.0,
            horizon: 500.0,
            alpha: 0.12,
            beta_i: 0.0062,
            ki: 1.0,
        }
    }
}

impl TankParams {
    /// Checks positivity of the coefficients and that `r(t) = c4 + c5 sin(2π c6 t)`
    /// stays strictly positive (`c4 > c5 ≥ 0`).
    pub fn validate(&self) -> Result<()> {
        let positive = [
            (self.c1, "c1"),
            (self.c2, "c2"),
            (self.c3, "c3"),
            (self.c6, "c6"),
            (self.q_sat, "Q_sat"),
            (self.horizon, "horizon"),
        ];
        for (value, name) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Domain(alloc::format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.c5 >= 0.0) {
            return Err(Error::Domain(alloc::format!("c5 must be nonnegative, got {}", self.c5)));
        }
        if !(self.c4 > self.c5) {
            return Err(Error::Domain(alloc::format!(
                "reference c4 + c5 sin(.) must stay positive: need c4 > c5, got c4 = {}, c5 = {}",
                self.c4,
                self.c5
            )));
        }
        if !(self.w.is_finite() && self.alpha.is_finite() && self.beta_i.is_finite() && self.ki.is_finite()) {
            return Err(Error::Domain("tank parameters must be finite".into()));
        }
        Ok(())
    }

    fn omega(&self) -> f64 {
        2.0 * PI * self.c6
    }

    /// `r(t)`, `ṙ(t)`, `r̈(t)`.
    pub fn reference_level(&self, t: f64) -> (f64, f64, f64) {
        let (s, c) = Float::sin_cos(self.omega() * t);
        let w = self.omega();
        (self.c4 + self.c5 * s, self.c5 * w * c, -self.c5 * w * w * s)
    }
}

/// Reference state, its derivative and the feedforward input at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub zref1: f64,
    pub zref2: f64,
    pub dzref1: f64,
    pub dzref2: f64,
    pub qref: f64,
}

/// Flat reference `zref2 = r`, `zref1 = c1⁻²(c2√r + ṙ)²` and the matching
/// feedforward `qref = (żref1 + c1√zref1) / c3`.
pub fn reference_trajectory(p: &TankParams, t: f64) -> Result<Reference> {
    let (r, dr, ddr) = p.reference_level(t);
    if !(r > 0.0) {
        return Err(Error::Domain(alloc::format!("reference level r({t}) = {r} is not positive")));
    }
    let sr = sqrt(r);
    let s = p.c2 * sr + dr;
    if !(s > 0.0) {
        return Err(Error::Domain(alloc::format!("upper-tank reference is not positive at t = {t}")));
    }
    let ds = p.c2 * dr / (2.0 * sr) + ddr;
    let c1sq = p.c1 * p.c1;
    let zref1 = s * s / c1sq;
    let dzref1 = 2.0 * s * ds / c1sq;
    // √zref1 = s / c1 because s > 0.
    let qref = (dzref1 + s) / p.c3;
    Ok(Reference {
        zref1,
        zref2: r,
        dzref1,
        dzref2: dr,
        qref,
    })
}

fn clamped_sqrt(level: f64, which: &str) -> f64 {
    if level < 0.0 {
        log::warn!("negative {which} level {level} clamped to zero under the square root");
        0.0
    } else {
        sqrt(level)
    }
}

/// Nonlinear tank dynamics for the applied (already saturated) pump voltage.
pub fn two_tank_rhs(p: &TankParams, z: [f64; 2], q_applied: f64, w: f64) -> [f64; 2] {
    let out1 = p.c1 * clamped_sqrt(z[0], "upper tank");
    let out2 = p.c2 * clamped_sqrt(z[1], "lower tank");
    [-out1 + p.c3 * q_applied + w, out1 - out2]
}

/// `q* = max(0, min(Q, q))`.
pub fn saturate(q: f64, q_sat: f64) -> f64 {
    q.min(q_sat).max(0.0)
}

/// Linearisation along the reference in error coordinates `x = z − zref`:
///
/// ```text
/// A(t) = [ −c1/(2√zref1)        0        ]   B = [c3]   F = [1]   C = I
///        [  c1/(2√zref1)  −c2/(2√zref2)  ]       [ 0]       [0]
/// ```
pub fn linearized_system(p: &TankParams) -> Result<LtvSystem> {
    p.validate()?;
    let params = *p;
    let a = MatrixFunction::try_from_fn(2, 2, move |t| {
        let r = reference_trajectory(&params, t)?;
        let k1 = params.c1 / (2.0 * sqrt(r.zref1));
        let k2 = params.c2 / (2.0 * sqrt(r.zref2));
        Ok(DMatrix::from_row_slice(2, 2, &[-k1, 0.0, k1, -k2]))
    });
    LtvSystem::new(
        a,
        MatrixFunction::constant(DMatrix::from_column_slice(2, 1, &[p.c3, 0.0])),
        MatrixFunction::constant(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])),
        MatrixFunction::constant(DMatrix::identity(2, 2)),
    )
}

/// The proposed law written out for the tank:
///
/// ```text
/// q = qref − kI α (z1 − zref1 + z2 − zref2) + kI v
/// v̇ = −α c2 / (2√zref2) (z2 − zref2) + α c3 (q* − q)
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposedTankController {
    pub params: TankParams,
    pub antiwindup: bool,
}

impl ProposedTankController {
    pub fn new(params: TankParams) -> Self {
        Self {
            params,
            antiwindup: true,
        }
    }

    pub fn with_antiwindup(mut self, enabled: bool) -> Self {
        self.antiwindup = enabled;
        self
    }

    pub fn control(&self, r: &Reference, z: [f64; 2], v: f64) -> f64 {
        let p = &self.params;
        r.qref - p.ki * p.alpha * (z[0] - r.zref1 + z[1] - r.zref2) + p.ki * v
    }

    pub fn integrator_rate(&self, r: &Reference, z: [f64; 2], q: f64, q_star: f64) -> f64 {
        let p = &self.params;
        let rate = -p.alpha * p.c2 / (2.0 * sqrt(r.zref2)) * (z[1] - r.zref2);
        if self.antiwindup {
            rate + p.alpha * p.c3 * (q_star - q)
        } else {
            rate
        }
    }

    /// The same law as a generic integral controller on [`linearized_system`]:
    /// `K = 0`, `H = [α α]`, `Kᵢ = [kI]`. Its input is `q − qref`.
    pub fn generic(&self) -> Result<(LtvSystem, IntegralController)> {
        let p = &self.params;
        let sys = linearized_system(p)?;
        let ctrl = IntegralController::new(
            MatrixFunction::zeros(1, 2),
            MatrixFunction::constant(DMatrix::from_row_slice(1, 2, &[p.alpha, p.alpha])),
            DMatrix::from_element(1, 1, p.ki),
        )?
        .with_antiwindup(self.antiwindup);
        Ok((sys, ctrl))
    }
}

/// Output-error integrator `q = qref + kI v`, `v̇ = −β (z2 − zref2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardIController {
    pub params: TankParams,
}

impl StandardIController {
    pub fn new(params: TankParams) -> Self {
        Self { params }
    }

    pub fn control(&self, r: &Reference, v: f64) -> f64 {
        r.qref + self.params.ki * v
    }

    pub fn integrator_rate(&self, r: &Reference, z: [f64; 2]) -> f64 {
        -self.params.beta_i * (z[1] - r.zref2)
    }
}

/// Error state `z − zref` as a vector.
pub fn error_state(r: &Reference, z: [f64; 2]) -> DVector<f64> {
    DVector::from_column_slice(&[z[0] - r.zref1, z[1] - r.zref2])
}
