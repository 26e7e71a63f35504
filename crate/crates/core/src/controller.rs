//! The performance-preserving integral state-feedback law.
//!
//! ```text
//! u  = −[K(t) + Kᵢ H(t)] x + Kᵢ v
//! v̇  = G(t) x + H(t) B(t) (u* − u)      (second term only with anti-windup)
//! G  = Ḣ(t) + H(t) [A(t) − B(t) K(t)]
//! ```
//!
//! With `v(t0) = H(t0) x(t0)` and no disturbance, `v ≡ H x` and the control
//! reduces to the nominal `u = −K(t) x`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{lambda_max, lambda_min, relative_asymmetry, symmetric_eigenvalues, sqrt};
use crate::ltv::{LtvSystem, MatrixFunction};
use crate::{Error, Result};

/// Largest relative asymmetry of `Kᵢ` that is silently symmetrised.
pub const KI_SYMMETRY_TOL: f64 = 1e-12;

/// Floor on the normalising eigenvalue of the normalised `H` variants.
pub const DEGENERATE_INPUT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct IntegralController {
    k: MatrixFunction,
    h: MatrixFunction,
    ki: DMatrix<f64>,
    antiwindup: bool,
}

/// Integrator state `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub v: DVector<f64>,
}

impl IntegralController {
    /// `k` and `h` must both be `l×n`, `ki` `l×l` and symmetric.
    pub fn new(k: MatrixFunction, h: MatrixFunction, ki: DMatrix<f64>) -> Result<Self> {
        let (l, n) = k.shape();
        if h.shape() != (l, n) {
            return Err(Error::Shape {
                what: "H",
                expected: (l, n),
                got: h.shape(),
            });
        }
        if ki.shape() != (l, l) {
            return Err(Error::Shape {
                what: "Ki",
                expected: (l, l),
                got: ki.shape(),
            });
        }
        let asymmetry = relative_asymmetry(&ki);
        if asymmetry > KI_SYMMETRY_TOL {
            return Err(Error::Asymmetric(asymmetry));
        }
        let ki = (&ki + ki.transpose()) * 0.5;
        Ok(Self {
            k,
            h,
            ki,
            antiwindup: false,
        })
    }

    /// Like [`IntegralController::new`] but additionally requires `λmin(Kᵢ) > 0`.
    pub fn new_positive_definite(k: MatrixFunction, h: MatrixFunction, ki: DMatrix<f64>) -> Result<Self> {
        let ctrl = Self::new(k, h, ki)?;
        let alpha = ctrl.ki_min();
        if !(alpha > 0.0) {
            return Err(Error::NotPositiveDefinite(alpha));
        }
        Ok(ctrl)
    }

    pub fn with_antiwindup(mut self, enabled: bool) -> Self {
        self.antiwindup = enabled;
        self
    }

    pub fn antiwindup(&self) -> bool {
        self.antiwindup
    }

    pub fn k(&self) -> &MatrixFunction {
        &self.k
    }

    pub fn h(&self) -> &MatrixFunction {
        &self.h
    }

    pub fn ki(&self) -> &DMatrix<f64> {
        &self.ki
    }

    /// `λmin(Kᵢ)`.
    pub fn ki_min(&self) -> f64 {
        lambda_min(&self.ki)
    }

    /// `λmax(Kᵢ)`.
    pub fn ki_max(&self) -> f64 {
        lambda_max(&self.ki)
    }

    /// Input and state dimension `(l, n)`.
    pub fn dims(&self) -> (usize, usize) {
        self.k.shape()
    }

    fn check_plant(&self, sys: &LtvSystem) -> Result<()> {
        let d = sys.dims();
        if self.dims() != (d.l, d.n) {
            return Err(Error::Shape {
                what: "controller vs plant",
                expected: (d.l, d.n),
                got: self.dims(),
            });
        }
        Ok(())
    }

    /// `G(t) = Ḣ(t) + H(t)[A(t) − B(t)K(t)]`, evaluated on demand.
    pub fn compute_g(&self, sys: &LtvSystem, t: f64) -> Result<DMatrix<f64>> {
        self.check_plant(sys)?;
        let h = self.h.eval(t)?;
        let a_cl = sys.a.eval(t)? - sys.b.eval(t)? * self.k.eval(t)?;
        Ok(self.h.derivative(t)? + h * a_cl)
    }

    /// `v(t0) = H(t0) x(t0)`.
    pub fn init_integrator(&self, t0: f64, x0: &DVector<f64>) -> Result<ControllerState> {
        Ok(ControllerState {
            v: self.h.eval(t0)? * x0,
        })
    }

    /// Unconstrained control `u = −[K + Kᵢ H] x + Kᵢ v`.
    pub fn control_output(&self, t: f64, x: &DVector<f64>, state: &ControllerState) -> Result<DVector<f64>> {
        let k = self.k.eval(t)?;
        let h = self.h.eval(t)?;
        // Kᵢ (v − H x) keeps the integral contribution exactly zero on the nominal manifold.
        Ok(-(k * x) + &self.ki * (&state.v - h * x))
    }

    /// `v̇`; the anti-windup term `H B (u* − u)` is added only when enabled.
    pub fn integrator_rate(
        &self,
        sys: &LtvSystem,
        t: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
        u_star: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let rate = self.compute_g(sys, t)? * x;
        if !self.antiwindup {
            return Ok(rate);
        }
        let hb = self.h.eval(t)? * sys.b.eval(t)?;
        Ok(rate + hb * (u_star - u))
    }
}

/// Heuristics for the feedback matrix `H(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HChoice {
    /// `Bᵀ`
    Transpose,
    /// `Bᵀ / ‖B‖²`
    Normalized,
    /// `Bᵀ / λmin(BᵀB)`
    EigenNormalized,
    /// `Bᵀ / max(λmin(BᵀB), L)`
    Floored(f64),
}

/// Builds `H(t)` from `B(t)` and verifies the normalisation at `check_times`.
///
/// Only the transpose variant forwards an analytic `Ḃ`; all other variants
/// rely on the central-difference fallback for `Ḣ`.
pub fn choose_h(sys: &LtvSystem, variant: HChoice, check_times: &[f64]) -> Result<MatrixFunction> {
    let b = sys.b.clone();
    let (n, l) = b.shape();
    let h = match variant {
        HChoice::Transpose => return Ok(b.transpose()),
        HChoice::Floored(floor) if !(floor > 0.0) => {
            return Err(Error::Invalid("floor L must be positive".into()));
        }
        HChoice::Normalized | HChoice::EigenNormalized | HChoice::Floored(_) => {
            let inner = b.clone();
            let mut h = MatrixFunction::try_from_fn(l, n, move |t| {
                let b = inner.eval(t)?;
                let denom = normaliser(&b, variant);
                if !(denom >= DEGENERATE_INPUT_FLOOR) {
                    return Err(Error::DegenerateInput { t, value: denom });
                }
                Ok(b.transpose() / denom)
            });
            if b.is_constant() {
                h = MatrixFunction::constant(h.eval(check_times.first().copied().unwrap_or(0.0))?);
            }
            h
        }
    };
    for &t in check_times {
        h.eval(t)?;
    }
    Ok(h)
}

fn normaliser(b: &DMatrix<f64>, variant: HChoice) -> f64 {
    let gram = b.transpose() * b;
    match variant {
        HChoice::Transpose => 1.0,
        HChoice::Normalized => lambda_max(&gram),
        HChoice::EigenNormalized => lambda_min(&gram),
        HChoice::Floored(floor) => lambda_min(&gram).max(floor),
    }
}

/// `Kᵢ = (μ*/β)·I`: the smallest scalar gain with `λmin(Kᵢ) ≥ μ*/β`.
pub fn tune_ki(beta: f64, mu_star: f64, l: usize) -> Result<DMatrix<f64>> {
    if !(beta > 0.0 && mu_star > 0.0) {
        return Err(Error::Invalid("tune_ki needs positive beta and mu_star".into()));
    }
    Ok(DMatrix::identity(l, l) * (mu_star / beta))
}

/// Eigen-extremes of `Kᵢ` and the `√(λmax/λmin)` conditioning factor.
pub fn ki_spread(ki: &DMatrix<f64>) -> (f64, f64, f64) {
    let eig: Vec<f64> = symmetric_eigenvalues(ki);
    let lo = eig.first().copied().unwrap_or(0.0);
    let hi = eig.last().copied().unwrap_or(0.0);
    (lo, hi, sqrt(hi / lo))
}
