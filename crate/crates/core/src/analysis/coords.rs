use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::linalg::{lambda_max, lambda_min, pseudo_inverse};
use crate::ltv::{LtvSystem, MatrixFunction};
use crate::{Error, Result};

/// `z = −Kᵢ H(t) x + Kᵢ v + w0`.
pub fn z_coordinate(
    t: f64,
    x: &DVector<f64>,
    v: &DVector<f64>,
    w0: &DVector<f64>,
    h: &MatrixFunction,
    ki: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    Ok(ki * (v - h.eval(t)? * x) + w0)
}

/// `w̃ = F(t) w − B(t) w0`.
pub fn wtilde(t: f64, w: &DVector<f64>, w0: &DVector<f64>, sys: &LtvSystem) -> Result<DVector<f64>> {
    Ok(sys.f.eval(t)? * w - sys.b.eval(t)? * w0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeCheck {
    pub holds: bool,
    /// Largest `‖z(t)‖ / envelope(t) − 1` over all samples (negative when strictly inside).
    pub max_violation: f64,
}

/// Checks `‖z(t)‖ ≤ e^{αβT} √(λmax/λmin) e^{−αβ(t−t0)} ‖z(t0)‖ (1 + tol)`
/// for every sample; `t0` and `z(t0)` are the first sample.
pub fn verify_exponential_envelope(
    z_traj: &[(f64, DVector<f64>)],
    alpha: f64,
    beta: f64,
    t_window: f64,
    ki: &DMatrix<f64>,
    tol: f64,
) -> EnvelopeCheck {
    let Some((t0, z0)) = z_traj.first() else {
        return EnvelopeCheck {
            holds: true,
            max_violation: f64::NEG_INFINITY,
        };
    };
    let spread = Float::sqrt(lambda_max(ki) / lambda_min(ki));
    let rate = alpha * beta;
    let z0 = z0.norm();
    let mut max_violation = f64::NEG_INFINITY;
    let mut holds = true;
    for (t, z) in z_traj {
        let envelope = Float::exp(rate * t_window) * spread * Float::exp(-rate * (t - t0)) * z0;
        let norm = z.norm();
        if norm > envelope * (1.0 + tol) {
            holds = false;
        }
        let violation = if envelope > 0.0 {
            norm / envelope - 1.0
        } else if norm > 0.0 {
            f64::INFINITY
        } else {
            -1.0
        };
        max_violation = max_violation.max(violation);
    }
    EnvelopeCheck { holds, max_violation }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisturbanceClass {
    /// `F(t) = B(t) D(t)` at every sample and `F w − B w0 → 0`.
    Matched,
    /// `F w − B w0 → 0` without exact matching.
    AsymptoticallyConstant,
    Unclassified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceReport {
    pub class: DisturbanceClass,
    pub w0: DVector<f64>,
    /// `(t, ‖F(t)w(t) − B(t)w0‖)` for every sample.
    pub residuals: Vec<(f64, f64)>,
    /// Largest residual over the final tenth of the samples.
    pub tail: f64,
}

/// Tail residual, relative to the peak of `‖F w‖`, below which the residual
/// counts as decayed.
pub const TAIL_RTOL: f64 = 1e-3;

/// Classifies a sampled disturbance by the tail of `‖F(t)w(t) − B(t)w0‖`.
///
/// Without a candidate, `w0` is the least-squares fit of `B(t) w0 ≈ F(t) w(t)`
/// over the final fifth of the samples.
pub fn classify_disturbance(
    w_samples: &[(f64, DVector<f64>)],
    sys: &LtvSystem,
    candidate_w0: Option<&DVector<f64>>,
) -> Result<DisturbanceReport> {
    let dims = sys.dims();
    if w_samples.is_empty() {
        return Err(Error::Invalid("disturbance classification needs samples".into()));
    }
    let mut fw = Vec::with_capacity(w_samples.len());
    let mut bs = Vec::with_capacity(w_samples.len());
    let mut matched = true;
    for (t, w) in w_samples {
        if w.len() != dims.p {
            return Err(Error::Shape {
                what: "disturbance sample",
                expected: (dims.p, 1),
                got: (w.len(), 1),
            });
        }
        let b = sys.b.eval(*t)?;
        let f = sys.f.eval(*t)?;
        // F lies in the range of B iff B B⁺ F = F.
        let projected = &b * pseudo_inverse(&b).0 * &f;
        if (projected - &f).norm() > 1e-9 * f.norm().max(1.0) {
            matched = false;
        }
        fw.push(f * w);
        bs.push(b);
    }
    let w0 = match candidate_w0 {
        Some(w0) => {
            if w0.len() != dims.l {
                return Err(Error::Shape {
                    what: "candidate w0",
                    expected: (dims.l, 1),
                    got: (w0.len(), 1),
                });
            }
            w0.clone()
        }
        None => {
            let start = w_samples.len() - (w_samples.len() / 5).max(1);
            let rows = (w_samples.len() - start) * dims.n;
            let mut stacked_b = DMatrix::zeros(rows, dims.l);
            let mut stacked_fw = DVector::zeros(rows);
            for (k, i) in (start..w_samples.len()).enumerate() {
                stacked_b.view_mut((k * dims.n, 0), (dims.n, dims.l)).copy_from(&bs[i]);
                stacked_fw.rows_mut(k * dims.n, dims.n).copy_from(&fw[i]);
            }
            pseudo_inverse(&stacked_b).0 * stacked_fw
        }
    };
    let residuals: Vec<(f64, f64)> = w_samples
        .iter()
        .zip(fw.iter().zip(&bs))
        .map(|((t, _), (fw, b))| (*t, (fw - b * &w0).norm()))
        .collect();
    let tail_start = residuals.len() - (residuals.len() / 10).max(1);
    let tail = residuals[tail_start..].iter().map(|r| r.1).fold(0.0, f64::max);
    let scale = fw.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let decayed = tail <= TAIL_RTOL * scale + 1e-12;
    let class = match (decayed, matched) {
        (true, true) => DisturbanceClass::Matched,
        (true, false) => DisturbanceClass::AsymptoticallyConstant,
        (false, _) => DisturbanceClass::Unclassified,
    };
    Ok(DisturbanceReport {
        class,
        w0,
        residuals,
        tail,
    })
}
