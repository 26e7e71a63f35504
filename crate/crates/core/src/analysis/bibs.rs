use alloc::vec::Vec;

use nalgebra::DVector;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::stability::StabilityReport;
use crate::controller::IntegralController;
use crate::linalg::{lambda_max, lambda_min, norm2};
use crate::ltv::{LtvSystem, UesEstimate};
use crate::{Error, Result};

/// Inflation applied to grid maxima when they stand in for uniform bounds.
pub const BOUND_INFLATION: f64 = 1.01;

/// Constants entering the bounded-input bounded-state gain.
#[derive(Debug, Clone, PartialEq)]
pub struct BibsBounds {
    pub b_bound: f64,
    pub f_bound: f64,
    pub h_bound: f64,
    /// UES constants of the nominal loop `A − BK`.
    pub m: f64,
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub t_window: f64,
    pub ki_min: f64,
    pub ki_max: f64,
}

impl BibsBounds {
    /// Collects the bounds for a controlled plant. `‖B‖`, `‖F‖`, `‖H‖` use the
    /// declared bounds when present, else the grid maximum inflated by 1 %.
    pub fn collect(
        sys: &LtvSystem,
        ctrl: &IntegralController,
        ues: &UesEstimate,
        report: &StabilityReport,
        grid: &[f64],
    ) -> Result<Self> {
        let sup = |m: &crate::ltv::MatrixFunction| -> Result<f64> {
            if let Some(b) = m.declared_bound() {
                return Ok(b);
            }
            let mut max = 0.0f64;
            for &t in grid {
                max = max.max(norm2(&m.eval(t)?));
            }
            Ok(max * BOUND_INFLATION)
        };
        Ok(Self {
            b_bound: sup(&sys.b)?,
            f_bound: sup(&sys.f)?,
            h_bound: sup(ctrl.h())?,
            m: ues.m,
            mu: ues.mu,
            alpha: report.alpha,
            beta: report.beta,
            t_window: report.t_window,
            ki_min: lambda_min(ctrl.ki()),
            ki_max: lambda_max(ctrl.ki()),
        })
    }
}

/// `γ = (B M/μ) e^{αβT} √(λmax/λmin) (λmax/α) (H F/β) + F M/μ`.
pub fn bibs_gain(bounds: &BibsBounds) -> Result<f64> {
    let b = bounds;
    let positive = [
        (b.b_bound, "B bound"),
        (b.f_bound, "F bound"),
        (b.h_bound, "H bound"),
        (b.m, "M"),
        (b.mu, "mu"),
        (b.alpha, "alpha"),
        (b.beta, "beta"),
        (b.ki_min, "Ki_min"),
        (b.ki_max, "Ki_max"),
    ];
    if let Some((_, name)) = positive.iter().find(|(v, _)| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidBounds(name));
    }
    if !(b.t_window >= 0.0 && b.t_window.is_finite()) {
        return Err(Error::InvalidBounds("T"));
    }
    let plant = b.b_bound * b.m / b.mu;
    let z_gain = Float::exp(b.alpha * b.beta * b.t_window)
        * Float::sqrt(b.ki_max / b.ki_min)
        * (b.ki_max / b.alpha)
        * (b.h_bound * b.f_bound / b.beta);
    Ok(plant * z_gain + b.f_bound * b.m / b.mu)
}

/// Piecewise-constant vector signal: `values[i]` holds on `[switch_times[i], switch_times[i+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    pub switch_times: Vec<f64>,
    pub values: Vec<DVector<f64>>,
}

impl PiecewiseConstant {
    pub fn new(switch_times: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        if switch_times.is_empty() || switch_times.len() != values.len() {
            return Err(Error::Invalid("piecewise-constant signal needs one value per switch time".into()));
        }
        if switch_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("switch times must be strictly increasing".into()));
        }
        Ok(Self { switch_times, values })
    }

    /// Value at `t`; the first value also holds before the first switch.
    pub fn at(&self, t: f64) -> &DVector<f64> {
        let i = self.switch_times.partition_point(|&s| s <= t).saturating_sub(1);
        &self.values[i]
    }

    /// `sup_t ‖w(t)‖`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Seeded battery of piecewise-constant disturbances on `[0, horizon]`.
///
/// Each signal has dimension `dim`, segments lasting 5–50 s with entries drawn
/// uniformly from `[−sup, sup]`, and is rescaled so that `sup_t ‖w(t)‖ = sup`.
pub fn disturbance_battery(seed: u64, count: usize, dim: usize, horizon: f64, sup: f64) -> Vec<PiecewiseConstant> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut times = Vec::new();
            let mut values = Vec::new();
            let mut t = 0.0;
            while t < horizon {
                times.push(t);
                values.push(DVector::from_fn(dim, |_, _| rng.gen_range(-sup..=sup)));
                t += rng.gen_range(5.0..50.0);
            }
            let peak = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
            if peak > 0.0 {
                for v in &mut values {
                    *v *= sup / peak;
                }
            }
            PiecewiseConstant {
                switch_times: times,
                values,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ones() -> BibsBounds {
        BibsBounds {
            b_bound: 1.0,
            f_bound: 1.0,
            h_bound: 1.0,
            m: 1.0,
            mu: 1.0,
            alpha: 1.0,
            beta: 1.0,
            t_window: 0.0,
            ki_min: 1.0,
            ki_max: 1.0,
        }
    }

    #[test]
    fn all_ones_gain_is_two() {
        assert_eq!(bibs_gain(&ones()).unwrap(), 2.0);
    }

    #[test]
    fn structural_factors() {
        // Equal Ki extremes and T = 0: only (B M/μ)(λ/α)(H F/β) + F M/μ remain.
        let b = BibsBounds {
            b_bound: 2.0,
            f_bound: 3.0,
            h_bound: 0.5,
            m: 1.5,
            mu: 0.25,
            alpha: 0.8,
            beta: 0.1,
            t_window: 0.0,
            ki_min: 0.8,
            ki_max: 0.8,
        };
        let expected = (2.0 * 1.5 / 0.25) * (0.8 / 0.8) * (0.5 * 3.0 / 0.1) + 3.0 * 1.5 / 0.25;
        assert!((bibs_gain(&b).unwrap() - expected).abs() < 1e-12);
        let spread = BibsBounds {
            ki_max: 3.2,
            t_window: 2.0,
            ..b.clone()
        };
        let expected = (2.0 * 1.5 / 0.25)
            * Float::exp(0.8 * 0.1 * 2.0)
            * 2.0
            * (3.2 / 0.8)
            * (0.5 * 3.0 / 0.1)
            + 3.0 * 1.5 / 0.25;
        assert!((bibs_gain(&spread).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn nonpositive_bounds_are_rejected() {
        let bad = BibsBounds { mu: 0.0, ..ones() };
        assert_eq!(bibs_gain(&bad), Err(Error::InvalidBounds("mu")));
        let bad = BibsBounds { t_window: -1.0, ..ones() };
        assert_eq!(bibs_gain(&bad), Err(Error::InvalidBounds("T")));
    }

    #[test]
    fn battery_is_seeded_and_normalised() {
        let a = disturbance_battery(7, 5, 2, 300.0, 1.0);
        let b = disturbance_battery(7, 5, 2, 300.0, 1.0);
        assert_eq!(a, b);
        assert_ne!(a, disturbance_battery(8, 5, 2, 300.0, 1.0));
        for w in &a {
            assert!((w.sup_norm() - 1.0).abs() < 1e-15);
            assert!(w.switch_times[0] == 0.0 && *w.switch_times.last().unwrap() < 300.0);
        }
    }

    #[test]
    fn piecewise_lookup() {
        let w = PiecewiseConstant::new(
            vec![0.0, 1.0, 2.0],
            vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0), DVector::from_element(1, 0.5)],
        )
        .unwrap();
        assert_eq!(w.at(-1.0)[0], 1.0);
        assert_eq!(w.at(0.5)[0], 1.0);
        assert_eq!(w.at(1.0)[0], -1.0);
        assert_eq!(w.at(9.0)[0], 0.5);
        assert!(PiecewiseConstant::new(vec![0.0, 0.0], vec![DVector::zeros(1), DVector::zeros(1)]).is_err());
    }
}
