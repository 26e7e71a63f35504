use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;

use crate::linalg::{expect_shape, lambda_min};
use crate::ltv::MatrixFunction;
use crate::{Error, Result};

/// Absolute tolerance on `λmin[Q + Qᵀ]`.
pub const PSD_TOL: f64 = 1e-10;

/// Fraction of the long-run average slope used as the target `β` when the
/// windowed condition cannot hold from `T = 0`.
const BETA_FRACTION: f64 = 0.9;

/// Uniform time grid `start, …, end` with `count` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

impl TimeGrid {
    pub const DEFAULT_COUNT: usize = 2001;

    pub fn new(start: f64, end: f64, count: usize) -> Result<Self> {
        if !(end > start) || count < 2 {
            return Err(Error::Invalid("time grid needs end > start and at least two points".into()));
        }
        Ok(Self { start, end, count })
    }

    pub fn over(start: f64, end: f64) -> Result<Self> {
        Self::new(start, end, Self::DEFAULT_COUNT)
    }

    pub fn spacing(&self) -> f64 {
        (self.end - self.start) / (self.count - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.end
        } else {
            self.start + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.point(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Satisfied,
    Violated,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Satisfied => "satisfied",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Outcome of a stability-condition check on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// `min_t λmin[Q(t) + Q(t)ᵀ]` over the grid.
    pub psd_margin: f64,
    /// `λmin(Kᵢ)`.
    pub alpha: f64,
    pub beta: f64,
    /// Window length from which the integral condition holds.
    pub t_window: f64,
    pub grid: TimeGrid,
    pub verdict: Verdict,
    /// First grid time violating the semidefiniteness condition.
    pub witness: Option<f64>,
    pub note: &'static str,
}

impl StabilityReport {
    /// Decay rate `αβ` of the `z`-subsystem guaranteed by the report.
    pub fn rate(&self) -> f64 {
        self.alpha * self.beta
    }
}

impl fmt::Display for StabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "verdict     : {}", self.verdict)?;
        writeln!(f, "psd margin  : {:.6e}", self.psd_margin)?;
        writeln!(f, "alpha       : {:.6e}", self.alpha)?;
        writeln!(f, "beta        : {:.6e}", self.beta)?;
        writeln!(f, "T           : {:.6}", self.t_window)?;
        writeln!(
            f,
            "grid        : {} points on [{}, {}]",
            self.grid.count, self.grid.start, self.grid.end
        )?;
        if let Some(t) = self.witness {
            writeln!(f, "witness     : t = {t}")?;
        }
        if !self.note.is_empty() {
            writeln!(f, "note        : {}", self.note)?;
        }
        Ok(())
    }
}

/// Checks `Q + Qᵀ ⪰ 0` with `Q = H B`, and finds `(β, T)` such that
/// `∫_{t0}^{t0+τ} λmin[Q + Qᵀ] dσ ≥ 2βτ` for every grid window with `τ ≥ T`.
///
/// The integral is the cumulative trapezoid rule on `grid`. If the condition
/// holds with some positive `β` already from `T = 0`, that `T` is reported with
/// the largest such `β`. Otherwise `β` is first fixed at 0.9 times the average
/// slope over the grid, the smallest admissible `T` is located, and `β` is then
/// raised to the largest value valid for that `T`. `window_taus` optionally
/// restricts the candidate window lengths `T`.
pub fn check_theorem1(
    h: &MatrixFunction,
    b: &MatrixFunction,
    ki: &DMatrix<f64>,
    grid: &TimeGrid,
    window_taus: Option<&[f64]>,
) -> Result<StabilityReport> {
    let (l, n) = h.shape();
    if b.shape() != (n, l) {
        return Err(Error::Shape {
            what: "B vs H",
            expected: (n, l),
            got: b.shape(),
        });
    }
    expect_shape("Ki", ki, l, l)?;
    let alpha = lambda_min(ki);
    let times = grid.points();
    let mut q = Vec::with_capacity(times.len());
    for &t in &times {
        let qt = h.eval(t)? * b.eval(t)?;
        q.push(lambda_min(&(&qt + qt.transpose())));
    }
    let psd_margin = q.iter().copied().fold(f64::INFINITY, f64::min);
    let witness = q.iter().position(|&v| v < -PSD_TOL).map(|i| times[i]);
    let mut report = StabilityReport {
        psd_margin,
        alpha,
        beta: 0.0,
        t_window: 0.0,
        grid: *grid,
        verdict: Verdict::Violated,
        witness,
        note: "",
    };
    if witness.is_some() {
        report.note = "Q + Q^T is not positive semidefinite";
        return Ok(report);
    }
    if !(alpha > 0.0) {
        report.note = "Ki is not positive definite";
        return Ok(report);
    }

    let dt = grid.spacing();
    let mut cumulative = Vec::with_capacity(q.len());
    cumulative.push(0.0);
    for i in 1..q.len() {
        let last = cumulative[i - 1];
        cumulative.push(last + 0.5 * dt * (q[i - 1] + q[i]));
    }
    let count = q.len();
    // min over t0 of the integral over a window of d grid intervals.
    let window_min: Vec<f64> = (0..count)
        .map(|d| {
            if d == 0 {
                return 0.0;
            }
            (0..count - d)
                .map(|i| cumulative[i + d] - cumulative[i])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    // Largest β valid for all windows of at least `from` intervals.
    let best_beta_from = |from: usize| -> f64 {
        (from.max(1)..count)
            .map(|d| window_min[d] / (2.0 * d as f64 * dt))
            .fold(f64::INFINITY, f64::min)
    };
    let admissible = |d: usize| -> bool {
        match window_taus {
            None => true,
            Some(taus) => taus.iter().any(|&tau| (tau - d as f64 * dt).abs() <= 0.5 * dt),
        }
    };

    let slope = cumulative[count - 1] / (grid.end - grid.start);
    if !(slope > PSD_TOL) {
        report.note = "integral of lambda_min[Q + Q^T] does not grow";
        return Ok(report);
    }
    if admissible(0) {
        let beta0 = best_beta_from(0);
        if beta0 > PSD_TOL {
            report.beta = beta0;
            report.t_window = 0.0;
            report.verdict = Verdict::Satisfied;
            return Ok(report);
        }
    }
    let target = BETA_FRACTION * slope / 2.0;
    // Smallest d such that every window of length ≥ d meets the target rate.
    let mut first_ok = None;
    for d in (1..count).rev() {
        if window_min[d] + PSD_TOL * d as f64 * dt >= 2.0 * target * d as f64 * dt {
            first_ok = Some(d);
        } else {
            break;
        }
    }
    let chosen = first_ok.and_then(|d0| (d0..count).find(|&d| admissible(d)));
    match chosen {
        // Windows longer than half the grid are too few to support the claim.
        Some(d) if 2 * d <= count - 1 => {
            report.t_window = d as f64 * dt;
            report.beta = best_beta_from(d).max(target);
            report.verdict = Verdict::Satisfied;
        }
        _ => {
            report.verdict = Verdict::Inconclusive;
            report.note = "no window length within half the grid meets the target rate";
        }
    }
    Ok(report)
}

/// Simplified condition for `H = Bᵀ`: `α = λmin(Kᵢ)`, `β = min_t λmin(BᵀB)`.
pub fn check_corollary1(b: &MatrixFunction, ki: &DMatrix<f64>, grid: &TimeGrid) -> Result<StabilityReport> {
    let l = b.shape().1;
    expect_shape("Ki", ki, l, l)?;
    let alpha = lambda_min(ki);
    let mut beta = f64::INFINITY;
    let mut witness = None;
    for t in grid.points() {
        let bt = b.eval(t)?;
        let value = lambda_min(&(bt.transpose() * bt));
        if value < beta {
            beta = value;
            witness = Some(t);
        }
    }
    let satisfied = alpha > 0.0 && beta > PSD_TOL;
    Ok(StabilityReport {
        psd_margin: 2.0 * beta,
        alpha,
        beta,
        t_window: 0.0,
        grid: *grid,
        verdict: if satisfied { Verdict::Satisfied } else { Verdict::Violated },
        witness: if satisfied { None } else { witness },
        note: if alpha > 0.0 {
            if satisfied {
                ""
            } else {
                "B(t) loses column rank"
            }
        } else {
            "Ki is not positive definite"
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Float;

    fn column(values: &[f64]) -> MatrixFunction {
        MatrixFunction::constant(DMatrix::from_column_slice(values.len(), 1, values))
    }

    fn grid() -> TimeGrid {
        TimeGrid::new(0.0, 10.0, 201).unwrap()
    }

    #[test]
    fn transpose_of_constant_b_gives_t_zero() {
        let b = MatrixFunction::constant(DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 2.0, 0.0, 1.0]));
        let bt = b.eval(0.0).unwrap();
        let lmin = lambda_min(&(bt.transpose() * &bt));
        let report = check_theorem1(&b.transpose(), &b, &DMatrix::identity(2, 2), &grid(), None).unwrap();
        assert_eq!(report.verdict, Verdict::Satisfied);
        assert_eq!(report.t_window, 0.0);
        assert!((report.beta - lmin).abs() < 1e-12 * lmin.max(1.0));
    }

    #[test]
    fn two_tank_gain_is_scalar_arithmetic() {
        let (alpha, c3) = (0.12, 0.299);
        let h = MatrixFunction::constant(DMatrix::from_row_slice(1, 2, &[alpha, alpha]));
        let b = column(&[c3, 0.0]);
        let report = check_theorem1(&h, &b, &DMatrix::from_element(1, 1, 1.0), &grid(), None).unwrap();
        assert_eq!(report.verdict, Verdict::Satisfied);
        assert!((report.psd_margin - 2.0 * alpha * c3).abs() < 1e-15);
        assert!((report.beta - alpha * c3).abs() < 1e-14);
        assert_eq!(report.t_window, 0.0);
    }

    #[test]
    fn sign_flip_is_violated_with_witness() {
        let b = column(&[1.0, 0.0]);
        let report = check_theorem1(&b.transpose().scale(-1.0), &b, &DMatrix::identity(1, 1), &grid(), None).unwrap();
        assert_eq!(report.verdict, Verdict::Violated);
        assert_eq!(report.witness, Some(0.0));
        assert!((report.psd_margin + 2.0).abs() < 1e-15);
    }

    #[test]
    fn intermittent_excitation_needs_a_window() {
        // q(t) = 2·max(0, sin t)²-like: zero on half periods.
        let b = MatrixFunction::from_fn(1, 1, |t| {
            DMatrix::from_element(1, 1, Float::sin(t).max(0.0))
        });
        let g = TimeGrid::new(0.0, 150.0, 2001).unwrap();
        let report = check_theorem1(&b.transpose(), &b, &DMatrix::identity(1, 1), &g, None).unwrap();
        assert_eq!(report.verdict, Verdict::Satisfied);
        // Worst window starts and ends on a dead half-period: needs about 4.5 periods.
        assert!(report.t_window > 25.0 && report.t_window < 40.0, "{report:?}");
        // Long-run average of 2 max(0,sin)² is 1/2, so β ≈ 0.25 at most.
        assert!(report.beta > 0.2 && report.beta <= 0.2501, "{report:?}");
    }

    #[test]
    fn vanishing_q_is_not_satisfied() {
        let b = column(&[0.0, 0.0]);
        let report = check_theorem1(&b.transpose(), &b, &DMatrix::identity(1, 1), &grid(), None).unwrap();
        assert_eq!(report.verdict, Verdict::Violated);
    }

    #[test]
    fn corollary_checks() {
        let c3: f64 = 0.299;
        let b = column(&[c3, 0.0]);
        let ok = check_corollary1(&b, &DMatrix::identity(1, 1), &grid()).unwrap();
        assert_eq!(ok.verdict, Verdict::Satisfied);
        assert!((ok.beta - c3 * c3).abs() < 1e-15);

        let rank_loss = MatrixFunction::from_fn(2, 2, |t| {
            let s = if t > 5.0 { 0.0 } else { 1.0 };
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, s])
        });
        let bad = check_corollary1(&rank_loss, &DMatrix::identity(2, 2), &grid()).unwrap();
        assert_eq!(bad.verdict, Verdict::Violated);
        assert!(bad.beta.abs() < 1e-15);

        let b2 = MatrixFunction::constant(DMatrix::identity(2, 2));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let neg = check_corollary1(&b2, &indefinite, &grid()).unwrap();
        assert_eq!(neg.verdict, Verdict::Violated);
        assert_eq!(neg.alpha, -1.0);
    }

    #[test]
    fn restricted_window_lengths() {
        let b = MatrixFunction::from_fn(1, 1, |t| DMatrix::from_element(1, 1, Float::sin(t).max(0.0)));
        let g = TimeGrid::new(0.0, 150.0, 2001).unwrap();
        let short = check_theorem1(&b.transpose(), &b, &DMatrix::identity(1, 1), &g, Some(&[10.0])).unwrap();
        assert_eq!(short.verdict, Verdict::Inconclusive);
        let taus = [50.0];
        let report = check_theorem1(&b.transpose(), &b, &DMatrix::identity(1, 1), &g, Some(&taus)).unwrap();
        assert_eq!(report.verdict, Verdict::Satisfied);
        assert!((report.t_window - 50.0).abs() <= g.spacing());
    }
}
