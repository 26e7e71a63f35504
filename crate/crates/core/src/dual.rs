//! Dual of the nominal closed loop and forward propagation of `H(t)`.
//!
//! Row `i` of `H` obeys `ḣᵢ = −[A − BK]ᵀ hᵢ + Cᵀ mᵢ` with output `qᵢ = Bᵀ hᵢ`,
//! so all rows together satisfy `Ḣ = −H[A − BK] + M C`. The dual is
//! anti-stable whenever the nominal loop is stable, so forward propagation
//! from a generic `H(t0)` diverges; this module only evaluates candidates.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::linalg::{expect_shape, sqrt};
use crate::ltv::{LtvSystem, MatrixFunction, UesEstimate};
use crate::ode::{integrate, SolverSettings};
use crate::{Error, Result};

/// Growth factor of `‖H‖` over its reference norm that stops propagation.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

pub const ANTI_STABLE_NOTE: &str =
    "dual system is uniformly exponentially stable in reverse time (anti-stable forward in time)";

#[derive(Debug, Clone)]
pub struct DualSystem {
    /// `−[A(t) − B(t)K(t)]ᵀ`.
    pub a_dual: MatrixFunction,
    /// `Cᵀ(t)`.
    pub input_map: MatrixFunction,
    /// `Bᵀ(t)`.
    pub output_map: MatrixFunction,
    pub note: Option<&'static str>,
}

/// Builds the dual system. Pass the nominal loop's UES estimate, if known, to
/// attach the anti-stability note.
pub fn build_dual(sys: &LtvSystem, k: &MatrixFunction, ues: Option<&UesEstimate>) -> Result<DualSystem> {
    let a_cl = sys.closed_loop(k)?;
    Ok(DualSystem {
        a_dual: a_cl.transpose().scale(-1.0),
        input_map: sys.c.transpose(),
        output_map: sys.b.transpose(),
        note: ues.map(|_| ANTI_STABLE_NOTE),
    })
}

/// Sampled `H(t)` and `Q(t) = H(t)B(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HTrajectory {
    pub times: Vec<f64>,
    pub h: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
    /// Time at which `‖H‖` first exceeded the divergence threshold; samples stop there.
    pub diverged_at: Option<f64>,
}

impl HTrajectory {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    /// `max_t ‖H(t) − H(t0)‖ / ‖H(t0)‖`.
    pub fn relative_drift(&self) -> f64 {
        let h0 = &self.h[0];
        let scale = h0.norm();
        self.h.iter().map(|h| (h - h0).norm()).fold(0.0, f64::max) / scale
    }

    /// `Q` as a piecewise-linear matrix function, e.g. for the integral positivity check.
    pub fn q_function(&self) -> Result<MatrixFunction> {
        MatrixFunction::sampled(self.times.clone(), self.q.clone())
    }
}

fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

/// Integrates a vectorised linear ODE segment by segment, stopping once the
/// state norm exceeds `DIVERGENCE_FACTOR · reference`.
fn propagate_segments<F>(
    mut rhs: F,
    x0: Vec<f64>,
    span: (f64, f64),
    settings: &SolverSettings,
    sample_times: &[f64],
) -> Result<(Vec<f64>, Vec<Vec<f64>>, Option<f64>)>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let (t0, t1) = span;
    if !(t1 > t0) {
        return Err(Error::Invalid("propagation span must satisfy t_end > t_start".into()));
    }
    let slack = 1e-12 * t1.abs().max(1.0);
    let reference = sqrt(x0.iter().map(|v| v * v).sum::<f64>()).max(1.0);
    let limit = DIVERGENCE_FACTOR * reference;
    let mut times = vec![t0];
    let mut states = vec![x0];
    for &t in sample_times.iter().filter(|&&t| t > t0) {
        if t > t1 + slack {
            return Err(Error::Invalid("sample times must lie within the propagation span".into()));
        }
        let t = t.min(t1);
        let start = *times.last().unwrap();
        let x = states.last().unwrap();
        let sol = integrate(&mut rhs, x, (start, t), settings, &[t])?;
        let (_, next) = sol.samples.into_iter().next().unwrap();
        let norm = sqrt(next.iter().map(|v| v * v).sum::<f64>());
        times.push(t);
        states.push(next);
        if norm > limit {
            log::warn!("H propagation diverged at t = {t}: norm {norm:e} exceeds {limit:e}");
            return Ok((times, states, Some(t)));
        }
    }
    Ok((times, states, None))
}

/// Propagates `Ḣ = −H[A − BK] + M C` forward from `H(t0) = h0`.
///
/// Returns `H` and `Q = HB` at `span.0` and at every sample time after it.
/// The divergence reference norm is `max(‖H(t0)‖, 1)`.
pub fn propagate_h(
    sys: &LtvSystem,
    k: &MatrixFunction,
    m_fn: &MatrixFunction,
    h0: &DMatrix<f64>,
    span: (f64, f64),
    settings: &SolverSettings,
    sample_times: &[f64],
) -> Result<HTrajectory> {
    let d = sys.dims();
    expect_shape("H0", h0, d.l, d.n)?;
    if m_fn.shape() != (d.l, d.m) {
        return Err(Error::Shape {
            what: "M",
            expected: (d.l, d.m),
            got: m_fn.shape(),
        });
    }
    let a_cl = sys.closed_loop(k)?;
    let c = sys.c.clone();
    let (l, n) = (d.l, d.n);
    let rhs = |t: f64, x: &[f64], dx: &mut [f64]| -> Result<()> {
        let h = from_row_major(l, n, x);
        let rate = m_fn.eval(t)? * c.eval(t)? - h * a_cl.eval(t)?;
        dx.copy_from_slice(&to_row_major(&rate));
        Ok(())
    };
    let (times, states, diverged_at) = propagate_segments(rhs, to_row_major(h0), span, settings, sample_times)?;
    let mut h = Vec::with_capacity(times.len());
    let mut q = Vec::with_capacity(times.len());
    for (&t, x) in times.iter().zip(&states) {
        let hm = from_row_major(l, n, x);
        q.push(&hm * sys.b.eval(t)?);
        h.push(hm);
    }
    Ok(HTrajectory {
        times,
        h,
        q,
        diverged_at,
    })
}

/// Sampled row state `hᵢ` and output `qᵢ = Bᵀ hᵢ` of one dual subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct RowTrajectory {
    pub times: Vec<f64>,
    pub h: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub diverged_at: Option<f64>,
}

/// Propagates `ḣ = A_dual h + Cᵀ m` for a single row, with `m_row(t)` an `m×1`
/// column (row `i` of `M(t)`, transposed).
pub fn propagate_row(
    dual: &DualSystem,
    m_row: &MatrixFunction,
    h0: &[f64],
    span: (f64, f64),
    settings: &SolverSettings,
    sample_times: &[f64],
) -> Result<RowTrajectory> {
    let (n, _) = dual.a_dual.shape();
    let (n_in, m) = dual.input_map.shape();
    if h0.len() != n || n_in != n {
        return Err(Error::Shape {
            what: "dual row state",
            expected: (n, 1),
            got: (h0.len(), 1),
        });
    }
    if m_row.shape() != (m, 1) {
        return Err(Error::Shape {
            what: "M row",
            expected: (m, 1),
            got: m_row.shape(),
        });
    }
    let rhs = |t: f64, x: &[f64], dx: &mut [f64]| -> Result<()> {
        let h = DMatrix::from_column_slice(n, 1, x);
        let rate = dual.a_dual.eval(t)? * h + dual.input_map.eval(t)? * m_row.eval(t)?;
        dx.copy_from_slice(rate.as_slice());
        Ok(())
    };
    let (times, h, diverged_at) = propagate_segments(rhs, h0.to_vec(), span, settings, sample_times)?;
    let mut q = Vec::with_capacity(h.len());
    for (&t, x) in times.iter().zip(&h) {
        let out = dual.output_map.eval(t)? * DMatrix::from_column_slice(n, 1, x);
        q.push(out.as_slice().to_vec());
    }
    Ok(RowTrajectory {
        times,
        h,
        q,
        diverged_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ti::{compute_h_ti, compute_m_ti, TiPlant};
    use num_traits::Float;

    fn grid(end: f64, count: usize) -> Vec<f64> {
        (1..=count).map(|i| end * i as f64 / count as f64).collect()
    }

    fn ti_example() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        (
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[2.0, 3.0]),
        )
    }

    #[test]
    fn ti_fixed_point() {
        let (a, b, c, k) = ti_example();
        let p = TiPlant::new(a.clone(), b.clone(), c.clone(), k.clone()).unwrap();
        let m = compute_m_ti(&p).unwrap();
        let h0 = compute_h_ti(&p, &m).unwrap();
        let sys = LtvSystem::time_invariant(a, b.clone(), b, c).unwrap();
        // Slowest nominal mode is e^{−t}: 10 time constants.
        let traj = propagate_h(
            &sys,
            &MatrixFunction::constant(k),
            &MatrixFunction::constant(m),
            &h0,
            (0.0, 10.0),
            &SolverSettings::rk4(0.01),
            &grid(10.0, 100),
        )
        .unwrap();
        assert!(!traj.diverged());
        assert!(traj.relative_drift() < 1e-6, "{}", traj.relative_drift());
        for q in &traj.q {
            assert!((q[(0, 0)] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_stays_zero() {
        let (a, b, c, k) = ti_example();
        let sys = LtvSystem::time_invariant(a, b.clone(), b, c).unwrap();
        let traj = propagate_h(
            &sys,
            &MatrixFunction::constant(k),
            &MatrixFunction::zeros(1, 1),
            &DMatrix::zeros(1, 2),
            (0.0, 5.0),
            &SolverSettings::rk4(0.01),
            &grid(5.0, 10),
        )
        .unwrap();
        assert!(traj.h.iter().all(|h| h.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn free_dual_grows_at_anti_stable_rate() {
        // A − BK = diag(−1, −3): dual is diag(1, 3); slowest growth e^{t}, fastest e^{3t}.
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -3.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let sys = LtvSystem::time_invariant(a, b.clone(), b, DMatrix::identity(2, 2)).unwrap();
        let h0 = DMatrix::from_row_slice(1, 2, &[0.3, -0.2]);
        let times = grid(4.0, 40);
        let traj = propagate_h(
            &sys,
            &MatrixFunction::zeros(1, 2),
            &MatrixFunction::zeros(1, 2),
            &h0,
            (0.0, 4.0),
            &SolverSettings::rk45(1e-12, 1e-12),
            &times,
        )
        .unwrap();
        for (t, h) in traj.times.iter().zip(&traj.h) {
            let expected = [0.3 * Float::exp(*t), -0.2 * Float::exp(3.0 * t)];
            assert!((h[(0, 0)] - expected[0]).abs() < 1e-8 * expected[0].abs().max(1.0));
            assert!((h[(0, 1)] - expected[1]).abs() < 1e-8 * expected[1].abs().max(1.0));
        }
        let norms: Vec<f64> = traj.h.iter().map(|h| h.norm()).collect();
        assert!(norms.windows(2).skip(5).all(|w| w[1] > w[0]));
        let rate = (Float::ln(norms[40]) - Float::ln(norms[30])) / 1.0;
        assert!((rate - 3.0).abs() < 1e-2, "{rate}");
    }

    #[test]
    fn divergence_is_flagged() {
        let a = DMatrix::from_row_slice(1, 1, &[-2.0]);
        let one = DMatrix::from_element(1, 1, 1.0);
        let sys = LtvSystem::time_invariant(a, one.clone(), one.clone(), one).unwrap();
        let traj = propagate_h(
            &sys,
            &MatrixFunction::zeros(1, 1),
            &MatrixFunction::zeros(1, 1),
            &DMatrix::from_element(1, 1, 1.0),
            (0.0, 20.0),
            &SolverSettings::rk4(0.01),
            &grid(20.0, 200),
        )
        .unwrap();
        // e^{2t} crosses 1e6 at t ≈ 6.9.
        let t = traj.diverged_at.unwrap();
        assert!((6.9..7.1).contains(&t), "{t}");
        assert_eq!(*traj.times.last().unwrap(), t);
    }

    #[test]
    fn dual_structure() {
        let (a, b, c, k) = ti_example();
        let sys = LtvSystem::time_invariant(a.clone(), b.clone(), b.clone(), c.clone()).unwrap();
        let dual = build_dual(&sys, &MatrixFunction::constant(k.clone()), None).unwrap();
        assert_eq!(dual.a_dual.eval(0.0).unwrap(), -(a.clone() - &b * &k).transpose());
        assert_eq!(dual.input_map.eval(1.0).unwrap(), c.transpose());
        assert_eq!(dual.output_map.eval(1.0).unwrap(), b.transpose());
        assert!(dual.note.is_none());
        let free = build_dual(&sys, &MatrixFunction::zeros(1, 2), None).unwrap();
        assert_eq!(free.a_dual.eval(0.0).unwrap(), -a.transpose());
    }

    #[test]
    fn rows_propagate_independently() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 0.2, 0.0, 0.1, -2.0, 0.3, 0.0, 0.4, -1.5]);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 1.0, 0.0, 0.3]);
        let bt = b.clone();
        let sys = LtvSystem::new(
            MatrixFunction::from_fn(3, 3, move |t| &a * (1.0 + 0.2 * Float::sin(t))),
            MatrixFunction::constant(bt.clone()),
            MatrixFunction::constant(bt),
            MatrixFunction::constant(DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0])),
        )
        .unwrap();
        let k = MatrixFunction::constant(DMatrix::from_row_slice(2, 3, &[0.1, 0.0, 0.0, 0.0, 0.2, 0.1]));
        let m = MatrixFunction::from_fn(2, 2, |t| {
            DMatrix::from_row_slice(2, 2, &[1.0, Float::cos(t), 0.5, 2.0])
        });
        let h0 = DMatrix::from_row_slice(2, 3, &[0.1, 0.2, 0.3, -0.1, 0.0, 0.4]);
        let settings = SolverSettings::rk45(1e-11, 1e-11);
        let times = grid(3.0, 30);
        let joint = propagate_h(&sys, &k, &m, &h0, (0.0, 3.0), &settings, &times).unwrap();
        let dual = build_dual(&sys, &k, None).unwrap();
        for i in 0..2 {
            let mi = m.clone();
            let row_m = MatrixFunction::try_from_fn(2, 1, move |t| Ok(mi.eval(t)?.rows(i, 1).transpose()));
            let row0: Vec<f64> = h0.row(i).iter().copied().collect();
            let row = propagate_row(&dual, &row_m, &row0, (0.0, 3.0), &settings, &times).unwrap();
            for (s, (h, q)) in row.h.iter().zip(&row.q).enumerate() {
                for j in 0..3 {
                    assert!((joint.h[s][(i, j)] - h[j]).abs() < 1e-8);
                }
                for j in 0..2 {
                    assert!((joint.q[s][(i, j)] - q[j]).abs() < 1e-8);
                }
            }
        }
    }
}
