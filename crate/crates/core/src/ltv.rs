//! Time-varying matrices, LTV plants and their transition matrices.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;
use num_traits::Float;

use crate::linalg::{all_finite, expect_shape, norm2};
use crate::ode::{integrate, SolverSettings};
use crate::{Error, Result};

type Evaluator = dyn Fn(f64) -> Result<DMatrix<f64>> + Send + Sync;

/// Relative step of the central-difference derivative fallback.
pub const FD_REL_STEP: f64 = 1e-5;

/// A real matrix of fixed shape depending on time `t` (seconds).
///
/// Cloning is cheap; evaluators are shared. When no analytic derivative is
/// attached, [`MatrixFunction::derivative`] falls back to a central difference
/// with step `1e-5 · max(1, |t|)`, which is inaccurate across jumps of
/// piecewise-defined matrices.
#[derive(Clone)]
pub struct MatrixFunction {
    rows: usize,
    cols: usize,
    eval: Arc<Evaluator>,
    derivative: Option<Arc<Evaluator>>,
    bound: Option<f64>,
    constant: bool,
}

impl fmt::Debug for MatrixFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixFunction")
            .field("shape", &(self.rows, self.cols))
            .field("constant", &self.constant)
            .field("analytic_derivative", &self.derivative.is_some())
            .field("bound", &self.bound)
            .finish()
    }
}

impl MatrixFunction {
    /// Time-invariant matrix; its derivative is exactly zero.
    pub fn constant(m: DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let bound = norm2(&m);
        let zero = DMatrix::zeros(rows, cols);
        Self {
            rows,
            cols,
            eval: Arc::new(move |_| Ok(m.clone())),
            derivative: Some(Arc::new(move |_| Ok(zero.clone()))),
            bound: Some(bound),
            constant: true,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols))
    }

    pub fn from_fn<F>(rows: usize, cols: usize, f: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::try_from_fn(rows, cols, move |t| Ok(f(t)))
    }

    /// Evaluator that may fail, e.g. outside the domain of a lookup table.
    pub fn try_from_fn<F>(rows: usize, cols: usize, f: F) -> Self
    where
        F: Fn(f64) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    {
        Self {
            rows,
            cols,
            eval: Arc::new(f),
            derivative: None,
            bound: None,
            constant: false,
        }
    }

    /// Attaches an analytic elementwise time derivative.
    pub fn with_derivative<F>(self, f: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.with_try_derivative(move |t| Ok(f(t)))
    }

    pub fn with_try_derivative<F>(mut self, f: F) -> Self
    where
        F: Fn(f64) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    {
        self.derivative = Some(Arc::new(f));
        self
    }

    /// Declares a uniform bound on `‖M(t)‖`.
    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    /// Piecewise-linear interpolation of a sampled table.
    ///
    /// Evaluation outside `[times[0], times[last]]` is a domain error. The
    /// derivative is the slope of the active segment (right segment at knots).
    pub fn sampled(times: Vec<f64>, values: Vec<DMatrix<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Invalid("sampled table needs matching, nonempty time and value lists".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("sampled table times must be strictly increasing".into()));
        }
        let (rows, cols) = values[0].shape();
        for m in &values {
            expect_shape("sampled table entry", m, rows, cols)?;
        }
        let bound = values.iter().map(norm2).fold(0.0, f64::max);
        let table = Arc::new((times, values));
        let eval_table = table.clone();
        let eval = move |t: f64| -> Result<DMatrix<f64>> {
            let (times, values) = &*eval_table;
            let (i, frac) = locate(times, t)?;
            if frac == 0.0 {
                return Ok(values[i].clone());
            }
            Ok(&values[i] * (1.0 - frac) + &values[i + 1] * frac)
        };
        let derivative = move |t: f64| -> Result<DMatrix<f64>> {
            let (times, values) = &*table;
            if times.len() == 1 {
                return Ok(DMatrix::zeros(rows, cols));
            }
            let (i, _) = locate(times, t)?;
            let i = i.min(times.len() - 2);
            Ok((&values[i + 1] - &values[i]) / (times[i + 1] - times[i]))
        };
        Ok(Self::try_from_fn(rows, cols, eval)
            .with_try_derivative(derivative)
            .with_bound(bound))
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    pub fn declared_bound(&self) -> Option<f64> {
        self.bound
    }

    /// Evaluates at `t`, checking shape and finiteness.
    pub fn eval(&self, t: f64) -> Result<DMatrix<f64>> {
        let m = (self.eval)(t)?;
        expect_shape("matrix function", &m, self.rows, self.cols)?;
        if !all_finite(&m) {
            return Err(Error::Domain(format!("matrix function is not finite at t = {t}")));
        }
        Ok(m)
    }

    /// Elementwise time derivative at `t` (analytic or central difference).
    pub fn derivative(&self, t: f64) -> Result<DMatrix<f64>> {
        match &self.derivative {
            Some(d) => {
                let m = d(t)?;
                expect_shape("matrix derivative", &m, self.rows, self.cols)?;
                Ok(m)
            }
            None => {
                let h = FD_REL_STEP * t.abs().max(1.0);
                Ok((self.eval(t + h)? - self.eval(t - h)?) / (2.0 * h))
            }
        }
    }

    pub fn transpose(&self) -> Self {
        let inner = self.clone();
        let mut out = Self::try_from_fn(self.cols, self.rows, move |t| Ok(inner.eval(t)?.transpose()));
        if self.derivative.is_some() {
            let inner = self.clone();
            out = out.with_try_derivative(move |t| Ok(inner.derivative(t)?.transpose()));
        }
        out.bound = self.bound;
        out.constant = self.constant;
        out
    }

    /// Scales by a constant factor.
    pub fn scale(&self, factor: f64) -> Self {
        let inner = self.clone();
        let mut out = Self::try_from_fn(self.rows, self.cols, move |t| Ok(inner.eval(t)? * factor));
        if self.derivative.is_some() {
            let inner = self.clone();
            out = out.with_try_derivative(move |t| Ok(inner.derivative(t)? * factor));
        }
        out.bound = self.bound.map(|b| b * factor.abs());
        out.constant = self.constant;
        out
    }

    /// Uniform-norm surrogate: the declared bound, else the max of `‖M(t)‖` over `times`.
    pub fn sup_norm(&self, times: &[f64]) -> Result<f64> {
        if let Some(b) = self.bound {
            return Ok(b);
        }
        times.iter().try_fold(0.0, |acc: f64, &t| Ok(acc.max(norm2(&self.eval(t)?))))
    }
}

fn locate(times: &[f64], t: f64) -> Result<(usize, f64)> {
    let first = times[0];
    let last = times[times.len() - 1];
    if !(t >= first && t <= last) {
        return Err(Error::Domain(format!(
            "t = {t} outside sampled range [{first}, {last}]"
        )));
    }
    let i = times.partition_point(|&s| s <= t).saturating_sub(1);
    if i + 1 >= times.len() {
        return Ok((times.len() - 1, 0.0));
    }
    Ok((i, (t - times[i]) / (times[i + 1] - times[i])))
}

/// Dimensions `(n, l, m, p)`: states, inputs, outputs, disturbances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub l: usize,
    pub m: usize,
    pub p: usize,
}

/// `ẋ = A(t)x + B(t)u + F(t)w`, `y = C(t)x`.
#[derive(Debug, Clone)]
pub struct LtvSystem {
    pub a: MatrixFunction,
    pub b: MatrixFunction,
    pub f: MatrixFunction,
    pub c: MatrixFunction,
    dims: Dims,
}

/// Plant matrices evaluated at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl LtvSystem {
    pub fn new(a: MatrixFunction, b: MatrixFunction, f: MatrixFunction, c: MatrixFunction) -> Result<Self> {
        let (n, n2) = a.shape();
        let check = |what, got: (usize, usize), expected: (usize, usize)| {
            if got == expected {
                Ok(())
            } else {
                Err(Error::Shape { what, expected, got })
            }
        };
        if n == 0 {
            return Err(Error::Invalid("plant needs at least one state".into()));
        }
        check("A", (n, n2), (n, n))?;
        let l = b.shape().1;
        check("B", b.shape(), (n, l))?;
        let p = f.shape().1;
        check("F", f.shape(), (n, p))?;
        let m = c.shape().0;
        check("C", c.shape(), (m, n))?;
        if l == 0 {
            return Err(Error::Invalid("plant needs at least one input".into()));
        }
        Ok(Self {
            a,
            b,
            f,
            c,
            dims: Dims { n, l, m, p },
        })
    }

    pub fn time_invariant(a: DMatrix<f64>, b: DMatrix<f64>, f: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        Self::new(
            MatrixFunction::constant(a),
            MatrixFunction::constant(b),
            MatrixFunction::constant(f),
            MatrixFunction::constant(c),
        )
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn eval(&self, t: f64) -> Result<PlantMatrices> {
        Ok(PlantMatrices {
            a: self.a.eval(t)?,
            b: self.b.eval(t)?,
            f: self.f.eval(t)?,
            c: self.c.eval(t)?,
        })
    }

    /// `A(t) − B(t)K(t)`.
    pub fn closed_loop(&self, k: &MatrixFunction) -> Result<MatrixFunction> {
        let Dims { n, l, .. } = self.dims;
        if k.shape() != (l, n) {
            return Err(Error::Shape {
                what: "K",
                expected: (l, n),
                got: k.shape(),
            });
        }
        let (a, b, k) = (self.a.clone(), self.b.clone(), k.clone());
        let constant = a.is_constant() && b.is_constant() && k.is_constant();
        let mut out = MatrixFunction::try_from_fn(n, n, move |t| Ok(a.eval(t)? - b.eval(t)? * k.eval(t)?));
        out.constant = constant;
        Ok(out)
    }
}

/// `Φ(t1, t0)` of `ẋ = A_cl(t)x`, integrated with adaptive steps at tolerance `tol`.
pub fn transition_matrix(a_cl: &MatrixFunction, t0: f64, t1: f64, tol: f64) -> Result<DMatrix<f64>> {
    if t1 < t0 {
        return Err(Error::Invalid("transition matrix requires t1 >= t0".into()));
    }
    let n = square_dim(a_cl)?;
    if t1 == t0 {
        return Ok(DMatrix::identity(n, n));
    }
    Ok(transition_samples(a_cl, t0, &[t1 - t0], tol)?.remove(0))
}

/// `Φ(t0 + s, t0)` for every offset `s` (sorted, nonnegative) from one integration.
pub fn transition_samples(a_cl: &MatrixFunction, t0: f64, offsets: &[f64], tol: f64) -> Result<Vec<DMatrix<f64>>> {
    let n = square_dim(a_cl)?;
    let horizon = offsets.last().copied().unwrap_or(0.0);
    if horizon <= 0.0 {
        return Ok(offsets.iter().map(|_| DMatrix::identity(n, n)).collect());
    }
    let times: Vec<f64> = offsets.iter().map(|s| t0 + s).collect();
    let identity = DMatrix::<f64>::identity(n, n);
    let settings = SolverSettings::rk45(tol, tol);
    let rhs = |t: f64, phi: &[f64], dphi: &mut [f64]| -> Result<()> {
        let a = a_cl.eval(t)?;
        let phi = DMatrix::from_column_slice(n, n, phi);
        dphi.copy_from_slice((a * phi).as_slice());
        Ok(())
    };
    let sol = integrate(rhs, identity.as_slice(), (t0, t0 + horizon), &settings, &times)?;
    Ok(sol
        .samples
        .into_iter()
        .map(|(_, v)| DMatrix::from_column_slice(n, n, &v))
        .collect())
}

fn square_dim(m: &MatrixFunction) -> Result<usize> {
    let (r, c) = m.shape();
    if r != c {
        return Err(Error::Shape {
            what: "closed-loop matrix",
            expected: (r, r),
            got: (r, c),
        });
    }
    Ok(r)
}

/// Constants `(M, μ)` with `‖Φ(t, t0)‖ ≤ M·e^{−μ(t−t0)}` on the sampled data.
#[derive(Debug, Clone, PartialEq)]
pub struct UesEstimate {
    pub m: f64,
    pub mu: f64,
    /// RMS residual of the log-domain least-squares fit.
    pub fit_residual: f64,
    /// `(t0, horizon)` pairs that were sampled.
    pub grid: Vec<(f64, f64)>,
}

impl UesEstimate {
    pub fn bound(&self, elapsed: f64) -> f64 {
        self.m * Float::exp(-self.mu * elapsed)
    }
}

/// Number of log-spaced offsets sampled per start time.
pub const UES_SAMPLES: usize = 48;

/// Fits `log‖Φ(t0+s, t0)‖ ≈ log M − μ s` over all start times by least squares,
/// then raises `M` until no sample exceeds the bound.
///
/// Offsets are log-spaced from `horizon·1e-3` to `horizon`.
pub fn estimate_ues_constants(a_cl: &MatrixFunction, t0_grid: &[f64], horizon: f64, tol: f64) -> Result<UesEstimate> {
    if t0_grid.is_empty() {
        return Err(Error::Invalid("UES estimation needs at least one start time".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::Invalid("UES estimation horizon must be positive".into()));
    }
    let offsets: Vec<f64> = (0..UES_SAMPLES)
        .map(|k| horizon * Float::powf(10.0, -3.0 + 3.0 * k as f64 / (UES_SAMPLES - 1) as f64))
        .collect();
    // (offset, log-norm) pairs, including Φ(t0, t0) = I.
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(t0_grid.len() * (UES_SAMPLES + 1));
    let mut grid = Vec::with_capacity(t0_grid.len());
    for &t0 in t0_grid {
        points.push((0.0, 0.0));
        let phis = transition_samples(a_cl, t0, &offsets, tol)?;
        let norms: Vec<f64> = phis.iter().map(norm2).collect();
        if norms.last().copied().unwrap_or(0.0) >= 1.0 {
            return Err(Error::NotExponentiallyStable(format!(
                "‖Φ‖ = {} after {horizon} s from t0 = {t0}",
                norms[norms.len() - 1]
            )));
        }
        for (&s, &norm) in offsets.iter().zip(&norms) {
            // Log of an exactly vanishing norm is clamped to keep the fit finite.
            points.push((s, Float::ln(norm.max(f64::MIN_POSITIVE))));
        }
        grid.push((t0, horizon));
    }
    let count = points.len() as f64;
    let mean_s = points.iter().map(|p| p.0).sum::<f64>() / count;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / count;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_s) * (p.0 - mean_s)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_s) * (p.1 - mean_y)).sum();
    let mu = -sxy / sxx;
    if !(mu > 0.0) {
        return Err(Error::NotExponentiallyStable(format!("fitted decay rate {mu} is not positive")));
    }
    let intercept = mean_y + mu * mean_s;
    let fit_residual = Float::sqrt(
        points
            .iter()
            .map(|&(s, y)| {
                let r = y - (intercept - mu * s);
                r * r
            })
            .sum::<f64>()
            / count,
    );
    let log_m = points.iter().map(|&(s, y)| y + mu * s).fold(0.0, f64::max);
    Ok(UesEstimate {
        m: Float::exp(log_m),
        mu,
        fit_residual,
        grid,
    })
}
