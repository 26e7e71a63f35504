//! Turning a parsed [`Config`] into plants, controllers and scenarios.

use std::f64::consts::PI;

use ltv_integral::analysis::PiecewiseConstant;
use ltv_integral::controller::{choose_h, HChoice, IntegralController};
use ltv_integral::ltv::{LtvSystem, MatrixFunction};
use ltv_integral::ode::SolverSettings;
use ltv_integral::sim::{ControllerSpec, Disturbance, Scenario};
use ltv_integral::tank::{linearized_system, TankParams};
use ltv_integral::{DMatrix, DVector};

use crate::config::{Config, ConfigError};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantKind {
    TwoTank,
    Linear,
}

pub fn plant_kind(cfg: &Config) -> Result<PlantKind, ConfigError> {
    match cfg.str("scenario", "plant") {
        None | Some("two-tank") => Ok(PlantKind::TwoTank),
        Some("linear") => Ok(PlantKind::Linear),
        Some(other) => Err(cfg.invalid(
            "scenario",
            "plant",
            format!("expected `two-tank` or `linear`, got `{other}`"),
        )),
    }
}

/// Tank parameters; every key defaults to the case-study value.
pub fn tank_params(cfg: &Config) -> Result<TankParams, CliError> {
    let d = TankParams::default();
    let get = |key, default| cfg.f64_or("tank", key, default);
    let mut p = TankParams {
        c1: get("c1", d.c1)?,
        c2: get("c2", d.c2)?,
        c3: get("c3", d.c3)?,
        c4: get("c4", d.c4)?,
        c5: get("c5", d.c5)?,
        c6: get("c6", d.c6)?,
        w: get("w", d.w)?,
        q_sat: get("q_sat", d.q_sat)?,
        horizon: get("horizon", d.horizon)?,
        alpha: get("alpha", d.alpha)?,
        beta_i: get("beta_i", d.beta_i)?,
        ki: d.ki,
    };
    if let Some(h) = cfg.f64("simulation", "horizon")? {
        p.horizon = h;
    }
    p.validate()?;
    Ok(p)
}

/// The integral-gain sweep for the tank controllers.
pub fn ki_list(cfg: &Config) -> Result<Vec<f64>, ConfigError> {
    let list = cfg.list("controller", "ki")?.ok_or_else(|| cfg.missing("controller", "ki"))?;
    if list.iter().any(|&k| !(k > 0.0)) {
        return Err(cfg.invalid("controller", "ki", "integral gains must be positive"));
    }
    Ok(list)
}

fn sinusoidal(base: DMatrix<f64>, wobble: Option<DMatrix<f64>>, frequency: f64) -> MatrixFunction {
    match wobble {
        None => MatrixFunction::constant(base),
        Some(w) => {
            let omega = 2.0 * PI * frequency;
            let (rows, cols) = base.shape();
            let wd = w.clone();
            let bound = base.norm() + w.norm();
            MatrixFunction::from_fn(rows, cols, move |t| &base + &w * (omega * t).sin())
                .with_derivative(move |t| &wd * (omega * (omega * t).cos()))
                .with_bound(bound)
        }
    }
}

/// `A(t) = A + A_sin sin(2π f t)`, `B(t) = B + B_sin sin(2π f t)`, constant `F`, `C`.
pub fn linear_system(cfg: &Config) -> Result<LtvSystem, CliError> {
    let a = cfg.require_matrix("plant", "A")?;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(cfg.invalid("plant", "A", "A must be square").into());
    }
    let b = cfg.require_matrix("plant", "B")?;
    if b.nrows() != n {
        return Err(cfg.invalid("plant", "B", format!("B needs {n} rows")).into());
    }
    let l = b.ncols();
    let f = match cfg.matrix("plant", "F")? {
        Some(f) if f.nrows() != n => return Err(cfg.invalid("plant", "F", format!("F needs {n} rows")).into()),
        Some(f) => f,
        None => b.clone(),
    };
    let c = match cfg.matrix("plant", "C")? {
        Some(c) if c.ncols() != n => return Err(cfg.invalid("plant", "C", format!("C needs {n} columns")).into()),
        Some(c) => c,
        None => DMatrix::identity(n, n),
    };
    let a_sin = cfg.matrix_shaped("plant", "A_sin", n, n)?;
    let b_sin = cfg.matrix_shaped("plant", "B_sin", n, l)?;
    let frequency = cfg.f64_or("plant", "frequency", 0.0)?;
    if (a_sin.is_some() || b_sin.is_some()) && !(frequency > 0.0) {
        return Err(cfg
            .invalid("plant", "frequency", "a positive frequency is required with A_sin or B_sin")
            .into());
    }
    Ok(LtvSystem::new(
        sinusoidal(a, a_sin, frequency),
        sinusoidal(b, b_sin, frequency),
        MatrixFunction::constant(f),
        MatrixFunction::constant(c),
    )?)
}

/// Nominal gain `K` (defaults to zero).
pub fn nominal_gain(cfg: &Config, l: usize, n: usize) -> Result<MatrixFunction, ConfigError> {
    Ok(MatrixFunction::constant(
        cfg.matrix_shaped("controller", "K", l, n)?.unwrap_or_else(|| DMatrix::zeros(l, n)),
    ))
}

/// `H` as an explicit matrix or one of `transpose`, `normalized`, `eigen-normalized`.
pub fn feedback_h(cfg: &Config, sys: &LtvSystem, default: Option<DMatrix<f64>>) -> Result<MatrixFunction, CliError> {
    let d = sys.dims();
    let variant = match cfg.str("controller", "H") {
        Some("transpose") => Some(HChoice::Transpose),
        Some("normalized") => Some(HChoice::Normalized),
        Some("eigen-normalized") => Some(HChoice::EigenNormalized),
        _ => None,
    };
    if let Some(variant) = variant {
        return Ok(choose_h(sys, variant, &[0.0])?);
    }
    match cfg.matrix_shaped("controller", "H", d.l, d.n)?.or(default) {
        Some(h) => Ok(MatrixFunction::constant(h)),
        None => Err(cfg.missing("controller", "H").into()),
    }
}

/// `Kᵢ` of a linear-plant controller (required).
pub fn integral_gain(cfg: &Config, l: usize) -> Result<DMatrix<f64>, ConfigError> {
    cfg.matrix_shaped("controller", "Ki", l, l)?
        .ok_or_else(|| cfg.missing("controller", "Ki"))
}

pub fn integral_controller(cfg: &Config, sys: &LtvSystem) -> Result<IntegralController, CliError> {
    let d = sys.dims();
    let k = nominal_gain(cfg, d.l, d.n)?;
    let h = feedback_h(cfg, sys, None)?;
    let ki = integral_gain(cfg, d.l)?;
    let antiwindup = cfg.bool_or("controller", "antiwindup", true)?;
    Ok(IntegralController::new(k, h, ki)?.with_antiwindup(antiwindup))
}

pub fn solver(cfg: &Config) -> Result<SolverSettings, ConfigError> {
    match cfg.str("simulation", "method").unwrap_or("rk4") {
        "rk4" => {
            let step = cfg.f64_or("simulation", "step", 0.01)?;
            if !(step > 0.0) {
                return Err(cfg.invalid("simulation", "step", "step must be positive"));
            }
            Ok(SolverSettings::rk4(step))
        }
        "rk45" => Ok(SolverSettings::rk45(
            cfg.f64_or("simulation", "abs_tol", 1e-9)?,
            cfg.f64_or("simulation", "rel_tol", 1e-9)?,
        )),
        other => Err(cfg.invalid(
            "simulation",
            "method",
            format!("expected `rk4` or `rk45`, got `{other}`"),
        )),
    }
}

fn vector(cfg: &Config, section: &str, key: &str, dim: usize) -> Result<Option<DVector<f64>>, ConfigError> {
    match cfg.list(section, key)? {
        Some(v) if v.len() != dim => Err(cfg.invalid(section, key, format!("expected {dim} entries, got {}", v.len()))),
        Some(v) => Ok(Some(DVector::from_vec(v))),
        None => Ok(None),
    }
}

/// Disturbance of dimension `p`; `default` applies when `[disturbance]` is absent.
pub fn disturbance(cfg: &Config, p: usize, default: Disturbance) -> Result<Disturbance, CliError> {
    let Some(kind) = cfg.str("disturbance", "kind") else {
        return Ok(default);
    };
    let need = |key| vector(cfg, "disturbance", key, p)?.ok_or_else(|| cfg.missing("disturbance", key));
    Ok(match kind {
        "zero" => Disturbance::Zero,
        "constant" => Disturbance::Constant(need("value")?),
        "sine" => Disturbance::Sine {
            offset: vector(cfg, "disturbance", "value", p)?.unwrap_or_else(|| DVector::zeros(p)),
            amplitude: need("amplitude")?,
            frequency: cfg
                .f64("disturbance", "frequency")?
                .ok_or_else(|| cfg.missing("disturbance", "frequency"))?,
        },
        "piecewise" => {
            let times = cfg
                .list("disturbance", "times")?
                .ok_or_else(|| cfg.missing("disturbance", "times"))?;
            let values = cfg
                .matrix_shaped("disturbance", "values", times.len(), p)?
                .ok_or_else(|| cfg.missing("disturbance", "values"))?;
            let rows = (0..times.len()).map(|i| values.row(i).transpose()).collect();
            Disturbance::PiecewiseConstant(
                PiecewiseConstant::new(times, rows)
                    .map_err(|e| cfg.invalid("disturbance", "times", e.to_string()))?,
            )
        }
        other => {
            return Err(cfg
                .invalid(
                    "disturbance",
                    "kind",
                    format!("expected zero, constant, sine or piecewise, got `{other}`"),
                )
                .into())
        }
    })
}

fn apply_simulation(cfg: &Config, s: &mut Scenario) -> Result<(), CliError> {
    s.solver = solver(cfg)?;
    s.sample_interval = cfg.f64_or("simulation", "sample_interval", s.sample_interval)?;
    if let Some(h) = cfg.f64("simulation", "horizon")? {
        s.horizon = h;
    }
    if let Some(limits) = cfg.list("simulation", "saturation")? {
        match limits[..] {
            [lo, hi] if lo <= hi => s.saturation = Some((lo, hi)),
            _ => {
                return Err(cfg
                    .invalid("simulation", "saturation", "expected `lower, upper` with lower <= upper")
                    .into())
            }
        }
    }
    Ok(())
}

/// One two-tank sweep member.
pub fn tank_scenario(cfg: &Config, params: TankParams, controller: ControllerSpec) -> Result<Scenario, CliError> {
    let mut s = Scenario::two_tank(params, controller);
    apply_simulation(cfg, &mut s)?;
    s.disturbance = disturbance(cfg, 1, s.disturbance.clone())?;
    if let Some(x0) = vector(cfg, "initial", "x0", 2)? {
        s.x0 = x0;
    }
    if let Some(v0) = vector(cfg, "initial", "v0", 1)? {
        s.v0 = Some(v0);
    }
    Ok(s)
}

/// A linear-plant scenario; the controller kind is `integral`, `state-feedback` or `none`.
pub fn linear_scenario(cfg: &Config) -> Result<Scenario, CliError> {
    let sys = linear_system(cfg)?;
    let d = sys.dims();
    let controller = match cfg.str("controller", "kind").unwrap_or("integral") {
        "integral" => ControllerSpec::Integral(integral_controller(cfg, &sys)?),
        "state-feedback" => ControllerSpec::StateFeedback(nominal_gain(cfg, d.l, d.n)?),
        "none" => ControllerSpec::None,
        other => {
            return Err(cfg
                .invalid(
                    "controller",
                    "kind",
                    format!("expected integral, state-feedback or none for a linear plant, got `{other}`"),
                )
                .into())
        }
    };
    let x0 = vector(cfg, "initial", "x0", d.n)?.ok_or_else(|| cfg.missing("initial", "x0"))?;
    let horizon = cfg
        .f64("simulation", "horizon")?
        .ok_or_else(|| cfg.missing("simulation", "horizon"))?;
    let mut s = Scenario::linear(sys, controller, x0, horizon);
    apply_simulation(cfg, &mut s)?;
    s.disturbance = disturbance(cfg, d.p, Disturbance::Zero)?;
    let v_dim = match &s.controller {
        ControllerSpec::Integral(_) => d.l,
        _ => 0,
    };
    if let Some(v0) = vector(cfg, "initial", "v0", v_dim)? {
        s.v0 = Some(v0);
    }
    Ok(s)
}

/// The tank linearisation together with `K`, `H` (default `[α α]`) and `Kᵢ = kI`.
pub fn tank_linear_loop(cfg: &Config, params: &TankParams, ki: f64) -> Result<(LtvSystem, IntegralController), CliError> {
    let sys = linearized_system(params)?;
    let k = nominal_gain(cfg, 1, 2)?;
    let h = feedback_h(cfg, &sys, Some(DMatrix::from_row_slice(1, 2, &[params.alpha, params.alpha])))?;
    let ctrl = IntegralController::new(k, h, DMatrix::from_element(1, 1, ki))?
        .with_antiwindup(cfg.bool_or("controller", "antiwindup", true)?);
    Ok((sys, ctrl))
}
