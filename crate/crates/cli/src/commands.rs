//! The `simulate`, `analyze` and `ti` verbs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::thread;

use ltv_integral::analysis::{
    bibs_gain, check_corollary1, check_theorem1, disturbance_battery, BibsBounds, StabilityReport, TimeGrid, Verdict,
};
use ltv_integral::controller::IntegralController;
use ltv_integral::ltv::{estimate_ues_constants, LtvSystem, UesEstimate};
use ltv_integral::sim::{run_scenario, ControllerSpec, Disturbance, Scenario, Trajectory};
use ltv_integral::tank::TankParams;
use ltv_integral::ti::{closed_loop_eigs, compute_h_ti, compute_m_ti, TiPlant};
use ltv_integral::{Complex, DMatrix, DVector};

use crate::config::Config;
use crate::output::{self, num, RunSummary};
use crate::plot::{self, Panel, Series};
use crate::setup::{self, PlantKind};
use crate::{CliError, ExitStatus, RunConfig};

/// Tolerance on the eigenvalue-union distance reported as verified.
pub const EIGEN_UNION_TOL: f64 = 1e-8;

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

fn ki_label(ki: f64) -> String {
    format!("{ki}")
}

struct TankRun {
    name: String,
    controller: &'static str,
    ki: f64,
    antiwindup: bool,
    scenario: Scenario,
}

fn tank_runs(cfg: &Config, run: &RunConfig) -> Result<Vec<TankRun>, CliError> {
    let base = setup::tank_params(cfg)?;
    let kis = match &run.ki {
        Some(list) => list.clone(),
        None => setup::ki_list(cfg)?,
    };
    if kis.is_empty() || kis.iter().any(|&k| !(k > 0.0 && k.is_finite())) {
        return Err(cfg.invalid("controller", "ki", "integral gains must be positive").into());
    }
    let kinds = cfg
        .words("controller", "kind")
        .unwrap_or_else(|| vec!["proposed".into(), "standard-i".into()]);
    let antiwindup = cfg.bool_or("controller", "antiwindup", true)?;
    let mut runs = Vec::new();
    let mut push = |kind: &'static str, spec: ControllerSpec, ki: f64, aw: bool, suffix: &str| -> Result<(), CliError> {
        let params = TankParams { ki, ..base };
        runs.push(TankRun {
            name: format!("{kind}{suffix}_ki{}", ki_label(ki)),
            controller: kind,
            ki,
            antiwindup: aw,
            scenario: setup::tank_scenario(cfg, params, spec)?,
        });
        Ok(())
    };
    for kind in &kinds {
        for &ki in &kis {
            match kind.as_str() {
                "proposed" => push("proposed", ControllerSpec::Proposed { antiwindup }, ki, antiwindup, "")?,
                "standard-i" => push("standard-i", ControllerSpec::StandardI, ki, false, "")?,
                "none" => push("none", ControllerSpec::None, ki, false, "")?,
                other => {
                    return Err(cfg
                        .invalid(
                            "controller",
                            "kind",
                            format!("expected proposed, standard-i or none for the two-tank plant, got `{other}`"),
                        )
                        .into())
                }
            }
        }
    }
    if run.no_antiwindup {
        let ki = kis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        push("proposed", ControllerSpec::Proposed { antiwindup: false }, ki, false, "-noaw")?;
    }
    Ok(runs)
}

/// Runs the scenarios concurrently; results keep the input order.
fn run_all(scenarios: Vec<&Scenario>) -> Vec<Result<Trajectory, ltv_integral::Error>> {
    thread::scope(|scope| {
        let handles: Vec<_> = scenarios
            .into_iter()
            .map(|s| scope.spawn(move || run_scenario(s)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}

fn tank_panels(runs: &[(&TankRun, &Trajectory)]) -> Vec<Panel> {
    let mut levels = Vec::new();
    let mut inputs = Vec::new();
    if let Some((_, first)) = runs.first() {
        levels.push(Series {
            label: "reference r".into(),
            points: first.samples.iter().map(|s| (s.t, s.reference[1])).collect(),
            dashed: true,
        });
    }
    for (run, traj) in runs {
        levels.push(Series {
            label: run.name.clone(),
            points: traj.samples.iter().map(|s| (s.t, s.x[1])).collect(),
            dashed: false,
        });
        inputs.push(Series {
            label: run.name.clone(),
            points: traj.samples.iter().map(|s| (s.t, s.u_star[0])).collect(),
            dashed: false,
        });
    }
    vec![
        Panel {
            title: "Lower tank level z2 and reference".into(),
            y_label: "level [cm]".into(),
            series: levels,
        },
        Panel {
            title: "Applied pump voltage q*".into(),
            y_label: "voltage [V]".into(),
            series: inputs,
        },
    ]
}

fn write_plot(path: &Path, panels: &[Panel]) {
    if let Err(e) = fs::write(path, plot::render(panels)) {
        log::warn!("could not write plot {}: {e}", path.display());
    }
}

/// `simulate`: one CSV per run, a summary and an optional SVG plot.
pub fn cmd_simulate(run: &RunConfig) -> Result<ExitStatus, CliError> {
    let cfg = run.load()?;
    let status = match setup::plant_kind(&cfg)? {
        PlantKind::TwoTank => simulate_tank(&cfg, run)?,
        PlantKind::Linear => simulate_linear(&cfg, run)?,
    };
    if run.analysis && status == ExitStatus::Success {
        return analyze_with(&cfg, run);
    }
    Ok(status)
}

fn simulate_tank(cfg: &Config, run: &RunConfig) -> Result<ExitStatus, CliError> {
    let runs = tank_runs(cfg, run)?;
    let plot_enabled = cfg.bool_or("simulation", "plot", true)?;
    create_out(&run.out)?;
    let results = run_all(runs.iter().map(|r| &r.scenario).collect());
    let mut summaries = Vec::new();
    let mut finished = Vec::new();
    let mut failed = false;
    for (r, result) in runs.iter().zip(&results) {
        match result {
            Ok(traj) if output::all_finite(traj) => {
                write_file(&run.out.join(format!("{}.csv", r.name)), &output::tank_csv(traj))?;
                summaries.push(RunSummary::tank(&r.name, r.controller, r.ki, r.antiwindup, traj));
                finished.push((r, traj));
            }
            Ok(_) => {
                failed = true;
                eprintln!("run {} failed: non-finite values in trajectory", r.name);
            }
            Err(e) => {
                failed = true;
                eprintln!("run {} failed: {e}", r.name);
            }
        }
    }
    write_file(&run.out.join("summary.csv"), &output::summary_csv(&summaries))?;
    let table = output::summary_table(&summaries);
    write_file(&run.out.join("summary.txt"), &table)?;
    print!("{table}");
    if plot_enabled && !finished.is_empty() {
        write_plot(&run.out.join("plot.svg"), &tank_panels(&finished));
    }
    Ok(if failed { ExitStatus::Failure } else { ExitStatus::Success })
}

fn simulate_linear(cfg: &Config, run: &RunConfig) -> Result<ExitStatus, CliError> {
    let scenario = setup::linear_scenario(cfg)?;
    create_out(&run.out)?;
    let traj = run_scenario(&scenario)?;
    if !output::all_finite(&traj) {
        eprintln!("run failed: non-finite values in trajectory");
        return Ok(ExitStatus::Failure);
    }
    write_file(&run.out.join("trace.csv"), &output::linear_csv(&traj))?;
    let max_x = traj.samples.iter().map(|s| s.x.norm()).fold(0.0, f64::max);
    let max_u = traj.samples.iter().map(|s| s.u.norm()).fold(0.0, f64::max);
    let last = traj.samples.last().map(|s| s.x.norm()).unwrap_or(0.0);
    let summary = format!(
        "max_state_norm = {}\nfinal_state_norm = {}\nmax_input_norm = {}\nsteps = {}\n",
        num(max_x),
        num(last),
        num(max_u),
        traj.steps
    );
    write_file(&run.out.join("summary.kv"), &summary)?;
    print!("{summary}");
    if cfg.bool_or("simulation", "plot", true)? {
        let series = |label: &str, f: &dyn Fn(&ltv_integral::sim::Sample) -> &DVector<f64>| -> Vec<Series> {
            let dim = traj.samples.first().map_or(0, |s| f(s).len());
            (0..dim)
                .map(|i| Series {
                    label: format!("{label}{}", i + 1),
                    points: traj.samples.iter().map(|s| (s.t, f(s)[i])).collect(),
                    dashed: false,
                })
                .collect()
        };
        let panels = [
            Panel {
                title: "State".into(),
                y_label: "x".into(),
                series: series("x", &|s| &s.x),
            },
            Panel {
                title: "Control".into(),
                y_label: "u".into(),
                series: series("u", &|s| &s.u),
            },
        ];
        write_plot(&run.out.join("plot.svg"), &panels);
    }
    Ok(ExitStatus::Success)
}

/// Key-value document with `key = value` lines; matrices use the config syntax.
#[derive(Debug, Default)]
struct KvDoc(String);

impl KvDoc {
    fn put(&mut self, key: &str, value: impl AsRef<str>) {
        let _ = writeln!(self.0, "{key} = {}", value.as_ref());
    }

    fn num(&mut self, key: &str, value: f64) {
        self.put(key, num(value));
    }
}

fn matrix_kv(m: &DMatrix<f64>) -> String {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|&x| num(x)).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("; ")
}

fn matrix_text(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|x| format!("{x:>16.10}")).collect();
        let _ = writeln!(out, "  [{} ]", row.join(" "));
    }
    out
}

fn complex_list(values: &[Complex<f64>]) -> String {
    values
        .iter()
        .map(|z| {
            if z.im.abs() < 1e-12 {
                format!("{:.10}", z.re)
            } else {
                format!("{:.10}{:+.10}i", z.re, z.im)
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}

struct AnalysisSetup {
    sys: LtvSystem,
    ctrl: IntegralController,
    horizon: f64,
    corollary: bool,
    label: String,
}

fn analysis_setup(cfg: &Config, run: &RunConfig) -> Result<AnalysisSetup, CliError> {
    let corollary = cfg.str("controller", "H") == Some("transpose");
    match setup::plant_kind(cfg)? {
        PlantKind::TwoTank => {
            let params = setup::tank_params(cfg)?;
            let ki = match &run.ki {
                Some(list) => list.first().copied().ok_or_else(|| cfg.missing("controller", "ki"))?,
                None => setup::ki_list(cfg)?[0],
            };
            let (sys, ctrl) = setup::tank_linear_loop(cfg, &params, ki)?;
            let horizon = cfg.f64_or("analysis", "horizon", params.horizon)?;
            Ok(AnalysisSetup {
                sys,
                ctrl,
                horizon,
                corollary,
                label: format!("two-tank linearisation, kI = {ki}"),
            })
        }
        PlantKind::Linear => {
            let sys = setup::linear_system(cfg)?;
            let ctrl = setup::integral_controller(cfg, &sys)?;
            let default = cfg.f64_or("simulation", "horizon", 100.0)?;
            let horizon = cfg.f64_or("analysis", "horizon", default)?;
            Ok(AnalysisSetup {
                sys,
                ctrl,
                horizon,
                corollary,
                label: "linear plant".into(),
            })
        }
    }
}

/// `analyze`: integral positivity condition, UES constants and the BIBS gain.
pub fn cmd_analyze(run: &RunConfig) -> Result<ExitStatus, CliError> {
    let cfg = run.load()?;
    analyze_with(&cfg, run)
}

fn ues_for(cfg: &Config, a: &AnalysisSetup) -> Result<Result<UesEstimate, String>, CliError> {
    let a_cl = a.sys.closed_loop(a.ctrl.k())?;
    let ues_horizon = cfg.f64_or("analysis", "ues_horizon", a.horizon / 2.0)?;
    let starts = cfg.usize_or("analysis", "ues_starts", 8)?.max(1);
    let t0_grid: Vec<f64> = (0..starts).map(|k| a.horizon * k as f64 / (2 * starts) as f64).collect();
    Ok(estimate_ues_constants(&a_cl, &t0_grid, ues_horizon, 1e-10).map_err(|e| e.to_string()))
}

fn empirical_bibs(
    cfg: &Config,
    run: &RunConfig,
    a: &AnalysisSetup,
    trials: usize,
) -> Result<(f64, f64), CliError> {
    let horizon = cfg.f64_or("analysis", "bibs_horizon", a.horizon)?;
    let sup = cfg.f64_or("analysis", "bibs_sup", 1.0)?;
    let battery = disturbance_battery(run.seed, trials, a.sys.dims().p, horizon, sup);
    let solver = setup::solver(cfg)?;
    let scenarios: Vec<Scenario> = battery
        .into_iter()
        .map(|w| {
            let mut s = Scenario::linear(
                a.sys.clone(),
                ControllerSpec::Integral(a.ctrl.clone()),
                DVector::zeros(a.sys.dims().n),
                horizon,
            )
            .with_disturbance(Disturbance::PiecewiseConstant(w));
            s.solver = solver;
            s
        })
        .collect();
    let mut worst = 0.0f64;
    for result in run_all(scenarios.iter().collect()) {
        for s in &result?.samples {
            worst = worst.max(s.x.norm());
        }
    }
    Ok((worst, sup))
}

fn analyze_with(cfg: &Config, run: &RunConfig) -> Result<ExitStatus, CliError> {
    let a = analysis_setup(cfg, run)?;
    let grid = TimeGrid::new(0.0, a.horizon, cfg.usize_or("analysis", "grid_points", 2001)?)?;
    let windows = cfg.list("analysis", "windows")?;
    let report = check_theorem1(a.ctrl.h(), &a.sys.b, a.ctrl.ki(), &grid, windows.as_deref())?;
    let corollary: Option<StabilityReport> = if a.corollary {
        Some(check_corollary1(&a.sys.b, a.ctrl.ki(), &grid)?)
    } else {
        None
    };
    let ues = ues_for(cfg, &a)?;

    let mut text = String::new();
    let mut kv = KvDoc::default();
    let _ = writeln!(text, "Stability analysis ({})", a.label);
    let _ = writeln!(text, "Integral-state condition (Q = H B):");
    text.push_str(&report.to_string());
    kv.put("plant", &a.label);
    kv.put("verdict", report.verdict.to_string());
    kv.num("psd_margin", report.psd_margin);
    kv.num("alpha", report.alpha);
    kv.num("beta", report.beta);
    kv.num("T", report.t_window);
    kv.num("grid_start", grid.start);
    kv.num("grid_end", grid.end);
    kv.put("grid_points", grid.count.to_string());
    if let Some(t) = report.witness {
        kv.num("witness", t);
    }
    if let Some(c) = &corollary {
        let _ = writeln!(text, "Simplified condition for H = Bᵀ:");
        text.push_str(&c.to_string());
        kv.put("corollary_verdict", c.verdict.to_string());
        kv.num("corollary_beta", c.beta);
    }

    let mut gamma = None;
    match &ues {
        Ok(u) => {
            let _ = writeln!(
                text,
                "Nominal loop UES constants: M = {:.6}, mu = {:.6} (fit residual {:.3e})",
                u.m, u.mu, u.fit_residual
            );
            kv.num("ues_m", u.m);
            kv.num("ues_mu", u.mu);
            if report.verdict == Verdict::Satisfied {
                let bounds = BibsBounds::collect(&a.sys, &a.ctrl, u, &report, &grid.points())?;
                match bibs_gain(&bounds) {
                    Ok(g) => {
                        let _ = writeln!(text, "BIBS gain gamma = {g:.6}");
                        let _ = writeln!(
                            text,
                            "  bounds: |B| = {:.6}, |F| = {:.6}, |H| = {:.6}, Ki in [{:.6}, {:.6}]",
                            bounds.b_bound, bounds.f_bound, bounds.h_bound, bounds.ki_min, bounds.ki_max
                        );
                        kv.num("gamma", g);
                        kv.num("b_bound", bounds.b_bound);
                        kv.num("f_bound", bounds.f_bound);
                        kv.num("h_bound", bounds.h_bound);
                        gamma = Some(g);
                    }
                    Err(e) => {
                        let _ = writeln!(text, "BIBS gain unavailable: {e}");
                    }
                }
            }
        }
        Err(e) => {
            let _ = writeln!(text, "Nominal loop UES constants unavailable: {e}");
            kv.put("ues_error", e);
        }
    }

    let trials = cfg.usize_or("analysis", "bibs_trials", 0)?;
    if let (Some(g), true) = (gamma, trials > 0) {
        let (worst, sup) = empirical_bibs(cfg, run, &a, trials)?;
        let holds = worst <= g * sup;
        let _ = writeln!(
            text,
            "Empirical BIBS check: {trials} disturbances (seed {}), sup |x| = {worst:.6} {} gamma * sup|w| = {:.6}",
            run.seed,
            if holds { "<=" } else { ">" },
            g * sup
        );
        kv.put("bibs_trials", trials.to_string());
        kv.put("bibs_seed", run.seed.to_string());
        kv.num("bibs_empirical_sup", worst);
        kv.put("bibs_holds", holds.to_string());
    }

    let status = match report.verdict {
        Verdict::Satisfied => ExitStatus::Success,
        Verdict::Violated => ExitStatus::Failure,
        Verdict::Inconclusive => {
            let _ = writeln!(
                text,
                "Inconclusive: the window length needed for the integral condition exceeds half the analysis \
                 horizon; extend [analysis] horizon or supply [analysis] windows."
            );
            ExitStatus::Inconclusive
        }
    };
    create_out(&run.out)?;
    write_file(&run.out.join("report.txt"), &text)?;
    write_file(&run.out.join("report.kv"), &kv.0)?;
    print!("{text}");
    Ok(status)
}

/// `ti`: constant gains `M`, `H` and the closed-loop eigenvalue check.
pub fn cmd_ti(run: &RunConfig) -> Result<ExitStatus, CliError> {
    let cfg = run.load()?;
    let a = cfg.require_matrix("plant", "A")?;
    let b = cfg.require_matrix("plant", "B")?;
    let c = cfg.require_matrix("plant", "C")?;
    let (n, l) = (a.nrows(), b.ncols());
    let k = cfg.matrix_shaped("controller", "K", l, n)?.unwrap_or_else(|| DMatrix::zeros(l, n));
    let ki = setup::integral_gain(&cfg, l)?;
    let plant = TiPlant::new(a, b.clone(), c, k)?;
    let m = compute_m_ti(&plant)?;
    let h = compute_h_ti(&plant, &m)?;
    let hb = &h * &b;
    let eigs = closed_loop_eigs(&plant, &ki, &h)?;
    let verified = eigs.precondition_holds() && eigs.distance < EIGEN_UNION_TOL;

    let mut text = String::new();
    let _ = write!(text, "M = [C (A - BK)^-1 B]^+ =\n{}", matrix_text(&m));
    let _ = write!(text, "H = M C (A - BK)^-1 =\n{}", matrix_text(&h));
    let _ = write!(text, "H B =\n{}", matrix_text(&hb));
    let _ = writeln!(text, "closed-loop eigenvalues   : {}", complex_list(&eigs.computed));
    let _ = writeln!(text, "eig(A - BK) U eig(-Ki)    : {}", complex_list(&eigs.expected));
    let _ = writeln!(text, "matching distance         : {:.3e}", eigs.distance);
    let _ = writeln!(text, "|HB - I|                  : {:.3e}", eigs.hb_error);
    let _ = writeln!(
        text,
        "eigenvalue union          : {}",
        if verified { "verified" } else { "NOT verified" }
    );

    let mut kv = KvDoc::default();
    kv.put("M", matrix_kv(&m));
    kv.put("H", matrix_kv(&h));
    kv.put("HB", matrix_kv(&hb));
    kv.put(
        "eigenvalues_re",
        eigs.computed.iter().map(|z| num(z.re)).collect::<Vec<_>>().join(", "),
    );
    kv.put(
        "eigenvalues_im",
        eigs.computed.iter().map(|z| num(z.im)).collect::<Vec<_>>().join(", "),
    );
    kv.put(
        "expected_re",
        eigs.expected.iter().map(|z| num(z.re)).collect::<Vec<_>>().join(", "),
    );
    kv.num("distance", eigs.distance);
    kv.num("hb_error", eigs.hb_error);
    kv.put("verified", verified.to_string());

    create_out(&run.out)?;
    write_file(&run.out.join("ti_report.txt"), &text)?;
    write_file(&run.out.join("ti_report.kv"), &kv.0)?;
    print!("{text}");
    Ok(if verified { ExitStatus::Success } else { ExitStatus::Failure })
}
