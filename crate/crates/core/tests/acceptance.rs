//! Acceptance suite: one line per criterion, nonzero exit status on any failure.
//!
//! Run with `cargo test -p ltv-integral --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ltv_integral::analysis::{
    bibs_gain, check_corollary1, check_theorem1, disturbance_battery, verify_exponential_envelope, z_coordinate,
    BibsBounds, TimeGrid, Verdict,
};
use ltv_integral::controller::IntegralController;
use ltv_integral::dual::propagate_h;
use ltv_integral::linalg::{lambda_min, spectral_abscissa};
use ltv_integral::ltv::{estimate_ues_constants, LtvSystem, MatrixFunction};
use ltv_integral::ode::{integrate, SolverSettings};
use ltv_integral::sim::{run_scenario, tail_error, ControllerSpec, Disturbance, Scenario, Trajectory};
use ltv_integral::tank::{ProposedTankController, TankParams};
use ltv_integral::ti::{closed_loop_eigs, compute_h_ti, compute_m_ti, TiPlant};
use ltv_integral::{DMatrix, DVector, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Symmetric positive definite with eigenvalues in `[lo, hi]`.
fn random_spd(rng: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let q = random_matrix(rng, dim, dim).qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(dim, |_, _| rng.gen_range(lo..hi)));
    let m = &q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}

fn tank_run(params: TankParams, controller: ControllerSpec) -> Result<Trajectory, Error> {
    run_scenario(&Scenario::two_tank(params, controller))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let params = TankParams::default();
    let (sys, ctrl) = ProposedTankController::new(params).generic().map_err(|e| e.to_string())?;
    // Error coordinates of empty tanks at t = 0.
    let r0 = ltv_integral::tank::reference_trajectory(&params, 0.0).map_err(|e| e.to_string())?;
    let x0 = DVector::from_column_slice(&[-r0.zref1, -r0.zref2]);
    let k = ctrl.k().clone();
    let traj = run_scenario(&Scenario::linear(sys, ControllerSpec::Integral(ctrl), x0, 500.0)).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for s in &traj.samples {
        let residual = &s.u + k.eval(s.t).map_err(|e| e.to_string())? * &s.x;
        worst = worst.max(residual.amax());
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-8 && elapsed < Duration::from_secs(5),
        format!("max |u + Kx| = {worst:.3e} V, runtime {:.2} s", elapsed.as_secs_f64()),
    )
}

struct Sweep {
    p1: Trajectory,
    i1: Trajectory,
    p10: Trajectory,
    i10: Trajectory,
    p10_no_aw: Trajectory,
    elapsed: Duration,
}

fn sweep() -> Result<Sweep, String> {
    let start = Instant::now();
    let base = TankParams::default();
    let with_ki = |ki| TankParams { ki, ..base };
    let proposed = ControllerSpec::Proposed { antiwindup: true };
    let run = |p, c: &ControllerSpec| tank_run(p, c.clone()).map_err(|e| e.to_string());
    let p1 = run(with_ki(1.0), &proposed)?;
    let i1 = run(with_ki(1.0), &ControllerSpec::StandardI)?;
    let p10 = run(with_ki(10.0), &proposed)?;
    let i10 = run(with_ki(10.0), &ControllerSpec::StandardI)?;
    let elapsed = start.elapsed();
    let p10_no_aw = run(with_ki(10.0), &ControllerSpec::Proposed { antiwindup: false })?;
    Ok(Sweep {
        p1,
        i1,
        p10,
        i10,
        p10_no_aw,
        elapsed,
    })
}

fn final_fraction_error(traj: &Trajectory, fraction: f64) -> f64 {
    tail_error(&traj.times(), &traj.state(1), &traj.reference(1), fraction)
}

fn criterion_2(s: &Sweep) -> Outcome {
    let (m_p1, m_i1) = (s.p1.tracking_metrics(1), s.i1.tracking_metrics(1));
    let (m_p10, m_i10) = (s.p10.tracking_metrics(1), s.i10.tracking_metrics(1));
    let (ts_p, ts_i) = (m_p1.settling_time_2pct, m_i1.settling_time_2pct);
    let settle = ts_p.is_finite() && ts_i.is_finite() && (ts_p - ts_i).abs() <= 0.25 * ts_p.min(ts_i);
    let oscillation = m_i10.oscillation_count >= 3 * m_p10.oscillation_count && m_i10.oscillation_count > 0;
    let tail = final_fraction_error(&s.p1, 0.2);
    check(
        settle && oscillation && tail < 0.05 && s.elapsed < Duration::from_secs(30),
        format!(
            "(a) settling {ts_p:.1} s vs {ts_i:.1} s; (b) oscillations I {} vs proposed {} at kI = 10; \
             (c) final-20% error {tail:.2e} cm; sweep {:.2} s",
            m_i10.oscillation_count,
            m_p10.oscillation_count,
            s.elapsed.as_secs_f64()
        ),
    )
}

fn criterion_3(s: &Sweep) -> Outcome {
    let with = s.p10.tracking_metrics(1).max_overshoot;
    let without = s.p10_no_aw.tracking_metrics(1).max_overshoot;
    let params = TankParams::default();
    // The inflow enters the upper tank like a pump input of w / c3 volts.
    let w0 = params.w / params.c3;
    let end = s.p10.samples.last().map_or(0.0, |x| x.t);
    let residual = s
        .p10
        .samples
        .iter()
        .filter(|x| x.t >= 0.75 * end)
        .map(|x| (x.u[0] - x.u_ref[0] + w0).abs())
        .fold(0.0, f64::max);
    check(
        with < without && residual < 1e-2,
        format!("overshoot {with:.3} cm with AW vs {without:.3} cm without; final-quarter |u + Kx + w0| = {residual:.2e} V"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let grid = TimeGrid::over(0.0, 10.0).map_err(|e| e.to_string())?;
    let (mut tested, mut worst) = (0, 0.0f64);
    while tested < 50 {
        let n = rng.gen_range(2..=5);
        let l = rng.gen_range(1..=n);
        let b = random_matrix(&mut rng, n, l) * rng.gen_range(0.5..2.0);
        let beta_true = lambda_min(&(b.transpose() * &b));
        if beta_true < 0.1 {
            continue;
        }
        let ki = random_spd(&mut rng, l, 0.1, 5.0);
        let bf = MatrixFunction::constant(b.clone());
        let cor = check_corollary1(&bf, &ki, &grid).map_err(|e| e.to_string())?;
        if cor.verdict != Verdict::Satisfied {
            return Err(format!("the H = Bᵀ check rejected a plant with λmin(BᵀB) = {beta_true}"));
        }
        let thm = check_theorem1(&bf.transpose(), &bf, &ki, &grid, None).map_err(|e| e.to_string())?;
        let rel = (thm.beta - beta_true).abs() / beta_true;
        if thm.verdict != Verdict::Satisfied || thm.t_window != 0.0 || rel > 0.05 {
            return Err(format!(
                "the general check gave {} with T = {}, β = {} (expected {beta_true})",
                thm.verdict, thm.t_window, thm.beta
            ));
        }
        worst = worst.max(rel);
        tested += 1;
    }
    Ok(format!("{tested} plants, T = 0 throughout, worst relative β gap {worst:.2e}"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let horizon = 20.0;
    let grid = TimeGrid::new(0.0, horizon, 4001).map_err(|e| e.to_string())?;
    let (mut tested, mut attempts, mut worst) = (0, 0, f64::NEG_INFINITY);
    while tested < 20 {
        attempts += 1;
        if attempts > 200 {
            return Err(format!("only {tested} random loops passed the integral condition"));
        }
        let n = rng.gen_range(2..=4);
        let l = rng.gen_range(1..=2.min(n));
        let mut a0 = random_matrix(&mut rng, n, n);
        a0 -= DMatrix::identity(n, n) * (spectral_abscissa(&a0) + 1.5);
        let a1 = random_matrix(&mut rng, n, n) * 0.3;
        let b0 = random_matrix(&mut rng, n, l);
        let b1 = random_matrix(&mut rng, n, l) * 0.4;
        let omega = rng.gen_range(0.2..2.0);
        let (b0c, b1c) = (b0.clone(), b1.clone());
        let b = MatrixFunction::from_fn(n, l, move |t| &b0c + &b1c * (omega * t).sin())
            .with_derivative(move |t| &b1 * (omega * (omega * t).cos()));
        let sys = LtvSystem::new(
            MatrixFunction::from_fn(n, n, move |t| &a0 + &a1 * (0.7 * t).cos()),
            b.clone(),
            MatrixFunction::zeros(n, 1),
            MatrixFunction::constant(DMatrix::identity(n, n)),
        )
        .map_err(|e| e.to_string())?;
        let ki = random_spd(&mut rng, l, 0.3, 3.0);
        let h = b.transpose();
        let report = check_theorem1(&h, &b, &ki, &grid, None).map_err(|e| e.to_string())?;
        if report.verdict != Verdict::Satisfied {
            continue;
        }
        let ctrl = IntegralController::new(MatrixFunction::zeros(l, n), h.clone(), ki.clone()).map_err(|e| e.to_string())?;
        let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        // Stop once the envelope has decayed by e^{-15}; beyond that ‖z‖ sits at the roundoff floor.
        let span = horizon.min(15.0 / report.rate());
        let mut scenario = Scenario::linear(sys, ControllerSpec::Integral(ctrl), x0, span);
        scenario.v0 = Some(DVector::from_fn(l, |_, _| rng.gen_range(-1.0..1.0)));
        scenario.solver = SolverSettings::rk4(0.001);
        scenario.sample_interval = 0.02;
        let traj = run_scenario(&scenario).map_err(|e| e.to_string())?;
        let zero = DVector::zeros(l);
        let z: Vec<(f64, DVector<f64>)> = traj
            .samples
            .iter()
            .map(|s| Ok((s.t, z_coordinate(s.t, &s.x, &s.v, &zero, &h, &ki)?)))
            .collect::<Result<_, Error>>()
            .map_err(|e| e.to_string())?;
        let env = verify_exponential_envelope(&z, report.alpha, report.beta, report.t_window, &ki, 1e-9);
        worst = worst.max(env.max_violation);
        if !env.holds {
            return Err(format!("envelope exceeded by {:.3e} (relative) on loop {tested}", env.max_violation));
        }
        tested += 1;
    }
    Ok(format!("{tested} loops, largest ‖z‖/envelope − 1 = {worst:.3e}"))
}

fn criterion_6() -> Outcome {
    let params = TankParams::default();
    let (sys, ctrl) = ProposedTankController::new(params).generic().map_err(|e| e.to_string())?;
    let a_cl = sys.closed_loop(ctrl.k()).map_err(|e| e.to_string())?;
    let period = 1.0 / params.c6;
    let starts: Vec<f64> = (0..8).map(|k| k as f64 * period / 8.0).collect();
    let ues = estimate_ues_constants(&a_cl, &starts, 150.0, 1e-10).map_err(|e| e.to_string())?;
    let horizon = 300.0;
    let grid = TimeGrid::over(0.0, horizon).map_err(|e| e.to_string())?;
    let report = check_theorem1(ctrl.h(), &sys.b, ctrl.ki(), &grid, None).map_err(|e| e.to_string())?;
    let bounds = BibsBounds::collect(&sys, &ctrl, &ues, &report, &grid.points()).map_err(|e| e.to_string())?;
    let gamma = bibs_gain(&bounds).map_err(|e| e.to_string())?;
    let battery = disturbance_battery(6, 100, 1, horizon, 1.0);
    let mut worst = 0.0f64;
    for w in battery {
        let mut scenario = Scenario::linear(sys.clone(), ControllerSpec::Integral(ctrl.clone()), DVector::zeros(2), horizon)
            .with_disturbance(Disturbance::PiecewiseConstant(w));
        scenario.solver = SolverSettings::rk4(0.05);
        scenario.sample_interval = 0.5;
        let traj = run_scenario(&scenario).map_err(|e| e.to_string())?;
        for s in &traj.samples {
            worst = worst.max(s.x.norm());
        }
    }
    check(
        worst <= gamma,
        format!(
            "empirical sup ‖x‖ = {worst:.3} ≤ γ = {gamma:.3} (M = {:.3}, μ = {:.4}, β = {:.4}, T = {})",
            ues.m, ues.mu, report.beta, report.t_window
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut tested, mut worst) = (0, 0.0f64);
    while tested < 100 {
        let n = rng.gen_range(2..=6);
        let l = rng.gen_range(1..=n.min(3));
        let mut a = random_matrix(&mut rng, n, n);
        let b = random_matrix(&mut rng, n, l);
        let c = random_matrix(&mut rng, l, n);
        let k = random_matrix(&mut rng, l, n) * 0.5;
        let abscissa = spectral_abscissa(&(&a - &b * &k));
        a -= DMatrix::identity(n, n) * (abscissa + rng.gen_range(0.2..2.0));
        let Ok(plant) = TiPlant::new(a, b, c, k) else { continue };
        let Ok(m) = compute_m_ti(&plant) else { continue };
        let h = compute_h_ti(&plant, &m).map_err(|e| e.to_string())?;
        let ki = random_spd(&mut rng, l, 0.1, 5.0);
        let eigs = closed_loop_eigs(&plant, &ki, &h).map_err(|e| e.to_string())?;
        if !eigs.precondition_holds() {
            continue;
        }
        worst = worst.max(eigs.distance);
        tested += 1;
    }
    let worked = TiPlant::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DMatrix::from_row_slice(1, 2, &[2.0, 3.0]),
    )
    .map_err(|e| e.to_string())?;
    let h = compute_h_ti(&worked, &compute_m_ti(&worked).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let eigs = closed_loop_eigs(&worked, &DMatrix::from_element(1, 1, 1.0), &h).map_err(|e| e.to_string())?;
    let exact = eigs
        .computed
        .iter()
        .zip([-2.0, -1.0, -1.0])
        .all(|(z, e)| (z.re - e).abs() < 1e-10 && z.im.abs() < 1e-10);
    check(
        worst < 1e-8 && exact,
        format!("{tested} plants, worst multiset distance {worst:.2e}; worked example {:?}", eigs.computed.iter().map(|z| z.re).collect::<Vec<_>>()),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let mut tested = 0;
    while tested < 10 {
        let n = rng.gen_range(2..=4);
        let l = rng.gen_range(1..=2.min(n));
        let mut a = random_matrix(&mut rng, n, n);
        let b = random_matrix(&mut rng, n, l);
        let c = random_matrix(&mut rng, l, n);
        let abscissa = spectral_abscissa(&a);
        a -= DMatrix::identity(n, n) * (abscissa + rng.gen_range(0.3..1.5));
        let k = DMatrix::zeros(l, n);
        let Ok(plant) = TiPlant::new(a.clone(), b.clone(), c.clone(), k.clone()) else { continue };
        let Ok(m) = compute_m_ti(&plant) else { continue };
        let h0 = compute_h_ti(&plant, &m).map_err(|e| e.to_string())?;
        let tau = -1.0 / spectral_abscissa(&plant.nominal());
        let span = 10.0 * tau;
        let times: Vec<f64> = (1..=200).map(|i| span * i as f64 / 200.0).collect();
        let sys = LtvSystem::time_invariant(a, b, DMatrix::zeros(n, 1), c).map_err(|e| e.to_string())?;
        let traj = propagate_h(
            &sys,
            &MatrixFunction::constant(k),
            &MatrixFunction::constant(m),
            &h0,
            (0.0, span),
            &SolverSettings::rk4(tau / 200.0),
            &times,
        )
        .map_err(|e| e.to_string())?;
        if traj.diverged() {
            return Err("fixed point diverged".into());
        }
        worst = worst.max(traj.relative_drift());
        tested += 1;
    }
    check(worst < 1e-6, format!("{tested} plants over 10 time constants, worst relative drift {worst:.2e}"))
}

fn criterion_9() -> Outcome {
    let error = |step: f64| -> Result<f64, String> {
        let sol = integrate(
            |_, x, dx| {
                dx[0] = -x[0];
                Ok(())
            },
            &[1.0],
            (0.0, 1.0),
            &SolverSettings::rk4(step),
            &[1.0],
        )
        .map_err(|e| e.to_string())?;
        Ok((sol.samples[0].1[0] - (-1.0f64).exp()).abs())
    };
    let ratio = error(0.1)? / error(0.05)?;
    check((12.0..=20.0).contains(&ratio), format!("error ratio {ratio:.3}"))
}

fn main() -> ExitCode {
    let sweep = sweep();
    let from_sweep = |f: fn(&Sweep) -> Outcome| match &sweep {
        Ok(s) => f(s),
        Err(e) => Err(format!("sweep failed: {e}")),
    };
    let results = [
        ("1 performance preservation", criterion_1()),
        ("2 two-tank reproduction", from_sweep(criterion_2)),
        ("3 anti-windup", from_sweep(criterion_3)),
        ("4 general vs H = Bᵀ condition", criterion_4()),
        ("5 exponential envelope", criterion_5()),
        ("6 BIBS bound", criterion_6()),
        ("7 time-invariant eigenvalue union", criterion_7()),
        ("8 dual fixed point", criterion_8()),
        ("9 RK4 order", criterion_9()),
    ];
    let mut failed = 0;
    for (name, result) in &results {
        match result {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
