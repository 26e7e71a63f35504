//! CSV traces and the run summary.

use std::fmt::Write as _;

use ltv_integral::sim::{tail_error, Trajectory};

pub const TANK_HEADER: &str = "t,z1,z2,zref1,zref2,q,q_star,v,err2";

/// 17 significant digits; parses back to the identical `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn first_or_zero(v: &ltv_integral::DVector<f64>) -> f64 {
    v.get(0).copied().unwrap_or(0.0)
}

/// Two-tank trace with the fixed column set.
pub fn tank_csv(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(traj.samples.len() * 200);
    out.push_str(TANK_HEADER);
    out.push('\n');
    for s in &traj.samples {
        let row = [
            s.t,
            s.x[0],
            s.x[1],
            s.reference[0],
            s.reference[1],
            s.u[0],
            s.u_star[0],
            first_or_zero(&s.v),
            s.x[1] - s.reference[1],
        ];
        let line: Vec<String> = row.iter().map(|&x| num(x)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Linear-plant trace: `t, x1.., v1.., u1.., u_star1.., w1..`.
pub fn linear_csv(traj: &Trajectory) -> String {
    let Some(first) = traj.samples.first() else {
        return String::from("t\n");
    };
    let mut header = vec!["t".to_string()];
    let groups = [
        ("x", first.x.len()),
        ("v", first.v.len()),
        ("u", first.u.len()),
        ("u_star", first.u_star.len()),
        ("w", first.w.len()),
    ];
    for (name, len) in groups {
        header.extend((1..=len).map(|i| format!("{name}{i}")));
    }
    let mut out = header.join(",");
    out.push('\n');
    for s in &traj.samples {
        let mut row = vec![num(s.t)];
        for v in [&s.x, &s.v, &s.u, &s.u_star, &s.w] {
            row.extend(v.iter().map(|&x| num(x)));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Whether every recorded value is finite.
pub fn all_finite(traj: &Trajectory) -> bool {
    traj.samples.iter().all(|s| {
        [&s.x, &s.reference, &s.v, &s.u, &s.u_star, &s.w]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    })
}

/// Summary row of one sweep member.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub controller: String,
    pub ki: f64,
    pub antiwindup: bool,
    pub settling_time_2pct: f64,
    pub max_overshoot: f64,
    pub oscillation_count: usize,
    pub final_error: f64,
    pub tail_error_20pct: f64,
    pub steps: usize,
}

impl RunSummary {
    pub fn tank(name: &str, controller: &str, ki: f64, antiwindup: bool, traj: &Trajectory) -> Self {
        let m = traj.tracking_metrics(1);
        Self {
            name: name.to_string(),
            controller: controller.to_string(),
            ki,
            antiwindup,
            settling_time_2pct: m.settling_time_2pct,
            max_overshoot: m.max_overshoot,
            oscillation_count: m.oscillation_count,
            final_error: m.final_error,
            tail_error_20pct: tail_error(&traj.times(), &traj.state(1), &traj.reference(1), 0.2),
            steps: traj.steps,
        }
    }
}

pub const SUMMARY_HEADER: &str =
    "run,controller,ki,antiwindup,settling_time_2pct,max_overshoot,oscillation_count,final_error,tail_error_20pct,steps";

pub fn summary_csv(rows: &[RunSummary]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let settling = if r.settling_time_2pct.is_finite() {
            num(r.settling_time_2pct)
        } else {
            "inf".to_string()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.name,
            r.controller,
            num(r.ki),
            r.antiwindup,
            settling,
            num(r.max_overshoot),
            r.oscillation_count,
            num(r.final_error),
            num(r.tail_error_20pct),
            r.steps
        );
    }
    out
}

/// Human-readable summary table.
pub fn summary_table(rows: &[RunSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<22} {:>6} {:>12} {:>12} {:>6} {:>12}",
        "run", "kI", "settle [s]", "overshoot", "osc", "tail |e2|"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<22} {:>6} {:>12.2} {:>12.4} {:>6} {:>12.3e}",
            r.name, r.ki, r.settling_time_2pct, r.max_overshoot, r.oscillation_count, r.tail_error_20pct
        );
    }
    out
}
