//! Independent feasibility check of a [`Solution`].
//!
//! Everything here is recomputed from the scenario and the raw channel
//! constants; nothing is borrowed from the solver modules, so a shared bug
//! cannot hide a violation.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::orchestrator::Solution;
use crate::scenario::Scenario;

const REL_TOL: f64 = 1e-9;
const LOS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    SingleAssociation,
    Bandwidth,
    Rate,
    Delay,
    LineOfSight,
    Backhaul,
    Altitude,
    Bookkeeping,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Constraint::SingleAssociation => "single-association",
            Constraint::Bandwidth => "bandwidth",
            Constraint::Rate => "rate",
            Constraint::Delay => "delay",
            Constraint::LineOfSight => "line-of-sight",
            Constraint::Backhaul => "backhaul",
            Constraint::Altitude => "altitude",
            Constraint::Bookkeeping => "bookkeeping",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: Constraint,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, constraint: Constraint, detail: String) {
        self.violations.push(Violation { constraint, detail });
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("no violations");
        }
        for v in &self.violations {
            writeln!(f, "[{}] {}", v.constraint, v.detail)?;
        }
        Ok(())
    }
}

fn lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Minimum elevation (deg) at which the LoS probability reaches `a`.
fn min_elevation_deg(p: &ChannelParams) -> f64 {
    let a = p.los_threshold;
    p.kappa - ((1.0 / a - 1.0) / p.kappa).ln() / p.zeta
}

fn los_probability(elev_deg: f64, p: &ChannelParams) -> f64 {
    1.0 / (1.0 + p.kappa * (-p.zeta * (elev_deg - p.kappa)).exp())
}

/// Checks single association, bandwidth budgets, achieved rates, delay,
/// line of sight, backhaul capacity and altitude bounds.
pub fn audit(solution: &Solution, scenario: &Scenario, params: &ChannelParams) -> AuditReport {
    let mut report = AuditReport::default();
    let n = scenario.users.len();
    let j_count = scenario.abs_count;
    let cols = j_count + 1;

    if solution.abs_positions.len() != j_count {
        report.push(
            Constraint::Bookkeeping,
            format!("{} ABS positions for {} ABSs", solution.abs_positions.len(), j_count),
        );
        return report;
    }
    if solution.serving.len() != n || solution.beta.len() != n || solution.link_power.len() != n {
        report.push(Constraint::SingleAssociation, "per-user vectors do not cover every user".into());
        return report;
    }

    let noise = p_noise(params);
    let b_deg = min_elevation_deg(params);
    let theta_b_deg = 2.0 * (90.0 - b_deg);
    let g0 = 30000.0 / (theta_b_deg * theta_b_deg);
    let friis = (4.0 * PI * params.fc / params.c).powi(2);

    let mut share = vec![0.0; cols];
    let mut usage = vec![0.0; cols];
    let mut power = 0.0;
    let mut abs_power = 0.0;

    for (j, p) in solution.abs_positions.iter().enumerate() {
        if !(p.z >= params.z_min * (1.0 - REL_TOL) && p.z <= params.z_max * (1.0 + REL_TOL)) {
            report.push(Constraint::Altitude, format!("ABS {j} at z = {} m", p.z));
        }
    }

    for i in 0..n {
        let u = &scenario.users[i];
        let s = solution.serving[i];
        if s >= cols {
            report.push(Constraint::SingleAssociation, format!("user {i} assigned to missing BS {s}"));
            continue;
        }
        let beta = solution.beta[i];
        if !(beta > 0.0 && beta <= 1.0 + REL_TOL) {
            report.push(Constraint::Bandwidth, format!("user {i} has bandwidth fraction {beta}"));
            continue;
        }
        share[s] += beta;

        let cached = scenario.cached(i, s);
        if u.delay_sensitive && !cached {
            report.push(Constraint::Delay, format!("delay-sensitive user {i} served by BS {s} without its content"));
        }

        let (gain, loss) = if s == 0 {
            let dx = u.position.x - scenario.mbs_position.x;
            let dy = u.position.y - scenario.mbs_position.y;
            let d = (dx * dx + dy * dy).sqrt().max(1.0);
            (1.0, 10f64.powf(1.52) * d.powf(3.76))
        } else {
            let a = &solution.abs_positions[s - 1];
            let r = ((a.x - u.position.x).powi(2) + (a.y - u.position.y).powi(2)).sqrt();
            let elev = a.z.atan2(r).to_degrees();
            let plos = los_probability(elev, params);
            if plos < params.los_threshold - LOS_TOL {
                report.push(
                    Constraint::LineOfSight,
                    format!("user {i} sees ABS {} at {elev:.6} deg (P_LoS {plos:.9})", s - 1),
                );
            }
            let gain = if elev >= b_deg - 1e-6 { g0 } else { params.side_lobe_gain };
            let d2 = r * r + a.z * a.z;
            (gain, friis * lin(params.psi_los_db) * d2)
        };

        let p_tx = solution.link_power[i];
        let bw = params.b_access * beta;
        let snr = p_tx * gain / (loss * noise * bw);
        let rate = bw * (1.0 + snr).log2();
        if !(rate >= u.rate_demand * (1.0 - REL_TOL)) {
            report.push(
                Constraint::Rate,
                format!("user {i} gets {rate:.6e} bit/s of {:.6e}", u.rate_demand),
            );
        }
        power += p_tx;
        if s > 0 {
            abs_power += p_tx;
            if !cached {
                usage[s] += u.rate_demand;
            }
        }
    }

    for (col, total) in share.iter().enumerate() {
        if *total > 1.0 + REL_TOL {
            report.push(Constraint::Bandwidth, format!("BS {col} hands out {total} of its band"));
        }
    }

    for j in 0..j_count {
        let a = &solution.abs_positions[j];
        let dx = a.x - scenario.mbs_position.x;
        let dy = a.y - scenario.mbs_position.y;
        let d2 = dx * dx + dy * dy + a.z * a.z;
        let h = 10f64.powf(6.14) * d2;
        let w = params.w_backhaul;
        let cap = w / j_count as f64 * (1.0 + params.p0_mbs / (h * noise * w)).log2();
        if usage[j + 1] > cap * (1.0 + REL_TOL) {
            report.push(
                Constraint::Backhaul,
                format!("ABS {j} pulls {:.6e} bit/s over a {cap:.6e} bit/s backhaul", usage[j + 1]),
            );
        }
        if let Some(&reported) = solution.backhaul_usage.get(j) {
            if (reported - usage[j + 1]).abs() > REL_TOL * usage[j + 1].max(1.0) {
                report.push(Constraint::Bookkeeping, format!("ABS {j} reports backhaul usage {reported}"));
            }
        }
    }

    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1e-300);
    if !close(solution.total_power, power) {
        report.push(
            Constraint::Bookkeeping,
            format!("total power {} differs from the link sum {power}", solution.total_power),
        );
    }
    if !close(solution.abs_total_power, abs_power) && !(abs_power == 0.0 && solution.abs_total_power == 0.0) {
        report.push(
            Constraint::Bookkeeping,
            format!("ABS power {} differs from the link sum {abs_power}", solution.abs_total_power),
        );
    }
    report
}

fn p_noise(p: &ChannelParams) -> f64 {
    p.n0 * lin(p.noise_figure_db)
}
