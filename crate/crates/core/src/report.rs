//! Settlement, penalty-coefficient sweeps and plot-ready series.

use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::BaselineResult;
use crate::error::{Error, Result};
use crate::milp::{unit_baseline_cost, Schedule};
use crate::robust::RobustMargin;
use crate::scenario::Scenario;
use crate::solver::{solve_cluster, SolverKind};
use crate::units::{format_cents, kwh, to_cents};

/// Cluster cost settlement, CNY.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub baseline_electricity_cost: f64,
    pub controlled_electricity_cost: f64,
    pub penalty_cost: f64,
    pub controlled_total: f64,
    pub aggregator_revenue: f64,
}

impl CostReport {
    pub fn new(baseline_electricity_cost: f64, controlled_electricity_cost: f64, penalty_cost: f64) -> Self {
        let controlled_total = controlled_electricity_cost + penalty_cost;
        CostReport {
            baseline_electricity_cost,
            controlled_electricity_cost,
            penalty_cost,
            controlled_total,
            aggregator_revenue: baseline_electricity_cost - controlled_total,
        }
    }

    /// The same report in whole cents. Totals are sums of the rounded parts,
    /// so the identities hold exactly in the written file.
    pub fn cents(&self) -> CentsReport {
        let baseline = to_cents(self.baseline_electricity_cost);
        let electricity = to_cents(self.controlled_electricity_cost);
        let penalty = to_cents(self.penalty_cost);
        CentsReport {
            baseline,
            electricity,
            penalty,
            total: electricity + penalty,
            revenue: baseline - electricity - penalty,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CentsReport {
    pub baseline: i64,
    pub electricity: i64,
    pub penalty: i64,
    pub total: i64,
    pub revenue: i64,
}

fn cluster_electricity(scenario: &Scenario, power: &[Vec<f64>]) -> f64 {
    power.iter().map(|p| unit_baseline_cost(scenario, p)).sum()
}

pub fn settle(baseline: &BaselineResult, schedule: &Schedule, scenario: &Scenario) -> Result<CostReport> {
    let (g, n) = (scenario.units.len(), scenario.periods());
    let dims_ok = baseline.units() == g
        && baseline.periods() == n
        && schedule.power.len() == g
        && schedule.theta_nominal.len() == g
        && schedule.power.iter().chain(&schedule.theta_nominal).all(|r| r.len() == n);
    if !dims_ok {
        return Err(Error::Config(format!(
            "settlement needs {g} units by {n} periods in both baseline and schedule"
        )));
    }
    let deviation: f64 = scenario
        .units
        .iter()
        .zip(&schedule.theta_nominal)
        .map(|(u, th)| th.iter().map(|x| (x - u.theta_set).abs()).sum::<f64>())
        .sum();
    Ok(CostReport::new(
        cluster_electricity(scenario, &baseline.mean_power),
        cluster_electricity(scenario, &schedule.power),
        scenario.beta * scenario.horizon.dt_hours() * deviation,
    ))
}

/// Writes the settlement as a small table: one row for the uncontrolled
/// cluster and one for the controlled cluster.
pub fn write_report_csv(report: &CostReport, out: impl Write) -> Result<()> {
    let c = report.cents();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case", "electricity_cost_CNY", "penalty_cost_CNY", "total_cost_CNY", "revenue_CNY"])?;
    w.write_record([
        "uncontrolled".to_string(),
        format_cents(c.baseline),
        format_cents(0),
        format_cents(c.baseline),
        format_cents(0),
    ])?;
    w.write_record([
        "controlled".to_string(),
        format_cents(c.electricity),
        format_cents(c.penalty),
        format_cents(c.total),
        format_cents(c.revenue),
    ])?;
    w.flush().map_err(|e| Error::io("writing report", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub beta: f64,
    pub revenue: f64,
    pub penalty: f64,
    pub peak_power_reduction_fraction: f64,
}

/// Re-solves the cluster for every penalty coefficient. Rows come back
/// sorted by `beta`.
pub fn sweep_beta(
    scenario: &Scenario,
    baseline: &BaselineResult,
    margins: &[RobustMargin],
    betas: &[f64],
    solver: SolverKind,
) -> Result<Vec<SensitivityRow>> {
    if betas.is_empty() {
        return Err(Error::Config("beta sweep needs at least one value".into()));
    }
    if let Some(b) = betas.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
        return Err(Error::Config(format!("beta must be finite and nonnegative, got {b}")));
    }
    let mut sorted = betas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let window = scenario.prices.peak_window();
    sorted
        .par_iter()
        .map(|&beta| {
            let mut s = scenario.clone();
            s.beta = beta;
            let solved = solve_cluster(&s, baseline, margins, solver)?;
            Ok(SensitivityRow {
                beta,
                revenue: solved.report.aggregator_revenue,
                penalty: solved.report.penalty_cost,
                peak_power_reduction_fraction: peak_shaving_summary(baseline, &solved.schedule, window.clone())?,
            })
        })
        .collect()
}

pub fn write_sensitivity_csv(rows: &[SensitivityRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["beta", "revenue_CNY", "penalty_CNY", "peak_power_reduction_fraction"])?;
    for r in rows {
        w.write_record([
            r.beta.to_string(),
            format_cents(to_cents(r.revenue)),
            format_cents(to_cents(r.penalty)),
            format!("{:.6}", r.peak_power_reduction_fraction),
        ])?;
    }
    w.flush().map_err(|e| Error::io("writing sensitivity table", e))?;
    Ok(())
}

/// Energy over a period range, kWh.
pub fn window_energy(power: &[Vec<f64>], window: Range<usize>, dt: f64) -> f64 {
    power
        .iter()
        .map(|row| row[window.clone()].iter().map(|&p| kwh(p, dt)).sum::<f64>())
        .sum()
}

/// Fraction of baseline energy removed inside `window`.
pub fn peak_shaving_summary(baseline: &BaselineResult, schedule: &Schedule, window: Range<usize>) -> Result<f64> {
    let n = baseline.periods();
    if window.start > window.end || window.end > n || schedule.periods() != n {
        return Err(Error::Config(format!(
            "peak window {}..{} does not fit a {n}-period horizon",
            window.start, window.end
        )));
    }
    // dt cancels in the ratio
    let controlled = window_energy(&schedule.power, window.clone(), 1.0);
    if controlled == 0.0 {
        return Ok(1.0);
    }
    let base = window_energy(&baseline.mean_power, window, 1.0);
    if base == 0.0 {
        return Err(Error::Config("baseline uses no energy in the peak window".into()));
    }
    Ok(1.0 - controlled / base)
}

/// `t,clock,baseline_power_W,controlled_power_W`.
pub fn write_power_series(
    scenario: &Scenario,
    baseline: &BaselineResult,
    schedule: &Schedule,
    out: impl Write,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "clock", "baseline_power_W", "controlled_power_W"])?;
    for t in 0..scenario.periods() {
        let controlled: f64 = schedule.power.iter().map(|row| row[t]).sum();
        w.write_record([
            (t + 1).to_string(),
            scenario.horizon.clock(t),
            baseline.total_power[t].to_string(),
            controlled.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("writing power series", e))?;
    Ok(())
}

/// `t,clock,theta_min_C,theta_max_C,baseline_theta_C,controlled_theta_C`
/// for one unit.
pub fn write_temperature_series(
    scenario: &Scenario,
    baseline: &BaselineResult,
    schedule: &Schedule,
    unit_index: usize,
    out: impl Write,
) -> Result<()> {
    let unit = scenario
        .units
        .get(unit_index)
        .ok_or_else(|| Error::Config(format!("no unit at index {unit_index}")))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "t",
        "clock",
        "theta_min_C",
        "theta_max_C",
        "baseline_theta_C",
        "controlled_theta_C",
    ])?;
    for t in 0..scenario.periods() {
        w.write_record([
            (t + 1).to_string(),
            scenario.horizon.clock(t),
            unit.theta_min.to_string(),
            unit.theta_max.to_string(),
            baseline.mean_theta[unit_index][t].to_string(),
            schedule.theta_nominal[unit_index][t].to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("writing temperature series", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::tests::{flat_baseline, tiny_scenario, tiny_unit};

    #[test]
    fn zero_revenue_when_schedule_matches_baseline_at_setpoint() {
        let mut u = tiny_unit(1);
        // hold the room at its setpoint: outdoor equals setpoint, unit off
        u.initial_theta = u.theta_set;
        let set = u.theta_set;
        let mut s = tiny_scenario(vec![u], 4);
        s.forecast.theta_out_pre = vec![set; 4];
        let base = flat_baseline(&s, 0.0);
        let schedule = Schedule::from_on_off(&s, &base, vec![vec![false; 4]]).unwrap();
        let r = settle(&base, &schedule, &s).unwrap();
        assert_eq!(r.aggregator_revenue, 0.0);
        assert_eq!(r.penalty_cost, 0.0);
    }

    #[test]
    fn identities_hold_in_cents() {
        let r = CostReport::new(1807.004, 747.005, 812.0049);
        let c = r.cents();
        assert_eq!(c.total, c.electricity + c.penalty);
        assert_eq!(c.revenue, c.baseline - c.total);
        assert!((r.aggregator_revenue - (1807.004 - 747.005 - 812.0049)).abs() < 1e-12);
    }

    #[test]
    fn negative_revenue_is_reported() {
        let r = CostReport::new(100.0, 80.0, 139.0);
        assert_eq!(r.aggregator_revenue, -119.0);
        let mut buf = Vec::new();
        write_report_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "case,electricity_cost_CNY,penalty_cost_CNY,total_cost_CNY,revenue_CNY\n\
             uncontrolled,100.00,0.00,100.00,0.00\n\
             controlled,80.00,139.00,219.00,-119.00\n"
        );
    }

    #[test]
    fn peak_shaving_edges() {
        let s = tiny_scenario(vec![tiny_unit(1)], 4);
        let base = flat_baseline(&s, 2000.0);
        let off = Schedule::from_on_off(&s, &base, vec![vec![true, false, false, true]]).unwrap();
        assert_eq!(peak_shaving_summary(&base, &off, 1..3).unwrap(), 1.0);
        let mut same = off.clone();
        same.power = base.mean_power.clone();
        assert_eq!(peak_shaving_summary(&base, &same, 0..4).unwrap(), 0.0);
        let half = Schedule::from_on_off(&s, &base, vec![vec![true, false, true, true]]).unwrap();
        assert_eq!(peak_shaving_summary(&base, &half, 1..3).unwrap(), 0.5);
        assert!(peak_shaving_summary(&base, &half, 2..6).is_err());
        let zero = flat_baseline(&s, 0.0);
        assert!(peak_shaving_summary(&zero, &half, 1..3).is_err());
    }

    #[test]
    fn series_layout() {
        let s = tiny_scenario(vec![tiny_unit(1), tiny_unit(2)], 3);
        let base = flat_baseline(&s, 500.0);
        let schedule = Schedule::from_on_off(&s, &base, vec![vec![true; 3], vec![false, true, true]]).unwrap();
        let mut buf = Vec::new();
        write_power_series(&s, &base, &schedule, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,clock,baseline_power_W,controlled_power_W");
        assert_eq!(lines[2], "2,00:05,1000,4000");
        let mut buf = Vec::new();
        write_temperature_series(&s, &base, &schedule, 1, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
        assert!(write_temperature_series(&s, &base, &schedule, 5, Vec::new()).is_err());
    }
}
