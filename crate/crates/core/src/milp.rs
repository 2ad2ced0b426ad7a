//! Deterministic-equivalent mixed-integer model of the cluster scheduling
//! problem, plus the schedule type shared by all solvers.
//!
//! Per unit `g` and period `t` (1-based in names):
//!
//! * binaries `u` (on), `y` (start-up), `v` (shut-down);
//! * `th`, the nominal temperature, bounded by the robustly tightened band;
//! * `d >= |th - theta_set|` through two rows;
//! * one cluster-wide `gamma = beta * dt_h * sum d`.
//!
//! The objective maximizes baseline electricity cost minus controlled
//! electricity cost minus `gamma`.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::baseline::BaselineResult;
use crate::error::{Error, Result};
use crate::report::{settle, CostReport};
use crate::robust::{cluster_bounds, cluster_margins, ComfortBounds, RobustMargin};
use crate::scenario::{AcUnit, Scenario};
use crate::thermal::{simulate_trajectory, ThermalCoeffs};
use crate::units::kwh;

pub use crate::lp::{export_lp, parse_lp, read_lp, write_lp};

/// Absolute tolerance for temperature bounds and dynamics when validating.
pub const SCHEDULE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    /// `(variable index, coefficient)`.
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub sense: Sense,
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

/// Variable indices of one unit, each indexed by 0-based period.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UnitVars {
    pub unit_id: u64,
    pub u: Vec<usize>,
    pub y: Vec<usize>,
    pub v: Vec<usize>,
    pub theta: Vec<usize>,
    pub d: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Objective,
    pub units: Vec<UnitVars>,
    pub gamma: Option<usize>,
}

pub fn var_name(prefix: &str, unit_id: u64, t: usize) -> String {
    format!("{prefix}_g{unit_id}_t{}", t + 1)
}

pub const GAMMA: &str = "gamma";

impl MilpModel {
    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn binary_count(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    /// Structural sanity: indices in range, unique names, binaries in [0, 1].
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for (i, v) in self.variables.iter().enumerate() {
            if seen.insert(v.name.as_str(), i).is_some() {
                return Err(Error::invalid("model", format!("duplicate variable {}", v.name)));
            }
            if v.kind == VarKind::Binary && (v.lower != 0.0 || v.upper != 1.0) {
                return Err(Error::invalid("model", format!("binary {} has bounds other than [0, 1]", v.name)));
            }
        }
        let n = self.variables.len();
        let rows = self.constraints.iter().map(|c| (c.name.as_str(), &c.terms));
        for (name, terms) in rows.chain(std::iter::once(("objective", &self.objective.terms))) {
            if let Some((i, _)) = terms.iter().find(|(i, _)| *i >= n) {
                return Err(Error::invalid("model", format!("{name} references undeclared variable {i}")));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.constant + self.objective.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    /// Every bound, integrality or row violation larger than `tol`.
    pub fn violations(&self, x: &[f64], tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        if x.len() != self.variables.len() {
            out.push(format!("assignment has {} values for {} variables", x.len(), self.variables.len()));
            return out;
        }
        for (v, &val) in self.variables.iter().zip(x) {
            if !val.is_finite() {
                out.push(format!("{} = {val} is not finite", v.name));
                continue;
            }
            if val < v.lower - tol || val > v.upper + tol {
                out.push(format!("{} = {val} outside [{}, {}]", v.name, v.lower, v.upper));
            }
            if v.kind == VarKind::Binary && (val - val.round()).abs() > tol {
                out.push(format!("{} = {val} is not integral", v.name));
            }
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(i, k)| k * x[i]).sum();
            let bad = match c.relation {
                Relation::Le => lhs > c.rhs + tol,
                Relation::Ge => lhs < c.rhs - tol,
                Relation::Eq => (lhs - c.rhs).abs() > tol,
            };
            if bad {
                out.push(format!("{}: {lhs} {} {}", c.name, c.relation.symbol(), c.rhs));
            }
        }
        out
    }

    /// Pairs of rows and the units they touch, ignoring the cluster-wide
    /// penalty definition. Used to confirm the model separates by unit.
    pub fn coupling_rows(&self) -> Vec<String> {
        let mut owner = vec![None; self.variables.len()];
        for (g, uv) in self.units.iter().enumerate() {
            for &i in uv.u.iter().chain(&uv.y).chain(&uv.v).chain(&uv.theta).chain(&uv.d) {
                owner[i] = Some(g);
            }
        }
        let gamma_row = self.gamma.map(|g| &self.variables[g].name);
        self.constraints
            .iter()
            .filter(|c| !c.terms.iter().any(|&(i, _)| Some(&self.variables[i].name) == gamma_row))
            .filter(|c| {
                let mut it = c.terms.iter().filter_map(|&(i, _)| owner[i]);
                let first = it.next();
                it.any(|g| Some(g) != first)
            })
            .map(|c| c.name.clone())
            .collect()
    }

    /// Full assignment implied by a schedule: switching binaries from the
    /// on/off changes, `d = |th - theta_set|`, and `gamma` from its definition.
    pub fn assignment_for(&self, schedule: &Schedule, scenario: &Scenario) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.variables.len()];
        let dt_h = scenario.horizon.dt_hours();
        let mut penalty = 0.0;
        for uv in &self.units {
            let g = schedule
                .unit_ids
                .iter()
                .position(|&id| id == uv.unit_id)
                .ok_or_else(|| Error::invalid("schedule", format!("no row for unit {}", uv.unit_id)))?;
            let unit = &scenario.units[g];
            let mut prev = unit.initial_state.is_on();
            for t in 0..uv.u.len() {
                let on = schedule.on_off[g][t];
                x[uv.u[t]] = on as u8 as f64;
                x[uv.y[t]] = (on && !prev) as u8 as f64;
                x[uv.v[t]] = (!on && prev) as u8 as f64;
                let theta = schedule.theta_nominal[g][t];
                x[uv.theta[t]] = theta;
                x[uv.d[t]] = (theta - unit.theta_set).abs();
                penalty += x[uv.d[t]];
                prev = on;
            }
        }
        if let Some(g) = self.gamma {
            x[g] = scenario.beta * dt_h * penalty;
        }
        Ok(x)
    }
}

/// Baseline electricity cost of one unit, CNY.
pub fn unit_baseline_cost(scenario: &Scenario, baseline_power: &[f64]) -> f64 {
    baseline_power
        .iter()
        .zip(&scenario.prices.price)
        .map(|(&p, &pi)| kwh(p, scenario.horizon.dt) * pi)
        .sum()
}

fn check_dimensions(scenario: &Scenario, baseline: &BaselineResult) -> Result<()> {
    if baseline.units() != scenario.units.len() || baseline.periods() != scenario.periods() {
        return Err(Error::Config(format!(
            "baseline is {}x{} but the scenario has {} units and {} periods",
            baseline.units(),
            baseline.periods(),
            scenario.units.len(),
            scenario.periods()
        )));
    }
    Ok(())
}

struct Builder {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
}

impl Builder {
    fn var(&mut self, name: String, kind: VarKind, lower: f64, upper: f64) -> usize {
        self.variables.push(Variable { name, kind, lower, upper });
        self.variables.len() - 1
    }

    fn row(&mut self, name: String, terms: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint { name, terms, relation, rhs });
    }
}

pub fn build_model(scenario: &Scenario, baseline: &BaselineResult, margins: &[RobustMargin]) -> Result<MilpModel> {
    check_dimensions(scenario, baseline)?;
    if margins.len() != scenario.units.len() {
        return Err(Error::Config(format!(
            "{} margin vectors for {} units",
            margins.len(),
            scenario.units.len()
        )));
    }
    let bounds = cluster_bounds(scenario, margins)?;
    let n = scenario.periods();
    let dt = scenario.horizon.dt;
    let dt_h = scenario.horizon.dt_hours();
    let xi = &scenario.forecast.theta_out_pre;
    let mut b = Builder {
        variables: Vec::new(),
        constraints: Vec::new(),
    };
    let mut units = Vec::with_capacity(scenario.units.len());
    let mut objective_terms = Vec::new();
    let mut constant = 0.0;

    for (g, unit) in scenario.units.iter().enumerate() {
        let id = unit.id;
        let mut uv = UnitVars {
            unit_id: id,
            ..Default::default()
        };
        for t in 0..n {
            uv.u.push(b.var(var_name("u", id, t), VarKind::Binary, 0.0, 1.0));
            uv.y.push(b.var(var_name("y", id, t), VarKind::Binary, 0.0, 1.0));
            uv.v.push(b.var(var_name("v", id, t), VarKind::Binary, 0.0, 1.0));
            let (lo, hi) = (bounds[g].lo[t], bounds[g].hi[t]);
            uv.theta.push(b.var(var_name("th", id, t), VarKind::Continuous, lo, hi));
            uv.d.push(b.var(var_name("d", id, t), VarKind::Continuous, 0.0, f64::INFINITY));
        }
        constant += unit_baseline_cost(scenario, &baseline.mean_power[g]);
        for t in 0..n {
            let on_cost = kwh(unit.rated_power, dt) * scenario.prices.price[t];
            objective_terms.push((uv.u[t], -on_cost));
        }
        unit_rows(&mut b, unit, &uv, xi, dt);
        units.push(uv);
    }

    let gamma = b.var(GAMMA.to_string(), VarKind::Continuous, 0.0, f64::INFINITY);
    let mut gamma_terms = vec![(gamma, 1.0)];
    for uv in &units {
        gamma_terms.extend(uv.d.iter().map(|&i| (i, -scenario.beta * dt_h)));
    }
    b.row("gamma_def".to_string(), gamma_terms, Relation::Eq, 0.0);
    objective_terms.push((gamma, -1.0));

    let model = MilpModel {
        variables: b.variables,
        constraints: b.constraints,
        objective: Objective {
            sense: Sense::Maximize,
            constant,
            terms: objective_terms,
        },
        units,
        gamma: Some(gamma),
    };
    model.validate()?;
    Ok(model)
}

fn unit_rows(b: &mut Builder, unit: &AcUnit, uv: &UnitVars, xi: &[f64], dt: f64) {
    let id = unit.id;
    let n = uv.u.len();
    let c = ThermalCoeffs::new(unit, dt);
    let initially_on = unit.initial_state.is_on();

    b.row(format!("init_g{id}"), vec![(uv.theta[0], 1.0)], Relation::Eq, unit.initial_theta);
    for t in 0..n.saturating_sub(1) {
        b.row(
            var_name("dyn", id, t),
            vec![
                (uv.theta[t + 1], 1.0),
                (uv.theta[t], -c.alpha),
                (uv.u[t], (1.0 - c.alpha) * c.gain),
            ],
            Relation::Eq,
            (1.0 - c.alpha) * xi[t],
        );
    }
    for t in 0..n {
        b.row(
            var_name("absup", id, t),
            vec![(uv.d[t], 1.0), (uv.theta[t], -1.0)],
            Relation::Ge,
            -unit.theta_set,
        );
        b.row(
            var_name("abslo", id, t),
            vec![(uv.d[t], 1.0), (uv.theta[t], 1.0)],
            Relation::Ge,
            unit.theta_set,
        );
    }
    for t in 0..n {
        let mut terms = vec![(uv.y[t], 1.0), (uv.v[t], -1.0), (uv.u[t], -1.0)];
        let rhs = if t == 0 {
            -(initially_on as u8 as f64)
        } else {
            terms.push((uv.u[t - 1], 1.0));
            0.0
        };
        b.row(var_name("sw", id, t), terms, Relation::Eq, rhs);
        b.row(var_name("yv", id, t), vec![(uv.y[t], 1.0), (uv.v[t], 1.0)], Relation::Le, 1.0);
    }
    for t in 0..n {
        let start = (t + 1).saturating_sub(unit.min_up_periods);
        let mut terms: Vec<(usize, f64)> = (start..=t).map(|q| (uv.y[q], 1.0)).collect();
        terms.push((uv.u[t], -1.0));
        b.row(var_name("up", id, t), terms, Relation::Le, 0.0);

        let start = (t + 1).saturating_sub(unit.min_down_periods);
        let mut terms: Vec<(usize, f64)> = (start..=t).map(|q| (uv.v[q], 1.0)).collect();
        terms.push((uv.u[t], 1.0));
        b.row(var_name("dn", id, t), terms, Relation::Le, 1.0);
    }
    for t in 0..hold_periods(unit).min(n) {
        b.row(
            var_name("hold", id, t),
            vec![(uv.u[t], 1.0)],
            Relation::Eq,
            initially_on as u8 as f64,
        );
    }
}

/// Leading periods in which the initial state must be kept because the
/// pre-horizon run is shorter than the minimum up or down time.
pub fn hold_periods(unit: &AcUnit) -> usize {
    let required = if unit.initial_state.is_on() {
        unit.min_up_periods
    } else {
        unit.min_down_periods
    };
    required.saturating_sub(unit.initial_dwell_periods)
}

/// Switching-rule violations of an on/off sequence: start-up and shut-down
/// indicators from consecutive differences, then the clipped minimum
/// up/down windows and the initial hold.
pub fn switching_violations(unit: &AcUnit, on_off: &[bool]) -> Vec<String> {
    let mut out = Vec::new();
    let mut prev = unit.initial_state.is_on();
    let mut y = Vec::with_capacity(on_off.len());
    let mut v = Vec::with_capacity(on_off.len());
    for &on in on_off {
        y.push(on && !prev);
        v.push(!on && prev);
        prev = on;
    }
    let id = unit.id;
    for t in 0..on_off.len() {
        let up_start = (t + 1).saturating_sub(unit.min_up_periods);
        if !on_off[t] && y[up_start..=t].iter().any(|&s| s) {
            out.push(format!("unit {id} period {}: minimum up time {} violated", t + 1, unit.min_up_periods));
        }
        let dn_start = (t + 1).saturating_sub(unit.min_down_periods);
        if on_off[t] && v[dn_start..=t].iter().any(|&s| s) {
            out.push(format!(
                "unit {id} period {}: minimum down time {} violated",
                t + 1,
                unit.min_down_periods
            ));
        }
    }
    for t in 0..hold_periods(unit).min(on_off.len()) {
        if on_off[t] != unit.initial_state.is_on() {
            out.push(format!("unit {id} period {}: initial state must be held", t + 1));
        }
    }
    out
}

/// A cluster on/off plan with its implied power and nominal temperatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub unit_ids: Vec<u64>,
    pub on_off: Vec<Vec<bool>>,
    pub power: Vec<Vec<f64>>,
    pub theta_nominal: Vec<Vec<f64>>,
    /// Comfort penalty, CNY.
    pub gamma: f64,
    /// Aggregator revenue, CNY.
    pub objective: f64,
}

impl Schedule {
    pub fn from_on_off(scenario: &Scenario, baseline: &BaselineResult, on_off: Vec<Vec<bool>>) -> Result<Schedule> {
        check_dimensions(scenario, baseline)?;
        let n = scenario.periods();
        if on_off.len() != scenario.units.len() || on_off.iter().any(|row| row.len() != n) {
            return Err(Error::Config(format!(
                "schedule must be {} units by {n} periods",
                scenario.units.len()
            )));
        }
        let dt = scenario.horizon.dt;
        let xi = &scenario.forecast.theta_out_pre;
        let mut power = Vec::with_capacity(on_off.len());
        let mut theta = Vec::with_capacity(on_off.len());
        let mut deviation = 0.0;
        let mut electricity = 0.0;
        for (unit, row) in scenario.units.iter().zip(&on_off) {
            let p: Vec<f64> = row.iter().map(|&on| if on { unit.rated_power } else { 0.0 }).collect();
            let th = simulate_trajectory(unit, row, xi, dt);
            deviation += th.iter().map(|x| (x - unit.theta_set).abs()).sum::<f64>();
            electricity += unit_baseline_cost(scenario, &p);
            power.push(p);
            theta.push(th);
        }
        let baseline_cost: f64 = baseline
            .mean_power
            .iter()
            .map(|p| unit_baseline_cost(scenario, p))
            .sum();
        let gamma = scenario.beta * scenario.horizon.dt_hours() * deviation;
        Ok(Schedule {
            unit_ids: scenario.units.iter().map(|u| u.id).collect(),
            on_off,
            power,
            theta_nominal: theta,
            gamma,
            objective: baseline_cost - electricity - gamma,
        })
    }

    pub fn periods(&self) -> usize {
        self.on_off.first().map_or(0, Vec::len)
    }
}

/// Every violated condition of a schedule: power consistency, nominal
/// dynamics, tightened comfort bounds and switching rules.
pub fn schedule_violations(schedule: &Schedule, scenario: &Scenario, bounds: &[ComfortBounds]) -> Vec<String> {
    let mut out = Vec::new();
    let n = scenario.periods();
    let g_count = scenario.units.len();
    if schedule.on_off.len() != g_count
        || schedule.power.len() != g_count
        || schedule.theta_nominal.len() != g_count
        || schedule.unit_ids.len() != g_count
    {
        out.push(format!("schedule does not have {g_count} unit rows"));
        return out;
    }
    let dt = scenario.horizon.dt;
    let xi = &scenario.forecast.theta_out_pre;
    for (g, unit) in scenario.units.iter().enumerate() {
        let id = unit.id;
        let (on_off, power, theta) = (&schedule.on_off[g], &schedule.power[g], &schedule.theta_nominal[g]);
        if schedule.unit_ids[g] != id {
            out.push(format!("row {g} is unit {} but the scenario has unit {id}", schedule.unit_ids[g]));
        }
        if on_off.len() != n || power.len() != n || theta.len() != n {
            out.push(format!("unit {id}: rows must have {n} periods"));
            continue;
        }
        for t in 0..n {
            let expected = if on_off[t] { unit.rated_power } else { 0.0 };
            if (power[t] - expected).abs() > SCHEDULE_TOLERANCE * unit.rated_power {
                out.push(format!("unit {id} period {}: power {} is not u * rated power", t + 1, power[t]));
            }
        }
        let c = ThermalCoeffs::new(unit, dt);
        if (theta[0] - unit.initial_theta).abs() > SCHEDULE_TOLERANCE {
            out.push(format!("unit {id} period 1: temperature differs from the initial value"));
        }
        for t in 0..n.saturating_sub(1) {
            let next = c.step(theta[t], xi[t], on_off[t]);
            if (theta[t + 1] - next).abs() > SCHEDULE_TOLERANCE {
                out.push(format!("unit {id} period {}: temperature breaks the room dynamics", t + 2));
            }
        }
        for t in 0..n {
            let (lo, hi) = (bounds[g].lo[t], bounds[g].hi[t]);
            if theta[t] > hi + SCHEDULE_TOLERANCE || theta[t] < lo - SCHEDULE_TOLERANCE {
                out.push(format!(
                    "unit {id} period {}: temperature {:.6} outside [{lo:.6}, {hi:.6}]",
                    t + 1,
                    theta[t]
                ));
            }
        }
        out.extend(switching_violations(unit, on_off));
    }
    out
}

/// Validates a schedule against the scenario's robust model and settles it.
pub fn evaluate_schedule(schedule: &Schedule, scenario: &Scenario, baseline: &BaselineResult) -> Result<CostReport> {
    check_dimensions(scenario, baseline)?;
    let bounds = cluster_bounds(scenario, &cluster_margins(scenario))?;
    let violations = schedule_violations(schedule, scenario, &bounds);
    if !violations.is_empty() {
        return Err(Error::ScheduleValidation(violations));
    }
    settle(baseline, schedule, scenario)
}

#[derive(Debug, Serialize, Deserialize)]
struct ScheduleRow {
    unit_id: u64,
    t: usize,
    u: u8,
    #[serde(rename = "power_W")]
    power: f64,
    #[serde(rename = "theta_C")]
    theta: f64,
    #[serde(rename = "d_C")]
    deviation: f64,
}

pub fn write_schedule_csv(schedule: &Schedule, scenario: &Scenario, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (g, unit) in scenario.units.iter().enumerate() {
        for t in 0..schedule.periods() {
            let theta = schedule.theta_nominal[g][t];
            w.serialize(ScheduleRow {
                unit_id: schedule.unit_ids[g],
                t: t + 1,
                u: schedule.on_off[g][t] as u8,
                power: schedule.power[g][t],
                theta,
                deviation: (theta - unit.theta_set).abs(),
            })?;
        }
    }
    w.flush().map_err(|e| Error::io("writing schedule", e))?;
    Ok(())
}

/// Reads the on/off matrix of a schedule CSV in scenario unit order.
/// Power and temperature columns are recomputed by the caller.
pub fn read_schedule_on_off(scenario: &Scenario, input: impl Read) -> Result<Vec<Vec<bool>>> {
    let n = scenario.periods();
    let index: HashMap<u64, usize> = scenario.units.iter().enumerate().map(|(g, u)| (u.id, g)).collect();
    let mut on_off: Vec<Vec<Option<bool>>> = vec![vec![None; n]; scenario.units.len()];
    let mut r = csv::Reader::from_reader(input);
    for row in r.deserialize() {
        let row: ScheduleRow = row?;
        let g = *index
            .get(&row.unit_id)
            .ok_or_else(|| Error::invalid("schedule", format!("unknown unit {}", row.unit_id)))?;
        if row.t == 0 || row.t > n {
            return Err(Error::invalid("schedule", format!("unit {} has period {} outside 1..={n}", row.unit_id, row.t)));
        }
        if row.u > 1 {
            return Err(Error::invalid("schedule", format!("unit {} period {}: u must be 0 or 1", row.unit_id, row.t)));
        }
        if on_off[g][row.t - 1].replace(row.u == 1).is_some() {
            return Err(Error::invalid("schedule", format!("unit {} period {} listed twice", row.unit_id, row.t)));
        }
    }
    on_off
        .into_iter()
        .zip(&scenario.units)
        .map(|(row, unit)| {
            row.into_iter()
                .enumerate()
                .map(|(t, v)| {
                    v.ok_or_else(|| Error::invalid("schedule", format!("unit {} period {} missing", unit.id, t + 1)))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::robust::cluster_margins;
    use crate::scenario::{bundled, Forecast, Horizon, NormKind, OnOff, PriceSchedule, TransitionParams};

    pub(crate) fn tiny_unit(id: u64) -> AcUnit {
        AcUnit {
            id,
            rated_power: 2000.0,
            eer: 3.0,
            thermal_resistance: 0.004,
            thermal_capacity: 1.0e6,
            theta_set: 26.0,
            theta_min: 23.0,
            theta_max: 29.0,
            min_up_periods: 1,
            min_down_periods: 1,
            markov: TransitionParams::default(),
            initial_state: OnOff::Off,
            initial_dwell_periods: 1,
            initial_theta: 26.0,
        }
    }

    pub(crate) fn tiny_scenario(units: Vec<AcUnit>, periods: usize) -> Scenario {
        Scenario {
            horizon: Horizon {
                periods,
                dt: 300.0,
                start_clock_time: 0.0,
            },
            forecast: Forecast {
                theta_out_pre: (0..periods).map(|t| 30.0 + 0.5 * t as f64).collect(),
                epsilon: 0.3,
                norm_kind: NormKind::Box,
            },
            prices: PriceSchedule {
                price: (0..periods).map(|t| if t == 1 { 2.0 } else { 1.0 }).collect(),
            },
            beta: 0.5,
            mc_samples: 1,
            master_seed: 1,
            units,
        }
    }

    pub(crate) fn flat_baseline(scenario: &Scenario, watts: f64) -> BaselineResult {
        let (g, n) = (scenario.units.len(), scenario.periods());
        BaselineResult {
            mean_power: vec![vec![watts; n]; g],
            mean_theta: vec![vec![26.0; n]; g],
            total_power: vec![watts * g as f64; n],
            total_power_std_error: vec![0.0; n],
            samples: 1,
            master_seed: 1,
        }
    }

    fn count_prefix(m: &MilpModel, prefix: &str) -> usize {
        m.constraints.iter().filter(|c| c.name.starts_with(prefix)).count()
    }

    #[test]
    fn tiny_model_counts() {
        let s = tiny_scenario(vec![tiny_unit(1)], 3);
        let m = build_model(&s, &flat_baseline(&s, 1000.0), &cluster_margins(&s)).unwrap();
        assert_eq!(m.variables.len(), 16);
        assert_eq!(m.binary_count(), 9);
        assert_eq!(count_prefix(&m, "dyn_"), 2);
        assert_eq!(count_prefix(&m, "absup_"), 3);
        assert_eq!(count_prefix(&m, "abslo_"), 3);
        assert_eq!(count_prefix(&m, "sw_"), 3);
        assert_eq!(count_prefix(&m, "yv_"), 3);
        assert_eq!(count_prefix(&m, "up_"), 3);
        assert_eq!(count_prefix(&m, "dn_"), 3);
        assert_eq!(count_prefix(&m, "hold_"), 0);
        assert_eq!(count_prefix(&m, "init_"), 1);
        assert_eq!(count_prefix(&m, "gamma_def"), 1);
        assert_eq!(m.constraints.len(), 22);
    }

    #[test]
    fn windows_are_clipped_at_the_first_period() {
        let mut u = tiny_unit(4);
        u.min_up_periods = 3;
        u.min_down_periods = 2;
        let s = tiny_scenario(vec![u], 5);
        let m = build_model(&s, &flat_baseline(&s, 0.0), &cluster_margins(&s)).unwrap();
        let row = |name: &str| m.constraints.iter().find(|c| c.name == name).unwrap();
        // window sizes: min(t, UT) start-up terms plus u_t
        assert_eq!(row("up_g4_t1").terms.len(), 2);
        assert_eq!(row("up_g4_t2").terms.len(), 3);
        assert_eq!(row("up_g4_t3").terms.len(), 4);
        assert_eq!(row("up_g4_t5").terms.len(), 4);
        assert_eq!(row("dn_g4_t1").terms.len(), 2);
        assert_eq!(row("dn_g4_t5").terms.len(), 3);
        // initially off for one period with DT = 2: one period of hold
        assert_eq!(row("hold_g4_t1").rhs, 0.0);
        assert!(m.constraints.iter().all(|c| c.name != "hold_g4_t2"));
    }

    #[test]
    fn zero_epsilon_keeps_raw_band() {
        let mut s = tiny_scenario(vec![tiny_unit(1)], 6);
        s.forecast.epsilon = 0.0;
        let m = build_model(&s, &flat_baseline(&s, 0.0), &cluster_margins(&s)).unwrap();
        for &i in &m.units[0].theta {
            assert_eq!((m.variables[i].lower, m.variables[i].upper), (23.0, 29.0));
        }
        s.forecast.epsilon = 0.3;
        let robust = build_model(&s, &flat_baseline(&s, 0.0), &cluster_margins(&s)).unwrap();
        let th2 = &robust.variables[robust.units[0].theta[1]];
        assert!(th2.upper < 29.0 && th2.lower > 23.0);
        let th1 = &robust.variables[robust.units[0].theta[0]];
        assert_eq!((th1.lower, th1.upper), (23.0, 29.0));
    }

    #[test]
    fn objective_constant_is_baseline_cost() {
        let s = tiny_scenario(vec![tiny_unit(1), tiny_unit(2)], 3);
        let m = build_model(&s, &flat_baseline(&s, 1200.0), &cluster_margins(&s)).unwrap();
        // 1200 W for 300 s is 0.1 kWh; prices 1, 2, 1; two units
        assert!((m.objective.constant - 2.0 * 0.1 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn no_row_couples_units() {
        let s = bundled::scenario(5, 2).unwrap();
        let m = build_model(&s, &flat_baseline(&s, 500.0), &cluster_margins(&s)).unwrap();
        assert!(m.coupling_rows().is_empty());
    }

    #[test]
    fn duplicate_name_rejected() {
        let s = tiny_scenario(vec![tiny_unit(1)], 2);
        let mut m = build_model(&s, &flat_baseline(&s, 0.0), &cluster_margins(&s)).unwrap();
        let dup = m.variables[0].clone();
        m.variables.push(dup);
        assert!(m.validate().is_err());
    }

    #[test]
    fn schedule_assignment_satisfies_rows() {
        let s = tiny_scenario(vec![tiny_unit(1), tiny_unit(2)], 4);
        let base = flat_baseline(&s, 800.0);
        let m = build_model(&s, &base, &cluster_margins(&s)).unwrap();
        let on_off = vec![vec![true, false, true, true], vec![false, true, true, false]];
        let schedule = Schedule::from_on_off(&s, &base, on_off).unwrap();
        let x = m.assignment_for(&schedule, &s).unwrap();
        assert!(m.violations(&x, 1e-9).is_empty(), "{:?}", m.violations(&x, 1e-9));
        assert!((m.objective_value(&x) - schedule.objective).abs() < 1e-12);
    }

    #[test]
    fn one_period_revenue_by_hand() {
        let mut s = tiny_scenario(vec![tiny_unit(1)], 1);
        s.prices.price = vec![1.0];
        s.beta = 0.0;
        let base = flat_baseline(&s, 1000.0);
        let schedule = Schedule::from_on_off(&s, &base, vec![vec![false]]).unwrap();
        assert!((schedule.objective - 1000.0 * 300.0 / 3.6e6).abs() < 1e-15);
    }

    #[test]
    fn switching_rules_by_enumeration() {
        let mut u = tiny_unit(1);
        u.min_up_periods = 2;
        u.min_down_periods = 2;
        u.initial_state = OnOff::On;
        u.initial_dwell_periods = 1;
        // must stay on in period 1, then runs of at least two
        assert!(switching_violations(&u, &[true, true, false, false]).is_empty());
        assert!(!switching_violations(&u, &[false, false, true, true]).is_empty());
        assert!(!switching_violations(&u, &[true, false, true, true]).is_empty());
        assert!(!switching_violations(&u, &[true, true, true, false, true]).is_empty());
        // a run cut off by the horizon end is allowed
        assert!(switching_violations(&u, &[true, true, true, false]).is_empty());
    }

    #[test]
    fn validation_lists_violations() {
        let s = tiny_scenario(vec![tiny_unit(1)], 3);
        let base = flat_baseline(&s, 0.0);
        let mut schedule = Schedule::from_on_off(&s, &base, vec![vec![false, false, false]]).unwrap();
        assert!(evaluate_schedule(&schedule, &s, &base).is_ok());
        schedule.theta_nominal[0][2] += 0.5;
        schedule.power[0][1] = 10.0;
        match evaluate_schedule(&schedule, &s, &base) {
            Err(Error::ScheduleValidation(v)) => {
                assert!(v.iter().any(|m| m.contains("dynamics")));
                assert!(v.iter().any(|m| m.contains("power")));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn schedule_csv_round_trip() {
        let s = tiny_scenario(vec![tiny_unit(3), tiny_unit(9)], 3);
        let base = flat_baseline(&s, 0.0);
        let on_off = vec![vec![true, false, true], vec![false, false, true]];
        let schedule = Schedule::from_on_off(&s, &base, on_off.clone()).unwrap();
        let mut buf = Vec::new();
        write_schedule_csv(&schedule, &s, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("unit_id,t,u,power_W,theta_C,d_C\n"));
        assert_eq!(text.lines().count(), 7);
        assert_eq!(read_schedule_on_off(&s, buf.as_slice()).unwrap(), on_off);

        let short = "unit_id,t,u,power_W,theta_C,d_C\n3,1,1,2000,26,0\n";
        assert!(read_schedule_on_off(&s, short.as_bytes()).is_err());
    }
}
