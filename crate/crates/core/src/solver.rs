//! Exact per-unit scheduling. The cluster model has no rows coupling
//! units, so each unit is solved on its own and the plans are stacked.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::BaselineResult;
use crate::error::{Error, Result};
use crate::milp::{export_lp, switching_violations, MilpModel, Schedule, VarKind};
use crate::report::{settle, CostReport};
use crate::robust::{cluster_bounds, ComfortBounds, RobustMargin};
use crate::scenario::{AcUnit, Scenario};
use crate::thermal::{trajectory_from, ThermalCoeffs};
use crate::units::kwh;

pub const EXHAUSTIVE_CAP: usize = 16;
/// Absolute tolerance for cost ties and temperature bounds.
pub const COST_TOLERANCE: f64 = 1e-9;
const BOUND_TOLERANCE: f64 = 1e-9;
const CELL_WIDTH: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Bnb,
    Exhaustive,
}

/// One unit's cost view: minimize on-cost plus comfort penalty over
/// feasible on/off sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSubproblem {
    pub unit_id: u64,
    /// CNY for running in each period.
    pub on_cost: Vec<f64>,
    pub coeffs: ThermalCoeffs,
    pub theta_out: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub theta_set: f64,
    /// CNY per °C of deviation per period.
    pub penalty_rate: f64,
    pub initial_theta: f64,
    pub initial_on: bool,
    pub initial_dwell: usize,
    pub min_up: usize,
    pub min_down: usize,
}

impl UnitSubproblem {
    pub fn new(unit: &AcUnit, scenario: &Scenario, bounds: &ComfortBounds) -> Self {
        let dt = scenario.horizon.dt;
        UnitSubproblem {
            unit_id: unit.id,
            on_cost: scenario
                .prices
                .price
                .iter()
                .map(|&pi| kwh(unit.rated_power, dt) * pi)
                .collect(),
            coeffs: ThermalCoeffs::new(unit, dt),
            theta_out: scenario.forecast.theta_out_pre.clone(),
            lo: bounds.lo.clone(),
            hi: bounds.hi.clone(),
            theta_set: unit.theta_set,
            penalty_rate: scenario.beta * scenario.horizon.dt_hours(),
            initial_theta: unit.initial_theta,
            initial_on: unit.initial_state.is_on(),
            initial_dwell: unit.initial_dwell_periods,
            min_up: unit.min_up_periods,
            min_down: unit.min_down_periods,
        }
    }

    pub fn periods(&self) -> usize {
        self.on_cost.len()
    }

    pub fn trajectory(&self, on_off: &[bool]) -> Vec<f64> {
        trajectory_from(self.initial_theta, &self.coeffs, on_off, &self.theta_out)
    }

    fn penalty(&self, theta: f64) -> f64 {
        self.penalty_rate * (theta - self.theta_set).abs()
    }

    pub fn cost(&self, on_off: &[bool]) -> f64 {
        let energy: f64 = on_off.iter().zip(&self.on_cost).filter(|(on, _)| **on).map(|(_, c)| c).sum();
        energy + self.trajectory(on_off).iter().map(|&th| self.penalty(th)).sum::<f64>()
    }

    fn in_band(&self, t: usize, theta: f64) -> bool {
        theta >= self.lo[t] - BOUND_TOLERANCE && theta <= self.hi[t] + BOUND_TOLERANCE
    }

    /// Stand-in unit carrying only the switching parameters.
    fn switching_unit(&self) -> AcUnit {
        AcUnit {
            id: self.unit_id,
            rated_power: 1.0,
            eer: 1.0,
            thermal_resistance: 1.0,
            thermal_capacity: 1.0,
            theta_set: self.theta_set,
            theta_min: 0.0,
            theta_max: 0.0,
            min_up_periods: self.min_up,
            min_down_periods: self.min_down,
            markov: Default::default(),
            initial_state: crate::scenario::OnOff::from_bool(self.initial_on),
            initial_dwell_periods: self.initial_dwell,
            initial_theta: self.initial_theta,
        }
    }

    pub fn is_feasible(&self, on_off: &[bool]) -> bool {
        let theta = self.trajectory(on_off);
        theta.iter().enumerate().all(|(t, &th)| self.in_band(t, th))
            && switching_violations(&self.switching_unit(), on_off).is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    /// 1-based period at which every branch has died.
    Infeasible { period: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub unit_id: u64,
    pub status: SolveStatus,
    /// Minimized on-cost plus penalty, CNY.
    pub objective: f64,
    pub nodes_explored: u64,
    pub wall_time: f64,
    /// `(nodes explored, cost)` at each incumbent improvement.
    pub incumbent_history: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitSolution {
    pub on_off: Vec<bool>,
    pub cost: f64,
    pub report: SolveReport,
}

impl UnitSolution {
    fn into_result(self) -> Result<UnitSolution> {
        match self.report.status {
            SolveStatus::Optimal => Ok(self),
            SolveStatus::Infeasible { period } => Err(Error::Infeasible(format!(
                "unit {}: no schedule satisfies the comfort and switching rules (search dies at period {period})",
                self.report.unit_id
            ))),
        }
    }
}

/// Enumerates every sequence in lexicographic order (period 1 most
/// significant, off before on) and keeps the first strictly cheaper one.
pub fn solve_exhaustive(sub: &UnitSubproblem) -> Result<UnitSolution> {
    let n = sub.periods();
    if n > EXHAUSTIVE_CAP {
        return Err(Error::Config(format!(
            "exhaustive solver is limited to {EXHAUSTIVE_CAP} periods, the horizon has {n}"
        )));
    }
    let start = Instant::now();
    let mut best: Option<(Vec<bool>, f64)> = None;
    let mut history = Vec::new();
    let mut seq = vec![false; n];
    for code in 0u64..(1u64 << n) {
        for (t, slot) in seq.iter_mut().enumerate() {
            *slot = (code >> (n - 1 - t)) & 1 == 1;
        }
        if !sub.is_feasible(&seq) {
            continue;
        }
        let cost = sub.cost(&seq);
        if best.as_ref().is_none_or(|(_, b)| cost < b - COST_TOLERANCE) {
            history.push((code + 1, cost));
            best = Some((seq.clone(), cost));
        }
    }
    let nodes = 1u64 << n;
    let wall_time = start.elapsed().as_secs_f64();
    let (on_off, cost, status) = match best {
        Some((s, c)) => (s, c, SolveStatus::Optimal),
        None => (vec![false; n], f64::INFINITY, SolveStatus::Infeasible { period: first_dead_period(sub) }),
    };
    UnitSolution {
        on_off,
        cost,
        report: SolveReport {
            unit_id: sub.unit_id,
            status,
            objective: cost,
            nodes_explored: nodes,
            wall_time,
            incumbent_history: history,
        },
    }
    .into_result()
}

/// Temperature cells over the span of all bounds, for interval bounds.
struct CellGrid {
    base: f64,
    count: usize,
}

impl CellGrid {
    fn new(sub: &UnitSubproblem) -> Self {
        let lo = sub.lo.iter().cloned().fold(sub.initial_theta, f64::min) - 1e-6;
        let hi = sub.hi.iter().cloned().fold(sub.initial_theta, f64::max) + 1e-6;
        let count = (((hi - lo) / CELL_WIDTH).ceil() as usize).max(1);
        CellGrid { base: lo, count }
    }

    fn index(&self, theta: f64) -> usize {
        (((theta - self.base) / CELL_WIDTH).floor().max(0.0) as usize).min(self.count - 1)
    }

    fn span(&self, c: usize) -> (f64, f64) {
        let a = self.base + c as f64 * CELL_WIDTH;
        (a, a + CELL_WIDTH)
    }

    /// Cells touching `[a, b]`, widened by one on each side against rounding.
    fn range(&self, a: f64, b: f64) -> std::ops::RangeInclusive<usize> {
        self.index(a).saturating_sub(1)..=(self.index(b) + 1).min(self.count - 1)
    }
}

fn distance_to_interval(x: f64, a: f64, b: f64) -> f64 {
    if x < a {
        a - x
    } else if x > b {
        x - b
    } else {
        0.0
    }
}

/// `bound[t][c]` is a lower bound on the cost of periods `t..` (on-costs
/// from `t`, penalties from `t + 1`) for any temperature in cell `c` at `t`,
/// ignoring switching rules. Infinite where no temperature path survives.
fn cost_to_go_bounds(sub: &UnitSubproblem, grid: &CellGrid) -> Vec<Vec<f64>> {
    let n = sub.periods();
    let mut bound = vec![vec![0.0; grid.count]; n];
    if n == 0 {
        return bound;
    }
    bound[n - 1].fill(sub.on_cost[n - 1].min(0.0));
    for t in (0..n - 1).rev() {
        let (next, rest) = bound.split_at_mut(t + 1);
        let next_bound = &rest[0];
        let here = &mut next[t];
        let (lo, hi) = (sub.lo[t + 1] - BOUND_TOLERANCE, sub.hi[t + 1] + BOUND_TOLERANCE);
        for (c, slot) in here.iter_mut().enumerate() {
            let (a, b) = grid.span(c);
            let mut best = f64::INFINITY;
            for on in [false, true] {
                let (p, q) = (sub.coeffs.step(a, sub.theta_out[t], on), sub.coeffs.step(b, sub.theta_out[t], on));
                let (p, q) = (p.max(lo), q.min(hi));
                if p > q {
                    continue;
                }
                let future = grid.range(p, q).map(|k| next_bound[k]).fold(f64::INFINITY, f64::min);
                let cost = if on { sub.on_cost[t] } else { 0.0 }
                    + sub.penalty_rate * distance_to_interval(sub.theta_set, p, q)
                    + future;
                best = best.min(cost);
            }
            *slot = best;
        }
    }
    bound
}

/// Forward reachability over cells; the first 1-based period with no
/// reachable in-band temperature, or one past the horizon.
fn first_dead_period(sub: &UnitSubproblem) -> usize {
    let n = sub.periods();
    if n == 0 || !sub.in_band(0, sub.initial_theta) {
        return 1;
    }
    let grid = CellGrid::new(sub);
    let mut reach = vec![false; grid.count];
    reach[grid.index(sub.initial_theta)] = true;
    for t in 0..n - 1 {
        let mut next = vec![false; grid.count];
        let (lo, hi) = (sub.lo[t + 1] - BOUND_TOLERANCE, sub.hi[t + 1] + BOUND_TOLERANCE);
        for c in (0..grid.count).filter(|&c| reach[c]) {
            let (a, b) = grid.span(c);
            for on in [false, true] {
                let p = sub.coeffs.step(a, sub.theta_out[t], on).max(lo);
                let q = sub.coeffs.step(b, sub.theta_out[t], on).min(hi);
                if p <= q {
                    for k in grid.index(p)..=grid.index(q) {
                        next[k] = true;
                    }
                }
            }
        }
        if !next.iter().any(|&r| r) {
            return t + 2;
        }
        reach = next;
    }
    n + 1
}

struct Search<'a> {
    sub: &'a UnitSubproblem,
    grid: CellGrid,
    bound: Vec<Vec<f64>>,
    dwell_cap: usize,
    path: Vec<bool>,
    best: Option<(Vec<bool>, f64)>,
    nodes: u64,
    history: Vec<(u64, f64)>,
}

impl Search<'_> {
    fn incumbent(&self) -> f64 {
        self.best.as_ref().map_or(f64::INFINITY, |(_, c)| *c)
    }

    /// Decides period `t` given the temperature at `t`, the previous state
    /// and its run length, and the cost accumulated so far.
    fn visit(&mut self, t: usize, theta: f64, prev_on: bool, run: usize, cost: f64) {
        self.nodes += 1;
        let sub = self.sub;
        let n = sub.periods();
        let mut branches: Vec<(bool, f64, f64)> = Vec::with_capacity(2);
        for on in [false, true] {
            if on != prev_on {
                let needed = if prev_on { sub.min_up } else { sub.min_down };
                if run < needed {
                    continue;
                }
            }
            let energy = if on { sub.on_cost[t] } else { 0.0 };
            if t + 1 == n {
                branches.push((on, energy, f64::NAN));
                continue;
            }
            let next = sub.coeffs.step(theta, sub.theta_out[t], on);
            if !sub.in_band(t + 1, next) {
                continue;
            }
            branches.push((on, energy + sub.penalty(next), next));
        }
        // cheaper immediate step first; stable sort keeps off first on ties
        branches.sort_by(|a, b| a.1.total_cmp(&b.1));
        for (on, step_cost, next) in branches {
            let total = cost + step_cost;
            self.path.push(on);
            if t + 1 == n {
                if total < self.incumbent() - COST_TOLERANCE {
                    self.best = Some((self.path.clone(), total));
                    self.history.push((self.nodes, total));
                }
            } else {
                let lower = total + self.bound[t + 1][self.grid.index(next)];
                if lower < self.incumbent() - COST_TOLERANCE {
                    let next_run = if on == prev_on { (run + 1).min(self.dwell_cap) } else { 1 };
                    self.visit(t + 1, next, on, next_run, total);
                }
            }
            self.path.pop();
        }
    }
}

/// Depth-first branch and bound over periods. Prunes on the temperature
/// band, the dwell rules, and a lower bound from backward interval
/// propagation of the cost-to-go.
pub fn solve_bnb(sub: &UnitSubproblem) -> Result<UnitSolution> {
    let start = Instant::now();
    let n = sub.periods();
    let grid = CellGrid::new(sub);
    let bound = cost_to_go_bounds(sub, &grid);
    let mut search = Search {
        sub,
        dwell_cap: sub.min_up.max(sub.min_down).max(1),
        grid,
        bound,
        path: Vec::with_capacity(n),
        best: None,
        nodes: 0,
        history: Vec::new(),
    };
    if n > 0 && sub.in_band(0, sub.initial_theta) {
        let run = sub.initial_dwell.min(search.dwell_cap);
        search.visit(0, sub.initial_theta, sub.initial_on, run, sub.penalty(sub.initial_theta));
    }
    let wall_time = start.elapsed().as_secs_f64();
    let (on_off, cost, status) = match search.best {
        Some((s, c)) => (s, c, SolveStatus::Optimal),
        None => (vec![false; n], f64::INFINITY, SolveStatus::Infeasible { period: first_dead_period(sub) }),
    };
    UnitSolution {
        on_off,
        cost,
        report: SolveReport {
            unit_id: sub.unit_id,
            status,
            objective: cost,
            nodes_explored: search.nodes,
            wall_time,
            incumbent_history: search.history,
        },
    }
    .into_result()
}

/// True when some feasible schedule keeps the unit off for all of `window`.
/// Only feasibility matters, so every cost is zeroed except running inside
/// the window, which is priced out of reach; the first plan found that
/// stays off there ends the search.
pub fn rides_through(sub: &UnitSubproblem, window: std::ops::Range<usize>) -> bool {
    const FORBIDDEN: f64 = 1e9;
    // Cooler rooms stay cooler, so coasting from the lowest temperature the
    // band allows at the window start is the best case.
    if window.start < sub.periods() {
        let mut theta = sub.lo[window.start];
        for t in window.clone() {
            if t + 1 >= sub.periods() {
                break;
            }
            theta = sub.coeffs.step(theta, sub.theta_out[t], false);
            if theta > sub.hi[t + 1] + BOUND_TOLERANCE {
                return false;
            }
        }
    }
    let mut forced = sub.clone();
    forced.penalty_rate = 0.0;
    for (t, c) in forced.on_cost.iter_mut().enumerate() {
        *c = if window.contains(&t) { FORBIDDEN } else { 0.0 };
    }
    match solve_bnb(&forced) {
        Ok(sol) => sol.cost < FORBIDDEN / 2.0,
        Err(_) => false,
    }
}

pub fn solve_unit(sub: &UnitSubproblem, kind: SolverKind) -> Result<UnitSolution> {
    match kind {
        SolverKind::Bnb => solve_bnb(sub),
        SolverKind::Exhaustive => solve_exhaustive(sub),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSolution {
    pub schedule: Schedule,
    pub report: CostReport,
    pub unit_reports: Vec<SolveReport>,
}

pub fn solve_cluster(
    scenario: &Scenario,
    baseline: &BaselineResult,
    margins: &[RobustMargin],
    kind: SolverKind,
) -> Result<ClusterSolution> {
    if kind == SolverKind::Exhaustive && scenario.periods() > EXHAUSTIVE_CAP {
        return Err(Error::Config(format!(
            "exhaustive solver is limited to {EXHAUSTIVE_CAP} periods, the horizon has {}",
            scenario.periods()
        )));
    }
    let bounds = cluster_bounds(scenario, margins)?;
    let solved: Vec<Result<UnitSolution>> = scenario
        .units
        .par_iter()
        .zip(&bounds)
        .map(|(unit, b)| solve_unit(&UnitSubproblem::new(unit, scenario, b), kind))
        .collect();
    let mut failed = Vec::new();
    let mut plans = Vec::with_capacity(solved.len());
    let mut reports = Vec::with_capacity(solved.len());
    for (unit, r) in scenario.units.iter().zip(solved) {
        match r {
            Ok(sol) => {
                plans.push(sol.on_off);
                reports.push(sol.report);
            }
            Err(Error::Infeasible(msg)) => failed.push((unit.id, msg)),
            Err(e) => return Err(e),
        }
    }
    if !failed.is_empty() {
        let ids: Vec<String> = failed.iter().map(|(id, _)| id.to_string()).collect();
        let details: Vec<String> = failed.into_iter().map(|(_, m)| m).collect();
        return Err(Error::Infeasible(format!(
            "cluster infeasible, units {}: {}",
            ids.join(", "),
            details.join("; ")
        )));
    }
    let schedule = Schedule::from_on_off(scenario, baseline, plans)?;
    let report = settle(baseline, &schedule, scenario)?;
    Ok(ClusterSolution {
        schedule,
        report,
        unit_reports: reports,
    })
}

/// Hands the exported model to an external MILP solver.
///
/// `command` is split on whitespace and the LP path is appended as the
/// last argument. The solver must print `name value` lines on stdout;
/// blank lines and lines starting with `#` are skipped, and variables it
/// omits are taken as zero.
pub fn solve_external(
    model: &MilpModel,
    scenario: &Scenario,
    baseline: &BaselineResult,
    command: &str,
    lp_path: &Path,
) -> Result<(Schedule, SolveReport)> {
    let mut parts = command.split_whitespace();
    let program = parts
        .next()
        .ok_or_else(|| Error::ExternalSolver("not configured: no solver command given".into()))?;
    export_lp(model, lp_path)?;
    let start = Instant::now();
    let output = Command::new(program)
        .args(parts)
        .arg(lp_path)
        .output()
        .map_err(|e| Error::ExternalSolver(format!("failed to launch '{program}': {e}")))?;
    if !output.status.success() {
        return Err(Error::ExternalSolver(format!(
            "'{program}' exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    let x = parse_solution(model, &stdout)?;
    let violations = model.violations(&x, 1e-6);
    if !violations.is_empty() {
        return Err(Error::ExternalSolver(format!(
            "solution rejected: {}",
            violations.join("; ")
        )));
    }
    let on_off: Vec<Vec<bool>> = model
        .units
        .iter()
        .map(|uv| uv.u.iter().map(|&i| x[i].round() == 1.0).collect())
        .collect();
    let schedule = Schedule::from_on_off(scenario, baseline, on_off)?;
    for (g, uv) in model.units.iter().enumerate() {
        for (t, &i) in uv.theta.iter().enumerate() {
            if (x[i] - schedule.theta_nominal[g][t]).abs() > 1e-6 {
                return Err(Error::ExternalSolver(format!(
                    "{} = {} disagrees with the room dynamics ({})",
                    model.variables[i].name, x[i], schedule.theta_nominal[g][t]
                )));
            }
        }
    }
    let report = SolveReport {
        unit_id: 0,
        status: SolveStatus::Optimal,
        objective: model.objective_value(&x),
        nodes_explored: 0,
        wall_time: start.elapsed().as_secs_f64(),
        incumbent_history: Vec::new(),
    };
    Ok((schedule, report))
}

/// Parses `name value` lines into a full assignment, checking integrality.
pub fn parse_solution(model: &MilpModel, text: &str) -> Result<Vec<f64>> {
    let index: HashMap<&str, usize> = model
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.name.as_str(), i))
        .collect();
    let mut x = vec![0.0; model.variables.len()];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [name, value] = fields.as_slice() else {
            return Err(Error::ExternalSolver(format!(
                "line {}: expected 'name value', found '{line}'",
                lineno + 1
            )));
        };
        let i = *index
            .get(name)
            .ok_or_else(|| Error::ExternalSolver(format!("line {}: unknown variable {name}", lineno + 1)))?;
        let v: f64 = value
            .parse()
            .map_err(|_| Error::ExternalSolver(format!("line {}: bad value '{value}'", lineno + 1)))?;
        if model.variables[i].kind == VarKind::Binary && (v - v.round()).abs() > 1e-6 {
            return Err(Error::ExternalSolver(format!("{name} = {v} is not integral")));
        }
        x[i] = v;
    }
    Ok(x)
}
