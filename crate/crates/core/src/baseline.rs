//! Monte Carlo estimate of the uncontrolled cluster.
//!
//! Each sample walks every unit through the Markov switching model while
//! its room follows the thermal dynamics under the nominal forecast. The
//! baseline power used in settlement is the sample mean.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::markov::{sample_next_state, transition_matrix};
use crate::rng::{self, Purpose};
use crate::scenario::{AcUnit, Scenario};
use crate::thermal::ThermalCoeffs;

/// Samples per work item. Fixed so the reduction order never depends on
/// the number of worker threads.
const SAMPLES_PER_CHUNK: usize = 32;
const CHUNKS_PER_BATCH: usize = 64;

/// Unit-major `G x T` matrices of per-sample trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrajectories {
    pub power: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    /// Expected uncontrolled power, W, `G x T`.
    pub mean_power: Vec<Vec<f64>>,
    pub mean_theta: Vec<Vec<f64>>,
    /// Sum of `mean_power` over units, W.
    pub total_power: Vec<f64>,
    /// Standard error of the cluster total per period (0 when N = 1).
    pub total_power_std_error: Vec<f64>,
    pub samples: usize,
    pub master_seed: u64,
}

impl BaselineResult {
    pub fn units(&self) -> usize {
        self.mean_power.len()
    }

    pub fn periods(&self) -> usize {
        self.total_power.len()
    }
}

/// Walks one unit through `theta_out.len()` periods, pulling one uniform
/// per transition from `draw`. Returns on/off states and temperatures.
pub fn simulate_unit_path(
    unit: &AcUnit,
    theta_out: &[f64],
    dt: f64,
    mut draw: impl FnMut() -> f64,
) -> (Vec<bool>, Vec<f64>) {
    let n = theta_out.len();
    let coeffs = ThermalCoeffs::new(unit, dt);
    let mut states = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    let mut state = unit.initial_state;
    let mut temp = unit.initial_theta;
    for t in 0..n {
        states.push(state.is_on());
        theta.push(temp);
        if t + 1 == n {
            break;
        }
        let m = transition_matrix(temp, unit);
        let next = sample_next_state(state, &m, draw());
        temp = coeffs.step(temp, theta_out[t], state.is_on());
        state = next;
    }
    (states, theta)
}

fn unit_path(scenario: &Scenario, unit: &AcUnit, sample_index: u64) -> (Vec<bool>, Vec<f64>) {
    let mut rng = rng::stream(scenario.master_seed, sample_index, unit.id, Purpose::MarkovSwitching);
    simulate_unit_path(unit, &scenario.forecast.theta_out_pre, scenario.horizon.dt, || rng.gen::<f64>())
}

pub fn simulate_sample(scenario: &Scenario, sample_index: usize) -> SampleTrajectories {
    let (power, theta) = scenario
        .units
        .iter()
        .map(|unit| {
            let (states, theta) = unit_path(scenario, unit, sample_index as u64);
            let power = states.iter().map(|&on| if on { unit.rated_power } else { 0.0 }).collect();
            (power, theta)
        })
        .unzip();
    SampleTrajectories { power, theta }
}

#[derive(Debug, Clone)]
struct Accumulator {
    periods: usize,
    on_counts: Vec<u32>,
    theta_sum: Vec<f64>,
    total_sum: Vec<f64>,
    total_sq: Vec<f64>,
}

impl Accumulator {
    fn new(units: usize, periods: usize) -> Self {
        Accumulator {
            periods,
            on_counts: vec![0; units * periods],
            theta_sum: vec![0.0; units * periods],
            total_sum: vec![0.0; periods],
            total_sq: vec![0.0; periods],
        }
    }

    fn add_sample(&mut self, scenario: &Scenario, sample_index: u64) {
        let t_len = self.periods;
        let mut total = vec![0.0; t_len];
        for (g, unit) in scenario.units.iter().enumerate() {
            let (states, theta) = unit_path(scenario, unit, sample_index);
            let row = g * t_len;
            for t in 0..t_len {
                if states[t] {
                    self.on_counts[row + t] += 1;
                    total[t] += unit.rated_power;
                }
                self.theta_sum[row + t] += theta[t];
            }
        }
        for t in 0..t_len {
            self.total_sum[t] += total[t];
            self.total_sq[t] += total[t] * total[t];
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        for (a, b) in self.on_counts.iter_mut().zip(&other.on_counts) {
            *a += b;
        }
        for (a, b) in self.theta_sum.iter_mut().zip(&other.theta_sum) {
            *a += b;
        }
        for t in 0..self.periods {
            self.total_sum[t] += other.total_sum[t];
            self.total_sq[t] += other.total_sq[t];
        }
    }
}

pub fn run_baseline(scenario: &Scenario) -> Result<BaselineResult> {
    scenario.validate()?;
    let n = scenario.mc_samples;
    if n == 0 {
        return Err(Error::Config("mc_samples must be >= 1".into()));
    }
    let g_len = scenario.units.len();
    let t_len = scenario.periods();

    let chunks = n.div_ceil(SAMPLES_PER_CHUNK);
    let mut acc = Accumulator::new(g_len, t_len);
    for batch_start in (0..chunks).step_by(CHUNKS_PER_BATCH) {
        let batch_end = (batch_start + CHUNKS_PER_BATCH).min(chunks);
        let partials: Vec<Accumulator> = (batch_start..batch_end)
            .into_par_iter()
            .map(|chunk| {
                let mut part = Accumulator::new(g_len, t_len);
                let first = chunk * SAMPLES_PER_CHUNK;
                for s in first..(first + SAMPLES_PER_CHUNK).min(n) {
                    part.add_sample(scenario, s as u64);
                }
                part
            })
            .collect();
        for part in &partials {
            acc.merge(part);
        }
    }

    let nf = n as f64;
    let mut mean_power = Vec::with_capacity(g_len);
    let mut mean_theta = Vec::with_capacity(g_len);
    for (g, unit) in scenario.units.iter().enumerate() {
        let row = g * t_len;
        mean_power.push(
            (0..t_len)
                .map(|t| unit.rated_power * f64::from(acc.on_counts[row + t]) / nf)
                .collect::<Vec<_>>(),
        );
        mean_theta.push((0..t_len).map(|t| acc.theta_sum[row + t] / nf).collect::<Vec<_>>());
    }
    let total_power = (0..t_len).map(|t| mean_power.iter().map(|row| row[t]).sum()).collect();
    let total_power_std_error = (0..t_len)
        .map(|t| {
            if n < 2 {
                return 0.0;
            }
            let mean = acc.total_sum[t] / nf;
            let var = ((acc.total_sq[t] - nf * mean * mean) / (nf - 1.0)).max(0.0);
            (var / nf).sqrt()
        })
        .collect();

    Ok(BaselineResult {
        mean_power,
        mean_theta,
        total_power,
        total_power_std_error,
        samples: n,
        master_seed: scenario.master_seed,
    })
}

/// `t,clock,total_power_W,mean_theta_C`, one row per period; the
/// temperature column is the cluster average.
pub fn write_baseline_csv(result: &BaselineResult, scenario: &Scenario, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "clock", "total_power_W", "mean_theta_C"])?;
    let g = result.units() as f64;
    for t in 0..result.periods() {
        let avg_theta = result.mean_theta.iter().map(|row| row[t]).sum::<f64>() / g;
        w.write_record([
            (t + 1).to_string(),
            scenario.horizon.clock(t),
            result.total_power[t].to_string(),
            avg_theta.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("writing baseline csv", e))?;
    Ok(())
}

/// Per-unit expansion: `unit_id,t,clock,mean_power_W,mean_theta_C`.
pub fn write_baseline_units_csv(result: &BaselineResult, scenario: &Scenario, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["unit_id", "t", "clock", "mean_power_W", "mean_theta_C"])?;
    for (g, unit) in scenario.units.iter().enumerate() {
        for t in 0..result.periods() {
            w.write_record([
                unit.id.to_string(),
                (t + 1).to_string(),
                scenario.horizon.clock(t),
                result.mean_power[g][t].to_string(),
                result.mean_theta[g][t].to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("writing baseline csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{bundled, OnOff, TransitionParams};
    use crate::thermal::simulate_trajectory;

    fn all_initially(units: &mut [AcUnit], state: OnOff) {
        for u in units {
            u.initial_state = state;
        }
    }

    fn small(count: usize, samples: usize, seed: u64) -> Scenario {
        let mut s = bundled::scenario(count, seed).unwrap();
        s.mc_samples = samples;
        s
    }

    fn with_markov(mut s: Scenario, params: TransitionParams, state: OnOff) -> Scenario {
        for u in &mut s.units {
            u.markov = params;
        }
        all_initially(&mut s.units, state);
        s
    }

    #[test]
    fn absorbing_off_state() {
        // sigmoid(-800) underflows to exactly 0
        let s = with_markov(small(4, 50, 1), TransitionParams { a: 0.0, b: -800.0, c: 0.0, d: 0.0 }, OnOff::Off);
        let sample = simulate_sample(&s, 3);
        for (unit, (power, theta)) in s.units.iter().zip(sample.power.iter().zip(&sample.theta)) {
            assert!(power.iter().all(|&p| p == 0.0));
            let free = simulate_trajectory(unit, &[false; 48], &s.forecast.theta_out_pre, 300.0);
            assert_eq!(theta, &free);
        }
        let result = run_baseline(&s).unwrap();
        assert!(result.mean_power.iter().flatten().all(|&p| p == 0.0));
    }

    #[test]
    fn absorbing_on_state() {
        let s = with_markov(small(4, 5, 1), TransitionParams { a: 0.0, b: 0.0, c: 0.0, d: -800.0 }, OnOff::On);
        let sample = simulate_sample(&s, 0);
        for (unit, row) in s.units.iter().zip(&sample.power) {
            assert!(row.iter().all(|&p| p == unit.rated_power));
        }
    }

    #[test]
    fn scripted_draws_follow_matrix_thresholds() {
        let s = small(1, 1, 4);
        let unit = &s.units[0];
        let out = &s.forecast.theta_out_pre[..3];
        let draws = [0.9, 0.1];
        let mut it = draws.iter();
        let (states, theta) = simulate_unit_path(unit, out, 300.0, || *it.next().unwrap());

        // hand trace
        let coeffs = ThermalCoeffs::new(unit, 300.0);
        let mut expected = vec![unit.initial_state.is_on()];
        let mut th = unit.initial_theta;
        let mut state = unit.initial_state;
        for (t, &u) in draws.iter().enumerate() {
            let m = transition_matrix(th, unit);
            let next = match state {
                OnOff::On => if u < m.p_on_to_off { OnOff::Off } else { OnOff::On },
                OnOff::Off => if u < m.p_off_to_on { OnOff::On } else { OnOff::Off },
            };
            th = coeffs.step(th, out[t], state.is_on());
            state = next;
            expected.push(state.is_on());
        }
        assert_eq!(states, expected);
        assert_eq!(theta.len(), 3);
    }

    #[test]
    fn single_sample_mean_is_that_sample() {
        let s = small(5, 1, 9);
        let result = run_baseline(&s).unwrap();
        let sample = simulate_sample(&s, 0);
        assert_eq!(result.mean_power, sample.power);
        assert_eq!(result.mean_theta, sample.theta);
    }

    #[test]
    fn result_is_independent_of_thread_count() {
        let s = small(6, 300, 21);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_baseline(&s).unwrap());
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| run_baseline(&s).unwrap());
        assert_eq!(one, four);
    }

    #[test]
    fn invariants_hold() {
        let s = small(8, 200, 2);
        let r = run_baseline(&s).unwrap();
        for (unit, row) in s.units.iter().zip(&r.mean_power) {
            assert!(row.iter().all(|&p| (0.0..=unit.rated_power).contains(&p)));
        }
        for t in 0..r.periods() {
            let sum: f64 = r.mean_power.iter().map(|row| row[t]).sum();
            assert!((sum - r.total_power[t]).abs() <= 1e-6 * sum.abs().max(1.0));
        }
    }

    #[test]
    fn baseline_csv_layout() {
        let s = small(2, 3, 2);
        let r = run_baseline(&s).unwrap();
        let mut buf = Vec::new();
        write_baseline_csv(&r, &s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,clock,total_power_W,mean_theta_C");
        assert!(lines.next().unwrap().starts_with("1,10:00,"));
        assert_eq!(text.lines().count(), 49);
    }
}
