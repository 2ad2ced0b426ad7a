//! Robust comfort constraints under outdoor-temperature uncertainty.
//!
//! Substituting the room dynamics turns every temperature into an affine
//! function of the outdoor-temperature vector `xi` and the on/off decisions:
//!
//! ```text
//! theta_t = alpha^t theta_0 + sum_{k<t} alpha^(t-1-k) (1-alpha) (xi_k - g u_k)
//! ```
//!
//! A bound `theta_t <= theta_max` that must hold for every `xi` with
//! `||xi - xi_hat|| <= eps` is equivalent, by Lagrangian duality of the inner
//! minimization over the ball, to the nominal bound tightened by
//! `eps * ||row_t||_*`, where `row_t` holds the `xi` coefficients of
//! `theta_t` and `||.||_*` is the dual norm. The smallest admissible
//! multiplier equals that dual norm, so it is substituted directly and no
//! multiplier variables are needed.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scenario::{AcUnit, Forecast, Horizon, NormKind, Scenario};
use crate::thermal::{simulate_trajectory, ThermalCoeffs};

/// Temperatures as affine functions of outdoor temperature and decisions.
/// Rows are periods (0-based); `theta_0` is the certain initial value.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineStateMap {
    /// `alpha^t * theta_0`.
    pub const_term: Vec<f64>,
    /// Coefficient of `xi_k` in `theta_t`; strictly lower-triangular.
    pub xi_coeffs: Vec<Vec<f64>>,
    /// Coefficient of the on-decision `u_k` in `theta_t`, °C.
    pub u_coeffs: Vec<Vec<f64>>,
}

impl AffineStateMap {
    pub fn periods(&self) -> usize {
        self.const_term.len()
    }

    pub fn evaluate(&self, xi: &[f64], on_off: &[bool]) -> Vec<f64> {
        (0..self.periods())
            .map(|t| {
                let mut theta = self.const_term[t];
                for k in 0..t {
                    theta += self.xi_coeffs[t][k] * xi[k];
                    if on_off[k] {
                        theta += self.u_coeffs[t][k];
                    }
                }
                theta
            })
            .collect()
    }
}

pub fn unroll_affine(unit: &AcUnit, horizon: &Horizon) -> AffineStateMap {
    let n = horizon.periods;
    let coeffs = ThermalCoeffs::new(unit, horizon.dt);
    let alpha = coeffs.alpha;
    let mut powers = Vec::with_capacity(n);
    let mut p = 1.0;
    for _ in 0..n {
        powers.push(p);
        p *= alpha;
    }
    let const_term = powers.iter().map(|&a| a * unit.initial_theta).collect();
    let xi_coeffs: Vec<Vec<f64>> = (0..n)
        .map(|t| {
            (0..n)
                .map(|k| if k < t { powers[t - 1 - k] * (1.0 - alpha) } else { 0.0 })
                .collect()
        })
        .collect();
    let u_coeffs = xi_coeffs
        .iter()
        .map(|row| row.iter().map(|&c| -coeffs.gain * c).collect())
        .collect();
    AffineStateMap {
        const_term,
        xi_coeffs,
        u_coeffs,
    }
}

/// Norm dual to the uncertainty-set norm: the 1-norm for a box, the
/// Euclidean norm for a Euclidean ball.
pub fn dual_norm(kind: NormKind, row: &[f64]) -> f64 {
    match kind {
        NormKind::Box => row.iter().map(|v| v.abs()).sum(),
        NormKind::Ellipsoid => row.iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}

pub fn dual_norm_of(kind: &str) -> Result<impl Fn(&[f64]) -> f64> {
    let kind: NormKind = kind.parse()?;
    Ok(move |row: &[f64]| dual_norm(kind, row))
}

/// Per-period tightening of the comfort band, °C.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustMargin {
    pub epsilon: f64,
    pub margin: Vec<f64>,
}

pub fn robust_margins(map: &AffineStateMap, epsilon: f64, kind: NormKind) -> RobustMargin {
    RobustMargin {
        epsilon,
        margin: map.xi_coeffs.iter().map(|row| epsilon * dual_norm(kind, row)).collect(),
    }
}

/// Per-period admissible nominal temperatures.
#[derive(Debug, Clone, PartialEq)]
pub struct ComfortBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

pub fn tighten_comfort(unit: &AcUnit, margins: &RobustMargin) -> Result<ComfortBounds> {
    let n = margins.margin.len();
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for (t, &m) in margins.margin.iter().enumerate() {
        // period 1 carries the certain initial temperature
        let m = if t == 0 { 0.0 } else { m };
        let (l, h) = (unit.theta_min + m, unit.theta_max - m);
        if l > h {
            // margin scales linearly with epsilon, so the band reopens at
            // epsilon * half_band / margin
            let half_band = 0.5 * (unit.theta_max - unit.theta_min);
            let epsilon_reduction = margins.epsilon * (m - half_band) / m;
            return Err(Error::EmptyComfortBand {
                unit_id: unit.id,
                period: t + 1,
                lo: l,
                hi: h,
                epsilon_reduction,
            });
        }
        lo.push(l);
        hi.push(h);
    }
    Ok(ComfortBounds { lo, hi })
}

/// Margins for every unit at the scenario's epsilon and norm.
pub fn cluster_margins(scenario: &Scenario) -> Vec<RobustMargin> {
    scenario
        .units
        .par_iter()
        .map(|unit| {
            let map = unroll_affine(unit, &scenario.horizon);
            robust_margins(&map, scenario.forecast.epsilon, scenario.forecast.norm_kind)
        })
        .collect()
}

pub fn cluster_bounds(scenario: &Scenario, margins: &[RobustMargin]) -> Result<Vec<ComfortBounds>> {
    scenario
        .units
        .iter()
        .zip(margins)
        .map(|(unit, m)| tighten_comfort(unit, m))
        .collect()
}

fn band_violation(unit: &AcUnit, theta: &[f64]) -> f64 {
    theta
        .iter()
        .map(|&th| (th - unit.theta_max).max(unit.theta_min - th))
        .fold(0.0, f64::max)
}

/// Largest comfort-band violation (°C, 0 when robustly feasible) of a
/// fixed schedule over the whole uncertainty set.
///
/// Box sets use the monotonicity of the dynamics in every outdoor
/// temperature: the hottest trajectory is at `xi_hat + eps` and the coldest
/// at `xi_hat - eps`. Euclidean sets maximize each period separately at the
/// point of the ball aligned with that period's coefficient row.
pub fn worst_case_check(unit: &AcUnit, on_off: &[bool], forecast: &Forecast, dt: f64) -> f64 {
    let eps = forecast.epsilon;
    let xi_hat = &forecast.theta_out_pre;
    match forecast.norm_kind {
        NormKind::Box => {
            let hot: Vec<f64> = xi_hat.iter().map(|x| x + eps).collect();
            let cold: Vec<f64> = xi_hat.iter().map(|x| x - eps).collect();
            let hot_traj = simulate_trajectory(unit, on_off, &hot, dt);
            let cold_traj = simulate_trajectory(unit, on_off, &cold, dt);
            let over = hot_traj.iter().map(|&th| th - unit.theta_max).fold(0.0, f64::max);
            let under = cold_traj.iter().map(|&th| unit.theta_min - th).fold(0.0, f64::max);
            over.max(under)
        }
        NormKind::Ellipsoid => {
            let horizon = Horizon {
                periods: xi_hat.len(),
                dt,
                start_clock_time: 0.0,
            };
            let map = unroll_affine(unit, &horizon);
            let mut worst: f64 = 0.0;
            for (t, row) in map.xi_coeffs.iter().enumerate() {
                let norm = dual_norm(NormKind::Ellipsoid, row);
                if norm == 0.0 {
                    let nominal = simulate_trajectory(unit, on_off, xi_hat, dt);
                    worst = worst.max(band_violation(unit, &nominal[t..=t]));
                    continue;
                }
                let up: Vec<f64> = xi_hat.iter().zip(row).map(|(x, r)| x + eps * r / norm).collect();
                let down: Vec<f64> = xi_hat.iter().zip(row).map(|(x, r)| x - eps * r / norm).collect();
                let hot = simulate_trajectory(unit, on_off, &up, dt)[t];
                let cold = simulate_trajectory(unit, on_off, &down, dt)[t];
                worst = worst.max(hot - unit.theta_max).max(unit.theta_min - cold);
            }
            worst
        }
    }
}

/// Draws a point uniformly from the uncertainty set around the forecast.
pub fn sample_in_set(forecast: &Forecast, rng: &mut impl Rng) -> Vec<f64> {
    let eps = forecast.epsilon;
    let xi_hat = &forecast.theta_out_pre;
    match forecast.norm_kind {
        NormKind::Box => xi_hat.iter().map(|x| x + eps * rng.gen_range(-1.0..=1.0)).collect(),
        NormKind::Ellipsoid => {
            let dir: Vec<f64> = xi_hat
                .iter()
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let norm = dual_norm(NormKind::Ellipsoid, &dir).max(f64::MIN_POSITIVE);
            let radius = eps * rng.gen::<f64>().powf(1.0 / xi_hat.len() as f64);
            xi_hat.iter().zip(&dir).map(|(x, d)| x + radius * d / norm).collect()
        }
    }
}

/// Largest violation over `samples` random realizations inside the set.
pub fn sampled_violation(
    unit: &AcUnit,
    on_off: &[bool],
    forecast: &Forecast,
    dt: f64,
    samples: usize,
    rng: &mut impl Rng,
) -> f64 {
    (0..samples)
        .map(|_| {
            let xi = sample_in_set(forecast, rng);
            band_violation(unit, &simulate_trajectory(unit, on_off, &xi, dt))
        })
        .fold(0.0, f64::max)
}
