//! First-order equivalent-thermal-parameter room model, discretized exactly
//! under a piecewise-constant outdoor temperature.
//!
//! Periods are 0-based here: `theta[0]` is the initial temperature, and
//! `theta[t + 1]` follows from `theta[t]` under `theta_out[t]` and the
//! on/off decision of period `t`.

use crate::scenario::AcUnit;

/// `exp(-dt / (R C))`.
pub fn decay_factor(unit: &AcUnit, dt: f64) -> f64 {
    (-dt / unit.time_constant()).exp()
}

/// Per-unit discretization constants for a fixed step length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalCoeffs {
    pub alpha: f64,
    /// R·η·P_rated, °C.
    pub gain: f64,
}

impl ThermalCoeffs {
    pub fn new(unit: &AcUnit, dt: f64) -> Self {
        ThermalCoeffs {
            alpha: decay_factor(unit, dt),
            gain: unit.full_on_gain(),
        }
    }

    #[inline]
    pub fn step(&self, theta: f64, theta_out: f64, on: bool) -> f64 {
        let target = if on { theta_out - self.gain } else { theta_out };
        target - (target - theta) * self.alpha
    }
}

pub fn step_temperature(theta: f64, theta_out: f64, power: f64, unit: &AcUnit, dt: f64) -> f64 {
    let alpha = decay_factor(unit, dt);
    let target = theta_out - unit.thermal_resistance * unit.eer * power;
    target - (target - theta) * alpha
}

/// Temperature trajectory of length `on_off.len()` starting at the unit's
/// initial temperature. The last entry of `theta_out` is not used.
pub fn simulate_trajectory(unit: &AcUnit, on_off: &[bool], theta_out: &[f64], dt: f64) -> Vec<f64> {
    assert_eq!(on_off.len(), theta_out.len(), "on/off and outdoor vectors differ in length");
    trajectory_from(unit.initial_theta, &ThermalCoeffs::new(unit, dt), on_off, theta_out)
}

pub(crate) fn trajectory_from(theta0: f64, coeffs: &ThermalCoeffs, on_off: &[bool], theta_out: &[f64]) -> Vec<f64> {
    let n = on_off.len();
    let mut theta = Vec::with_capacity(n);
    if n == 0 {
        return theta;
    }
    theta.push(theta0);
    for t in 0..n - 1 {
        let next = coeffs.step(theta[t], theta_out[t], on_off[t]);
        theta.push(next);
    }
    theta
}
