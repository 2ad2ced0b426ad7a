#![allow(dead_code)]

use acdr_core::baseline::BaselineResult;
use acdr_core::scenario::{AcUnit, Forecast, Horizon, NormKind, OnOff, PriceSchedule, Scenario, TransitionParams};

pub fn small_unit(id: u64) -> AcUnit {
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

/// Three-period, one-unit scenario behind the LP fixtures.
pub fn tiny_scenario() -> Scenario {
    Scenario {
        horizon: Horizon {
            periods: 3,
            dt: 300.0,
            start_clock_time: 0.0,
        },
        forecast: Forecast {
            theta_out_pre: vec![30.0, 30.5, 31.0],
            epsilon: 0.3,
            norm_kind: NormKind::Box,
        },
        prices: PriceSchedule {
            price: vec![1.0, 2.0, 1.0],
        },
        beta: 0.5,
        mc_samples: 1,
        master_seed: 1,
        units: vec![small_unit(1)],
    }
}

pub fn flat_baseline(scenario: &Scenario, watts: f64) -> BaselineResult {
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
