//! Two-state Markov model of an uncontrolled fixed-frequency air conditioner.
//!
//! Switching probabilities are sigmoids of the setpoint error
//! `theta_set - theta`. The off→on probability uses `(a, b)`; the on→off
//! probability uses `(c, d)`. Matrix entries are addressed by name only.

use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::scenario::{AcUnit, OnOff, TransitionParams};

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn turn_on_probability(theta: f64, unit: &AcUnit) -> f64 {
    sigmoid(unit.markov.a * (unit.theta_set - theta) + unit.markov.b)
}

pub fn turn_off_probability(theta: f64, unit: &AcUnit) -> f64 {
    sigmoid(unit.markov.c * (unit.theta_set - theta) + unit.markov.d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionMatrix {
    pub p_stay_off: f64,
    pub p_off_to_on: f64,
    pub p_on_to_off: f64,
    pub p_stay_on: f64,
}

impl TransitionMatrix {
    pub fn from_switch_probabilities(p_off_to_on: f64, p_on_to_off: f64) -> Self {
        TransitionMatrix {
            p_stay_off: 1.0 - p_off_to_on,
            p_off_to_on,
            p_on_to_off,
            p_stay_on: 1.0 - p_on_to_off,
        }
    }
}

pub fn transition_matrix(theta: f64, unit: &AcUnit) -> TransitionMatrix {
    TransitionMatrix::from_switch_probabilities(turn_on_probability(theta, unit), turn_off_probability(theta, unit))
}

/// Inverse-CDF draw of the next state from a uniform `u` in [0, 1).
pub fn sample_next_state(state: OnOff, m: &TransitionMatrix, u: f64) -> OnOff {
    match state {
        OnOff::Off if u < m.p_off_to_on => OnOff::On,
        OnOff::Off => OnOff::Off,
        OnOff::On if u < m.p_on_to_off => OnOff::Off,
        OnOff::On => OnOff::On,
    }
}

/// One observed transition of a thermostat-driven unit.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct Observation {
    pub theta: f64,
    pub theta_set: f64,
    #[serde(rename = "state", deserialize_with = "de_state")]
    pub state: OnOff,
    #[serde(rename = "next_state", deserialize_with = "de_state")]
    pub next_state: OnOff,
}

fn de_state<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<OnOff, D::Error> {
    match u8::deserialize(d)? {
        0 => Ok(OnOff::Off),
        1 => Ok(OnOff::On),
        other => Err(serde::de::Error::custom(format!("state must be 0 or 1, got {other}"))),
    }
}

/// Reads `theta,theta_set,state,next_state` CSV (states 0/1).
pub fn read_observations(reader: impl Read) -> Result<Vec<Observation>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["theta", "theta_set", "state", "next_state"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Config(format!(
            "observation CSV header must be {}, got {}",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_observations_csv(path: impl AsRef<Path>) -> Result<Vec<Observation>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_observations(file)
}

/// Convergence diagnostics for one of the two logistic regressions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticDiagnostics {
    pub samples: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm of the log-likelihood gradient at the returned parameters.
    pub gradient_norm: f64,
    /// False when the feature has no spread, leaving the slope undetermined
    /// (it is reported as 0).
    pub slope_identified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub params: TransitionParams,
    pub turn_on: LogisticDiagnostics,
    pub turn_off: LogisticDiagnostics,
}

const FIT_TOLERANCE: f64 = 1e-8;
const FIT_MAX_ITERATIONS: usize = 10_000;
const ASCENT_STEP: f64 = 4.0;

/// Maximum-likelihood estimate of `(a, b, c, d)` from observed transitions.
pub fn fit_params(observations: &[Observation]) -> Result<FitReport> {
    let mut on_x = Vec::new();
    let mut on_y = Vec::new();
    let mut off_x = Vec::new();
    let mut off_y = Vec::new();
    for o in observations {
        let x = o.theta_set - o.theta;
        if !x.is_finite() {
            return Err(Error::Config("observation temperatures must be finite".into()));
        }
        match o.state {
            OnOff::Off => {
                on_x.push(x);
                on_y.push(o.next_state.is_on());
            }
            OnOff::On => {
                off_x.push(x);
                off_y.push(!o.next_state.is_on());
            }
        }
    }
    let ((a, b), turn_on) = fit_logistic(&on_x, &on_y).map_err(|e| label(e, "off-origin (turn-on)"))?;
    let ((c, d), turn_off) = fit_logistic(&off_x, &off_y).map_err(|e| label(e, "on-origin (turn-off)"))?;
    Ok(FitReport {
        params: TransitionParams { a, b, c, d },
        turn_on,
        turn_off,
    })
}

fn label(e: Error, which: &str) -> Error {
    match e {
        Error::NonIdentifiable(msg) => Error::NonIdentifiable(format!("{which} transitions: {msg}")),
        other => other,
    }
}

/// Fits `P(y) = sigmoid(slope * x + intercept)` by gradient ascent on the
/// mean log-likelihood. The feature is standardized internally so the
/// Hessian is bounded by I/4 and a fixed step of 4 always ascends; the
/// stopping rule is on the gradient in the original parameterization.
fn fit_logistic(x: &[f64], y: &[bool]) -> Result<((f64, f64), LogisticDiagnostics)> {
    let n = x.len();
    if n == 0 {
        return Err(Error::NonIdentifiable("no observations".into()));
    }
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == n {
        return Err(Error::NonIdentifiable(format!(
            "all {n} outcomes are identical; the maximum-likelihood estimate lies at infinity"
        )));
    }

    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    let spread = var.sqrt();
    let slope_identified = spread > 1e-12 * (1.0 + mean.abs());
    let scale = if slope_identified { spread } else { 1.0 };
    let z: Vec<f64> = x.iter().map(|v| (v - mean) / scale).collect();

    // Parameters in standardized space: w (slope), k (intercept).
    let gradient = |w: f64, k: f64| -> (f64, f64) {
        let mut gw = 0.0;
        let mut gk = 0.0;
        for (&zi, &yi) in z.iter().zip(y) {
            let r = f64::from(u8::from(yi)) - sigmoid(w * zi + k);
            gw += r * zi;
            gk += r;
        }
        if slope_identified {
            (gw / nf, gk / nf)
        } else {
            (0.0, gk / nf)
        }
    };
    // Gradient with respect to (slope, intercept) in original units.
    // mean(r x) = scale * mean(r z) + mean * mean(r)
    let original_norm = |gw: f64, gk: f64| -> f64 {
        let g_slope = if slope_identified { scale * gw + mean * gk } else { 0.0 };
        g_slope.abs().max(gk.abs())
    };

    let p0 = positives as f64 / nf;
    let (mut w, mut k) = (0.0, (p0 / (1.0 - p0)).ln());
    let mut iterations = 0;
    let (mut gw, mut gk) = gradient(w, k);
    let mut gnorm = original_norm(gw, gk);
    while gnorm >= FIT_TOLERANCE && iterations < FIT_MAX_ITERATIONS {
        iterations += 1;
        w += ASCENT_STEP * gw;
        k += ASCENT_STEP * gk;
        (gw, gk) = gradient(w, k);
        gnorm = original_norm(gw, gk);
    }

    let slope = if slope_identified { w / scale } else { 0.0 };
    let intercept = k - slope * mean;
    Ok((
        (slope, intercept),
        LogisticDiagnostics {
            samples: n,
            iterations,
            converged: gnorm < FIT_TOLERANCE,
            gradient_norm: gnorm,
            slope_identified,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{PopulationSpec, UniformRange};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_with(params: TransitionParams) -> AcUnit {
        let spec = PopulationSpec {
            setpoints: vec![25.0],
            markov: params,
            initial_theta: UniformRange::point(25.0),
            ..PopulationSpec::default()
        };
        crate::scenario::generate_population(1, &spec, 0).unwrap().remove(0)
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(1.0) - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!(sigmoid(20.0) >= 1.0 - 1e-8);
        for x in [-700.0, -50.0, -1.0, 1.0, 50.0, 700.0] {
            let s = sigmoid(x);
            assert!(s.is_finite() && s > 0.0 && s <= 1.0, "{x} -> {s}");
        }
        assert!(sigmoid(-700.0) > 0.0);
        assert!(sigmoid(-30.0) < 1.0);
    }

    #[test]
    fn probabilities_at_setpoint() {
        let u = unit_with(TransitionParams { a: -2.0, b: 0.0, c: 1.0, d: 0.0 });
        assert_eq!(turn_on_probability(25.0, &u), 0.5);
        assert_eq!(turn_off_probability(25.0, &u), 0.5);
        let m = transition_matrix(25.0, &u);
        assert_eq!(m, TransitionMatrix { p_stay_off: 0.5, p_off_to_on: 0.5, p_on_to_off: 0.5, p_stay_on: 0.5 });
    }

    #[test]
    fn zero_slope_is_constant() {
        let u = unit_with(TransitionParams { a: 0.0, b: 0.0, c: 0.0, d: 0.7 });
        for theta in [20.0, 25.0, 31.0] {
            assert_eq!(turn_off_probability(theta, &u), sigmoid(0.7));
        }
    }

    #[test]
    fn off_probability_has_same_form_as_on_probability() {
        let u = unit_with(TransitionParams { a: 0.4, b: -0.3, c: 0.4, d: -0.3 });
        for theta in [21.0, 24.5, 29.0] {
            assert_eq!(turn_on_probability(theta, &u), turn_off_probability(theta, &u));
        }
    }

    #[test]
    fn hot_room_switches_on() {
        let u = unit_with(TransitionParams::default());
        let m = transition_matrix(u.theta_set + 10.0, &u);
        // sigmoid(-2 * -10 - 1) = sigmoid(19)
        assert!(m.p_off_to_on > 0.999_999_99);
        assert!(m.p_on_to_off < 1e-6);
    }

    #[test]
    fn rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let params = TransitionParams {
                a: rng.gen_range(-5.0..5.0),
                b: rng.gen_range(-5.0..5.0),
                c: rng.gen_range(-5.0..5.0),
                d: rng.gen_range(-5.0..5.0),
            };
            let u = unit_with(params);
            let m = transition_matrix(rng.gen_range(15.0..35.0), &u);
            assert_eq!(m.p_stay_off + m.p_off_to_on, 1.0);
            assert_eq!(m.p_on_to_off + m.p_stay_on, 1.0);
        }
    }

    #[test]
    fn certain_and_impossible_transitions() {
        let never = TransitionMatrix::from_switch_probabilities(0.0, 1.0);
        for u in [0.0, 0.3, 0.999_999] {
            assert_eq!(sample_next_state(OnOff::Off, &never, u), OnOff::Off);
            assert_eq!(sample_next_state(OnOff::On, &never, u), OnOff::Off);
        }
    }

    #[test]
    fn empirical_switch_frequency() {
        let m = TransitionMatrix::from_switch_probabilities(0.37, 0.81);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let on = (0..n).filter(|_| sample_next_state(OnOff::Off, &m, rng.gen()) == OnOff::On).count();
        let freq = on as f64 / n as f64;
        let sigma = (0.37 * 0.63 / n as f64).sqrt();
        assert!((freq - 0.37).abs() < 3.0 * sigma, "{freq}");
    }

    fn synthetic(params: TransitionParams, n: usize, seed: u64) -> Vec<Observation> {
        let u = unit_with(params);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let theta = u.theta_set + rng.gen_range(-4.0..=4.0);
                let state = if i % 2 == 0 { OnOff::Off } else { OnOff::On };
                let next = sample_next_state(state, &transition_matrix(theta, &u), rng.gen());
                Observation { theta, theta_set: u.theta_set, state, next_state: next }
            })
            .collect()
    }

    #[test]
    fn recovers_known_parameters() {
        let truth = TransitionParams { a: -2.0, b: -1.0, c: 1.5, d: -0.5 };
        let data = synthetic(truth, 100_000, 17);
        let fit = fit_params(&data).unwrap();
        let p = fit.params;
        assert!(fit.turn_on.converged && fit.turn_off.converged, "{fit:?}");
        for (est, tru) in [(p.a, truth.a), (p.b, truth.b), (p.c, truth.c), (p.d, truth.d)] {
            assert!((est - tru).abs() < 0.05, "{p:?}");
        }
        // fitted turn-on curve over the sampled range
        let fitted = unit_with(p);
        let true_unit = unit_with(truth);
        let worst = (0..=800)
            .map(|i| 21.0 + i as f64 * 0.01)
            .map(|th| (turn_on_probability(th, &fitted) - turn_on_probability(th, &true_unit)).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.02, "max curve error {worst}");
    }

    #[test]
    fn balanced_data_at_setpoint() {
        let data: Vec<Observation> = (0..400)
            .map(|i| Observation {
                theta: 25.0,
                theta_set: 25.0,
                state: if i < 200 { OnOff::Off } else { OnOff::On },
                next_state: if i % 2 == 0 { OnOff::On } else { OnOff::Off },
            })
            .collect();
        let fit = fit_params(&data).unwrap();
        assert!(fit.params.b.abs() < 1e-9);
        assert!(fit.params.d.abs() < 1e-9);
        assert!(!fit.turn_on.slope_identified);
        assert!(!fit.turn_off.slope_identified);
    }

    #[test]
    fn duplicated_data_gives_same_fit() {
        let data = synthetic(TransitionParams::default(), 4_000, 5);
        let doubled: Vec<Observation> = data.iter().chain(data.iter()).cloned().collect();
        let a = fit_params(&data).unwrap().params;
        let b = fit_params(&doubled).unwrap().params;
        for (x, y) in [(a.a, b.a), (a.b, b.b), (a.c, b.c), (a.d, b.d)] {
            assert!((x - y).abs() < 1e-6, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn identical_outcomes_are_not_identifiable() {
        let data: Vec<Observation> = (0..10)
            .map(|i| Observation {
                theta: 24.0 + i as f64,
                theta_set: 25.0,
                state: OnOff::Off,
                next_state: OnOff::Off,
            })
            .chain([Observation { theta: 25.0, theta_set: 25.0, state: OnOff::On, next_state: OnOff::Off }])
            .chain([Observation { theta: 26.0, theta_set: 25.0, state: OnOff::On, next_state: OnOff::On }])
            .collect();
        let err = fit_params(&data).unwrap_err();
        assert!(matches!(err, Error::NonIdentifiable(ref m) if m.contains("turn-on")), "{err}");
    }

    #[test]
    fn reads_observation_csv() {
        let text = "theta,theta_set,state,next_state\n26.5,25,0,1\n24.0,25,1,0\n";
        let obs = read_observations(text.as_bytes()).unwrap();
        assert_eq!(obs.len(), 2);
        assert_eq!(obs[0].state, OnOff::Off);
        assert_eq!(obs[0].next_state, OnOff::On);
        assert!(read_observations("theta,state\n1,0\n".as_bytes()).is_err());
        assert!(read_observations("theta,theta_set,state,next_state\n1,2,3,0\n".as_bytes()).is_err());
    }
}
