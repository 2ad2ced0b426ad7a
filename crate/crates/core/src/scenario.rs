//! Domain inputs: air-conditioner units, the planning horizon, the outdoor
//! temperature forecast with its uncertainty set, and time-of-use prices.
//!
//! Scenario files are strict JSON (unknown keys are rejected). All values are
//! SI: watts, seconds, joules, °C. Prices are CNY/kWh and the comfort penalty
//! `beta` is CNY per °C·hour.

use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units;

/// On/off state of a fixed-frequency compressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OnOff {
    Off,
    On,
}

impl OnOff {
    pub fn is_on(self) -> bool {
        self == OnOff::On
    }

    pub fn from_bool(on: bool) -> Self {
        if on {
            OnOff::On
        } else {
            OnOff::Off
        }
    }
}

/// Sigmoid parameters of the switching behaviour. `(a, b)` drive the
/// off→on probability, `(c, d)` the on→off probability; the feature is
/// `theta_set - theta` in both cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for TransitionParams {
    fn default() -> Self {
        TransitionParams {
            a: -2.0,
            b: -1.0,
            c: 1.5,
            d: -0.5,
        }
    }
}

/// One fixed-frequency air conditioner together with the room it cools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcUnit {
    pub id: u64,
    /// W
    pub rated_power: f64,
    pub eer: f64,
    /// °C/W
    pub thermal_resistance: f64,
    /// J/°C
    pub thermal_capacity: f64,
    pub theta_set: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub min_up_periods: usize,
    pub min_down_periods: usize,
    pub markov: TransitionParams,
    pub initial_state: OnOff,
    pub initial_dwell_periods: usize,
    pub initial_theta: f64,
}

impl AcUnit {
    /// Time constant R·C in seconds.
    pub fn time_constant(&self) -> f64 {
        self.thermal_resistance * self.thermal_capacity
    }

    /// Steady-state temperature depression when running at rated power, °C.
    pub fn full_on_gain(&self) -> f64 {
        self.thermal_resistance * self.eer * self.rated_power
    }

    pub fn validate(&self) -> Result<()> {
        let what = || format!("unit {}", self.id);
        let positive = [
            ("rated_power", self.rated_power),
            ("eer", self.eer),
            ("thermal_resistance", self.thermal_resistance),
            ("thermal_capacity", self.thermal_capacity),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(what(), format!("{name} must be > 0, got {value}")));
            }
        }
        let temps = [
            ("theta_set", self.theta_set),
            ("theta_min", self.theta_min),
            ("theta_max", self.theta_max),
            ("initial_theta", self.initial_theta),
        ];
        for (name, value) in temps {
            if !value.is_finite() {
                return Err(Error::invalid(what(), format!("{name} is not finite")));
            }
        }
        if self.theta_min > self.theta_set {
            return Err(Error::invalid(
                what(),
                format!("theta_min {} > theta_set {}", self.theta_min, self.theta_set),
            ));
        }
        if self.theta_set > self.theta_max {
            return Err(Error::invalid(
                what(),
                format!("theta_set {} > theta_max {}", self.theta_set, self.theta_max),
            ));
        }
        if self.initial_theta < self.theta_min || self.initial_theta > self.theta_max {
            return Err(Error::invalid(
                what(),
                format!(
                    "initial_theta {} outside comfort band [{}, {}]",
                    self.initial_theta, self.theta_min, self.theta_max
                ),
            ));
        }
        if self.min_up_periods == 0 || self.min_down_periods == 0 {
            return Err(Error::invalid(what(), "min_up_periods and min_down_periods must be >= 1"));
        }
        let m = &self.markov;
        if ![m.a, m.b, m.c, m.d].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(what(), "markov parameters must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizon {
    pub periods: usize,
    /// Period length in seconds.
    pub dt: f64,
    /// Seconds since midnight of period 1; only used for labels.
    pub start_clock_time: f64,
}

impl Horizon {
    pub fn validate(&self) -> Result<()> {
        if self.periods < 2 {
            return Err(Error::invalid("horizon", format!("periods must be >= 2, got {}", self.periods)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("horizon", format!("dt must be > 0, got {}", self.dt)));
        }
        Ok(())
    }

    /// Clock label of 0-based period index `t`.
    pub fn clock(&self, t: usize) -> String {
        units::clock_label(self.start_clock_time + t as f64 * self.dt)
    }

    pub fn dt_hours(&self) -> f64 {
        units::hours(self.dt)
    }
}

/// Shape of the outdoor-temperature uncertainty ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    /// Sup-norm ball: every period independently within ±epsilon.
    Box,
    /// Euclidean ball of radius epsilon over the whole forecast vector.
    Ellipsoid,
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "box" => Ok(NormKind::Box),
            "ellipsoid" => Ok(NormKind::Ellipsoid),
            other => Err(Error::Config(format!(
                "unsupported uncertainty norm {other:?} (expected box or ellipsoid)"
            ))),
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormKind::Box => f.write_str("box"),
            NormKind::Ellipsoid => f.write_str("ellipsoid"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Forecast {
    /// Nominal outdoor temperature per period, °C.
    pub theta_out_pre: Vec<f64>,
    /// Radius of the uncertainty set, °C.
    pub epsilon: f64,
    pub norm_kind: NormKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceSchedule {
    /// CNY/kWh per period.
    pub price: Vec<f64>,
}

impl PriceSchedule {
    /// First maximal run of periods priced at the schedule maximum.
    pub fn peak_window(&self) -> Range<usize> {
        let max = self.price.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let start = self.price.iter().position(|&p| p == max).unwrap_or(0);
        let len = self.price[start..].iter().take_while(|&&p| p == max).count();
        start..start + len
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub horizon: Horizon,
    pub forecast: Forecast,
    pub prices: PriceSchedule,
    /// Comfort penalty, CNY per °C·hour.
    pub beta: f64,
    pub mc_samples: usize,
    pub master_seed: u64,
    pub units: Vec<AcUnit>,
}

impl Scenario {
    pub fn periods(&self) -> usize {
        self.horizon.periods
    }

    pub fn validate(&self) -> Result<()> {
        self.horizon.validate()?;
        let t = self.horizon.periods;
        if self.forecast.theta_out_pre.len() != t {
            return Err(Error::invalid(
                "forecast",
                format!("theta_out_pre has {} entries, horizon has {t} periods", self.forecast.theta_out_pre.len()),
            ));
        }
        if self.forecast.theta_out_pre.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("forecast", "theta_out_pre must be finite"));
        }
        if !(self.forecast.epsilon.is_finite() && self.forecast.epsilon >= 0.0) {
            return Err(Error::invalid("forecast", format!("epsilon must be >= 0, got {}", self.forecast.epsilon)));
        }
        if self.prices.price.len() != t {
            return Err(Error::invalid(
                "prices",
                format!("price has {} entries, horizon has {t} periods", self.prices.price.len()),
            ));
        }
        if let Some((i, p)) = self.prices.price.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::invalid("prices", format!("price at period {} must be >= 0, got {p}", i + 1)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::invalid("beta", format!("must be >= 0, got {}", self.beta)));
        }
        if self.mc_samples == 0 {
            return Err(Error::invalid("mc_samples", "must be >= 1"));
        }
        if self.units.is_empty() {
            return Err(Error::invalid("units", "scenario needs at least one unit"));
        }
        let mut ids = std::collections::HashSet::new();
        for unit in &self.units {
            unit.validate()?;
            if !ids.insert(unit.id) {
                return Err(Error::invalid(format!("unit {}", unit.id), "duplicate unit id"));
            }
        }
        Ok(())
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let scenario = parse_scenario(&text).map_err(|e| match e {
        Error::Parse { source, .. } => Error::Parse {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })?;
    Ok(scenario)
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|source| Error::Parse {
        path: "<string>".into(),
        source,
    })?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(scenario).expect("scenario serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformRange {
    pub min: f64,
    pub max: f64,
}

impl UniformRange {
    pub const fn new(min: f64, max: f64) -> Self {
        UniformRange { min, max }
    }

    pub const fn point(value: f64) -> Self {
        UniformRange { min: value, max: value }
    }

    fn check(&self, name: &str, positive: bool) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::Config(format!("{name} range must be finite")));
        }
        if self.min > self.max {
            return Err(Error::Config(format!("{name} range is empty: min {} > max {}", self.min, self.max)));
        }
        if positive && self.min <= 0.0 {
            return Err(Error::Config(format!("{name} range must be positive, min is {}", self.min)));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.gen_range(self.min..=self.max)
        }
    }
}

/// Distributions for synthesizing a heterogeneous cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub thermal_resistance: UniformRange,
    pub thermal_capacity: UniformRange,
    pub rated_power: UniformRange,
    pub eer: UniformRange,
    /// Setpoints are drawn uniformly from this list.
    pub setpoints: Vec<f64>,
    /// Comfort band is `theta_set ± comfort_half_band`.
    pub comfort_half_band: f64,
    /// Drawn initial temperatures are clipped to the unit's comfort band.
    pub initial_theta: UniformRange,
    pub markov: TransitionParams,
    pub min_up_periods: usize,
    pub min_down_periods: usize,
    pub initial_state: OnOff,
    /// `None` means `min(min_up, min_down)`, i.e. free to switch at period 1.
    pub initial_dwell_periods: Option<usize>,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            thermal_resistance: UniformRange::new(0.001, 0.00772),
            thermal_capacity: UniformRange::new(336_140.0, 3_074_600.0),
            rated_power: UniformRange::new(1000.0, 3000.0),
            eer: UniformRange::new(2.5, 4.0),
            setpoints: vec![24.0, 25.0, 26.0, 27.0, 28.0],
            comfort_half_band: 3.0,
            initial_theta: UniformRange::new(25.0, 28.0),
            markov: TransitionParams::default(),
            min_up_periods: 2,
            min_down_periods: 2,
            initial_state: OnOff::On,
            initial_dwell_periods: None,
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        self.thermal_resistance.check("thermal_resistance", true)?;
        self.thermal_capacity.check("thermal_capacity", true)?;
        self.rated_power.check("rated_power", true)?;
        self.eer.check("eer", true)?;
        self.initial_theta.check("initial_theta", false)?;
        if self.setpoints.is_empty() || self.setpoints.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("setpoints must be a nonempty list of finite values".into()));
        }
        if !(self.comfort_half_band.is_finite() && self.comfort_half_band >= 0.0) {
            return Err(Error::Config("comfort_half_band must be >= 0".into()));
        }
        if self.min_up_periods == 0 || self.min_down_periods == 0 {
            return Err(Error::Config("minimum up/down times must be >= 1".into()));
        }
        Ok(())
    }
}

/// Draws `count` independent units; ids run from 1 to `count`.
pub fn generate_population(count: usize, spec: &PopulationSpec, seed: u64) -> Result<Vec<AcUnit>> {
    if count == 0 {
        return Err(Error::Config("population count must be >= 1".into()));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dwell = spec
        .initial_dwell_periods
        .unwrap_or(spec.min_up_periods.min(spec.min_down_periods));

    let units = (1..=count as u64)
        .map(|id| {
            let thermal_resistance = spec.thermal_resistance.sample(&mut rng);
            let thermal_capacity = spec.thermal_capacity.sample(&mut rng);
            let theta_set = spec.setpoints[rng.gen_range(0..spec.setpoints.len())];
            let rated_power = spec.rated_power.sample(&mut rng);
            let eer = spec.eer.sample(&mut rng);
            let theta_min = theta_set - spec.comfort_half_band;
            let theta_max = theta_set + spec.comfort_half_band;
            let lo = spec.initial_theta.min.max(theta_min);
            let hi = spec.initial_theta.max.min(theta_max);
            let draw = spec.initial_theta.sample(&mut rng);
            let initial_theta = if lo <= hi {
                lo + (hi - lo) * unit_fraction(draw, &spec.initial_theta)
            } else {
                draw.clamp(theta_min, theta_max)
            };
            AcUnit {
                id,
                rated_power,
                eer,
                thermal_resistance,
                thermal_capacity,
                theta_set,
                theta_min,
                theta_max,
                min_up_periods: spec.min_up_periods,
                min_down_periods: spec.min_down_periods,
                markov: spec.markov,
                initial_state: spec.initial_state,
                initial_dwell_periods: dwell,
                initial_theta,
            }
        })
        .collect();
    Ok(units)
}

// Position of `x` within `range` as a fraction in [0, 1].
fn unit_fraction(x: f64, range: &UniformRange) -> f64 {
    if range.max > range.min {
        ((x - range.min) / (range.max - range.min)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Example window: 10:00–14:00 in 5-minute periods with a price peak from
/// 11:00 to 13:00 and a hot midday. Only units that can stay off through
/// the whole peak are enrolled, the way an aggregator would sign up a
/// demand-response event.
pub mod bundled {
    use super::*;
    use rayon::prelude::*;

    use crate::robust::{robust_margins, tighten_comfort, unroll_affine};
    use crate::solver::{rides_through, UnitSubproblem};

    pub const PERIODS: usize = 48;
    pub const DT: f64 = 300.0;
    pub const START_CLOCK: f64 = 10.0 * 3600.0;
    pub const OFF_PEAK_PRICE: f64 = 0.6;
    pub const PEAK_PRICE: f64 = 12.0;
    pub const PEAK_PERIODS: Range<usize> = 12..36;
    pub const BETA: f64 = 0.3;
    pub const EPSILON: f64 = 0.3;
    pub const MC_SAMPLES: usize = 10_000;

    /// (clock hour, °C) knots, linearly interpolated.
    const OUTDOOR_KNOTS: [(f64, f64); 4] = [(10.0, 26.0), (11.0, 33.0), (13.0, 35.0), (14.0, 35.0)];

    pub fn horizon() -> Horizon {
        Horizon {
            periods: PERIODS,
            dt: DT,
            start_clock_time: START_CLOCK,
        }
    }

    pub fn outdoor_temperature() -> Vec<f64> {
        (0..PERIODS)
            .map(|t| {
                let hour = (START_CLOCK + t as f64 * DT) / 3600.0;
                let k = OUTDOOR_KNOTS
                    .windows(2)
                    .position(|w| hour <= w[1].0)
                    .unwrap_or(OUTDOOR_KNOTS.len() - 2);
                let (h0, v0) = OUTDOOR_KNOTS[k];
                let (h1, v1) = OUTDOOR_KNOTS[k + 1];
                v0 + (v1 - v0) * (hour - h0) / (h1 - h0)
            })
            .collect()
    }

    pub fn prices() -> PriceSchedule {
        PriceSchedule {
            price: (0..PERIODS)
                .map(|t| if PEAK_PERIODS.contains(&t) { PEAK_PRICE } else { OFF_PEAK_PRICE })
                .collect(),
        }
    }

    pub fn scenario_with_units(units: Vec<AcUnit>, master_seed: u64) -> Scenario {
        Scenario {
            horizon: horizon(),
            forecast: Forecast {
                theta_out_pre: outdoor_temperature(),
                epsilon: EPSILON,
                norm_kind: NormKind::Box,
            },
            prices: prices(),
            beta: BETA,
            mc_samples: MC_SAMPLES,
            master_seed,
            units,
        }
    }

    /// Whether `unit` can be kept robustly inside its band with the AC off
    /// for the whole peak window of `scenario`.
    pub fn can_ride_through(unit: &AcUnit, scenario: &Scenario) -> bool {
        let map = unroll_affine(unit, &scenario.horizon);
        let margins = robust_margins(&map, scenario.forecast.epsilon, scenario.forecast.norm_kind);
        match tighten_comfort(unit, &margins) {
            Ok(bounds) => rides_through(
                &UnitSubproblem::new(unit, scenario, &bounds),
                scenario.prices.peak_window(),
            ),
            Err(_) => false,
        }
    }

    /// A scenario with `count` enrolled units. Candidates are drawn from the
    /// default population in order and kept if they can ride through the
    /// peak; ids are renumbered 1..=count.
    pub fn scenario(count: usize, seed: u64) -> Result<Scenario> {
        let mut probe = scenario_with_units(Vec::new(), seed);
        let mut pool = count.max(1) * 4;
        loop {
            let candidates = generate_population(pool, &PopulationSpec::default(), seed)?;
            let mut units = Vec::with_capacity(count);
            for chunk in candidates.chunks(count.max(64)) {
                let keep: Vec<bool> = chunk.par_iter().map(|u| can_ride_through(u, &probe)).collect();
                units.extend(chunk.iter().zip(keep).filter(|(_, k)| *k).map(|(u, _)| u.clone()));
                if units.len() >= count {
                    break;
                }
            }
            units.truncate(count);
            if units.len() == count {
                for (i, u) in units.iter_mut().enumerate() {
                    u.id = i as u64 + 1;
                }
                probe.units = units;
                return Ok(probe);
            }
            if pool >= count.max(1) * 64 {
                return Err(Error::Config(format!(
                    "only {} of {pool} candidate units can ride through the peak",
                    units.len()
                )));
            }
            pool *= 2;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Scenario {
        bundled::scenario(3, 11).unwrap()
    }

    #[test]
    fn table_ranges_hold_for_large_population() {
        let units = generate_population(1000, &PopulationSpec::default(), 5).unwrap();
        for u in &units {
            assert!((0.001..=0.00772).contains(&u.thermal_resistance));
            assert!((336_140.0..=3_074_600.0).contains(&u.thermal_capacity));
            assert!([24.0, 25.0, 26.0, 27.0, 28.0].contains(&u.theta_set));
            assert_eq!(u.theta_max - u.theta_set, 3.0);
            assert_eq!(u.theta_set - u.theta_min, 3.0);
            u.validate().unwrap();
        }
    }

    #[test]
    fn degenerate_spec_yields_exact_unit() {
        let spec = PopulationSpec {
            thermal_resistance: UniformRange::point(0.005),
            thermal_capacity: UniformRange::point(1.0e6),
            rated_power: UniformRange::point(2000.0),
            eer: UniformRange::point(3.0),
            setpoints: vec![26.0],
            initial_theta: UniformRange::point(26.5),
            ..PopulationSpec::default()
        };
        let units = generate_population(1, &spec, 99).unwrap();
        let expected = AcUnit {
            id: 1,
            rated_power: 2000.0,
            eer: 3.0,
            thermal_resistance: 0.005,
            thermal_capacity: 1.0e6,
            theta_set: 26.0,
            theta_min: 23.0,
            theta_max: 29.0,
            min_up_periods: 2,
            min_down_periods: 2,
            markov: TransitionParams::default(),
            initial_state: OnOff::On,
            initial_dwell_periods: 2,
            initial_theta: 26.5,
        };
        assert_eq!(units, vec![expected]);
    }

    #[test]
    fn generation_is_seeded() {
        let spec = PopulationSpec::default();
        let a = generate_population(20, &spec, 7).unwrap();
        let b = generate_population(20, &spec, 7).unwrap();
        let c = generate_population(20, &spec, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn inverted_range_is_rejected() {
        let spec = PopulationSpec {
            eer: UniformRange::new(4.0, 2.5),
            ..PopulationSpec::default()
        };
        assert!(matches!(generate_population(5, &spec, 1), Err(Error::Config(_))));
        assert!(matches!(generate_population(0, &PopulationSpec::default(), 1), Err(Error::Config(_))));
    }

    #[test]
    fn mean_resistance_matches_uniform_mean() {
        let units = generate_population(100_000, &PopulationSpec::default(), 2024).unwrap();
        let mean = units.iter().map(|u| u.thermal_resistance).sum::<f64>() / units.len() as f64;
        let expected = (0.001 + 0.00772) / 2.0;
        assert!((mean - expected).abs() < 0.01 * expected, "mean {mean}");
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let s = tiny();
        save_scenario(&s, &path).unwrap();
        assert_eq!(load_scenario(&path).unwrap(), s);
    }

    #[test]
    fn invariant_violation_names_unit() {
        let mut s = tiny();
        s.units[1].theta_min = s.units[1].theta_set + 0.5;
        let text = serde_json::to_string(&s).unwrap();
        let err = parse_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("unit 2"), "{err}");
        assert!(err.contains("theta_min"), "{err}");
    }

    #[test]
    fn missing_beta_is_reported() {
        let mut value = serde_json::to_value(tiny()).unwrap();
        value.as_object_mut().unwrap().remove("beta");
        let err = parse_scenario(&value.to_string()).unwrap_err().to_string();
        assert!(err.contains("missing field `beta`"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut value = serde_json::to_value(tiny()).unwrap();
        value.as_object_mut().unwrap().insert("gamma".into(), 1.0.into());
        let err = parse_scenario(&value.to_string()).unwrap_err().to_string();
        assert!(err.contains("unknown field `gamma`"), "{err}");
        let mut value = serde_json::to_value(tiny()).unwrap();
        value["units"][0]["colour"] = "red".into();
        assert!(parse_scenario(&value.to_string()).is_err());
    }

    #[test]
    fn peak_window_is_first_max_block() {
        assert_eq!(bundled::prices().peak_window(), 12..36);
        let p = PriceSchedule {
            price: vec![1.0, 3.0, 3.0, 1.0, 3.0],
        };
        assert_eq!(p.peak_window(), 1..3);
    }

    #[test]
    fn norm_kind_parsing() {
        assert_eq!("box".parse::<NormKind>().unwrap(), NormKind::Box);
        assert_eq!("Ellipsoid".parse::<NormKind>().unwrap(), NormKind::Ellipsoid);
        assert!(matches!("budget".parse::<NormKind>(), Err(Error::Config(_))));
    }

    #[test]
    fn bundled_outdoor_profile_shape() {
        let theta = bundled::outdoor_temperature();
        assert_eq!(theta.len(), 48);
        assert!((theta[0] - 26.0).abs() < 1e-12);
        assert!((theta[12] - 33.0).abs() < 1e-12);
        assert!((theta[24] - 34.0).abs() < 1e-12);
        assert!(theta.windows(2).all(|w| w[1] >= w[0]));
        assert!((theta[47] - 35.0).abs() < 1e-12);
    }

    #[test]
    fn bundled_units_all_ride_through() {
        let s = bundled::scenario(12, 9).unwrap();
        assert_eq!(s.units.len(), 12);
        assert_eq!(s.units.iter().map(|u| u.id).collect::<Vec<_>>(), (1..=12).collect::<Vec<_>>());
        assert!(s.units.iter().all(|u| bundled::can_ride_through(u, &s)));
        s.validate().unwrap();
    }
}
