//! Scenario files: plant parameters, behavior configuration and timed input
//! signals for a simulation run.
//!
//! Line-oriented key/value format, `//` comments:
//!
//! ```text
//! duration 86400
//! step 60
//! plant initial_temp 20
//! plant thermal_mass 2000000
//! plant loss_coefficient 100
//! plant heater_power 5000
//! plant outdoor_temp: 0=-10, 43200=-5
//! input comfort_temp: 0=21
//! input presence: 0=false, 28800=true, 72000=false
//! config hysteresis 0.5
//! bind WarmComfort.room_temp Thermostat.room_temp
//! ```
//!
//! Timelines are piecewise constant, must start at time 0 and use `true` /
//! `false` or numbers as values.

use std::collections::BTreeMap;

use super::behaviors::SimConfig;

/// Piecewise-constant signal over time, defined from 0 onward.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    points: Vec<(f64, f64)>,
}

impl Timeline {
    pub fn constant(value: f64) -> Self {
        Timeline { points: vec![(0.0, value)] }
    }

    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, String> {
        if points.first().map(|(t, _)| *t) != Some(0.0) {
            return Err("timeline must start at time 0".into());
        }
        let mut last = f64::NEG_INFINITY;
        for (t, v) in &points {
            if *t <= last {
                return Err("timeline times must be strictly increasing".into());
            }
            if !v.is_finite() {
                return Err("timeline values must be finite".into());
            }
            last = *t;
        }
        Ok(Timeline { points })
    }

    pub fn at(&self, time: f64) -> f64 {
        let mut value = self.points[0].1;
        for (t, v) in &self.points {
            if *t <= time {
                value = *v;
            } else {
                break;
            }
        }
        value
    }

    pub fn min_value(&self) -> f64 {
        self.points.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min)
    }
}

/// First-order lumped thermal plant: one room temperature, one heater.
#[derive(Debug, Clone)]
pub struct PlantParams {
    pub initial_temp: f64,
    /// Heat capacity in joules per kelvin; must be positive.
    pub thermal_mass: f64,
    /// Loss toward outdoors in watts per kelvin; non-negative.
    pub loss_coefficient: f64,
    /// Heater output in watts while on; non-negative.
    pub heater_power: f64,
    pub outdoor_temp: Timeline,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            initial_temp: 20.0,
            thermal_mass: 2_000_000.0,
            loss_coefficient: 100.0,
            heater_power: 5000.0,
            outdoor_temp: Timeline::constant(0.0),
        }
    }
}

impl PlantParams {
    pub fn check(&self) -> Result<(), String> {
        if self.thermal_mass <= 0.0 {
            return Err("thermal_mass must be positive".into());
        }
        if self.loss_coefficient < 0.0 || self.heater_power < 0.0 {
            return Err("loss_coefficient and heater_power must be non-negative".into());
        }
        Ok(())
    }

    /// One explicit-Euler step of `T' = (P*on - U*(T - outdoor)) / C`.
    pub fn advance(&self, temp: f64, heater_on: bool, outdoor: f64, step: f64) -> f64 {
        let heat = if heater_on { self.heater_power } else { 0.0 };
        temp + step * (heat - self.loss_coefficient * (temp - outdoor)) / self.thermal_mass
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub duration: f64,
    pub step: f64,
    /// Boundary-port and ambient-channel timelines, keyed by name.
    pub inputs: BTreeMap<String, Timeline>,
    pub plant: PlantParams,
    pub config: SimConfig,
    /// Explicit PoI bindings: `Goal.poi` or bare poi name -> trace channel.
    pub poi_bindings: BTreeMap<String, String>,
}

impl Scenario {
    pub fn new(duration: f64, step: f64) -> Self {
        Scenario {
            duration,
            step,
            inputs: BTreeMap::new(),
            plant: PlantParams::default(),
            config: SimConfig::default(),
            poi_bindings: BTreeMap::new(),
        }
    }

    pub fn with_input(mut self, name: &str, timeline: Timeline) -> Self {
        self.inputs.insert(name.to_string(), timeline);
        self
    }

    pub fn check(&self) -> Result<(), String> {
        if self.step <= 0.0 {
            return Err("step must be positive".into());
        }
        if self.duration < 0.0 {
            return Err("duration must be non-negative".into());
        }
        self.plant.check()?;
        self.config.check()
    }

    pub fn parse(text: &str) -> Result<Scenario, String> {
        let mut scenario = Scenario::new(0.0, 60.0);
        let mut saw_duration = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split("//").next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| format!("line {}: {msg}", n + 1);
            let (head, rest) = line.split_once(char::is_whitespace).ok_or_else(|| {
                err("expected `<keyword> ...`")
            })?;
            let rest = rest.trim();
            match head {
                "duration" => {
                    scenario.duration = parse_number(rest).map_err(|m| err(&m))?;
                    saw_duration = true;
                }
                "step" => scenario.step = parse_number(rest).map_err(|m| err(&m))?,
                "plant" => {
                    let (key, value) = split_kv(rest).map_err(|m| err(&m))?;
                    match key.trim_end_matches(':') {
                        "initial_temp" => {
                            scenario.plant.initial_temp = parse_number(value).map_err(|m| err(&m))?
                        }
                        "thermal_mass" => {
                            scenario.plant.thermal_mass = parse_number(value).map_err(|m| err(&m))?
                        }
                        "loss_coefficient" => {
                            scenario.plant.loss_coefficient =
                                parse_number(value).map_err(|m| err(&m))?
                        }
                        "heater_power" => {
                            scenario.plant.heater_power = parse_number(value).map_err(|m| err(&m))?
                        }
                        "outdoor_temp" => {
                            scenario.plant.outdoor_temp =
                                parse_timeline(value).map_err(|m| err(&m))?
                        }
                        other => return Err(err(&format!("unknown plant parameter `{other}`"))),
                    }
                }
                "input" => {
                    let (name, value) = split_kv(rest).map_err(|m| err(&m))?;
                    let name = name.trim_end_matches(':');
                    let timeline = parse_timeline(value).map_err(|m| err(&m))?;
                    scenario.inputs.insert(name.to_string(), timeline);
                }
                "config" => {
                    let (key, value) = split_kv(rest).map_err(|m| err(&m))?;
                    let c = &mut scenario.config;
                    match key.trim_end_matches(':') {
                        "hysteresis" => c.hysteresis = parse_number(value).map_err(|m| err(&m))?,
                        "absent_day_delta" => {
                            c.absent_day_delta = parse_number(value).map_err(|m| err(&m))?
                        }
                        "absent_night_delta" => {
                            c.absent_night_delta = parse_number(value).map_err(|m| err(&m))?
                        }
                        "freeze_threshold" => {
                            c.freeze_threshold = parse_number(value).map_err(|m| err(&m))?
                        }
                        "fire_max_on" => c.fire_max_on = parse_number(value).map_err(|m| err(&m))?,
                        "fire_cooloff" => {
                            c.fire_cooloff = parse_number(value).map_err(|m| err(&m))?
                        }
                        "price_table" => {
                            c.price_table = parse_price_table(value).map_err(|m| err(&m))?
                        }
                        other => return Err(err(&format!("unknown config key `{other}`"))),
                    }
                }
                "bind" => {
                    let (poi, channel) = split_kv(rest).map_err(|m| err(&m))?;
                    scenario.poi_bindings.insert(poi.to_string(), channel.to_string());
                }
                other => return Err(err(&format!("unknown keyword `{other}`"))),
            }
        }
        if !saw_duration {
            return Err("scenario must declare a duration".into());
        }
        scenario.check()?;
        Ok(scenario)
    }
}

fn split_kv(rest: &str) -> Result<(&str, &str), String> {
    rest.split_once(char::is_whitespace)
        .map(|(k, v)| (k, v.trim()))
        .ok_or_else(|| "expected `<key> <value>`".to_string())
}

fn parse_number(s: &str) -> Result<f64, String> {
    match s.trim() {
        "true" => Ok(1.0),
        "false" => Ok(0.0),
        v => v.parse::<f64>().map_err(|_| format!("bad number `{v}`")),
    }
}

fn parse_timeline(s: &str) -> Result<Timeline, String> {
    let mut points = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        let (t, v) = part
            .split_once('=')
            .ok_or_else(|| format!("bad timeline entry `{part}`, expected `time=value`"))?;
        points.push((parse_number(t)?, parse_number(v)?));
    }
    Timeline::new(points)
}

fn parse_price_table(s: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut table = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        let (threshold, delta) = part
            .split_once(':')
            .ok_or_else(|| format!("bad price entry `{part}`, expected `threshold:delta`"))?;
        table.push((parse_number(threshold)?, parse_number(delta)?));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_scenario() {
        let text = "
// a day with absence
duration 86400
step 60
plant initial_temp 21
plant outdoor_temp: 0=-10, 43200=-5
input comfort_temp: 0=21
input presence: 0=false, 28800=true, 72000=false
config absent_day_delta -2
bind WarmComfort.room_temp Thermostat.room_temp
";
        let s = Scenario::parse(text).unwrap();
        assert_eq!(s.duration, 86400.0);
        assert_eq!(s.plant.outdoor_temp.at(0.0), -10.0);
        assert_eq!(s.plant.outdoor_temp.at(50000.0), -5.0);
        assert_eq!(s.inputs["presence"].at(30000.0), 1.0);
        assert_eq!(s.inputs["presence"].at(80000.0), 0.0);
        assert_eq!(s.poi_bindings["WarmComfort.room_temp"], "Thermostat.room_temp");
    }

    #[test]
    fn timeline_samples_piecewise_constant() {
        let t = Timeline::new(vec![(0.0, 1.0), (10.0, 2.0)]).unwrap();
        assert_eq!(t.at(0.0), 1.0);
        assert_eq!(t.at(9.9), 1.0);
        assert_eq!(t.at(10.0), 2.0);
        assert_eq!(t.at(1e9), 2.0);
    }

    #[test]
    fn rejects_timeline_not_starting_at_zero() {
        assert!(Timeline::new(vec![(5.0, 1.0)]).is_err());
        assert!(Scenario::parse("duration 10\ninput a: 5=1").is_err());
    }

    #[test]
    fn rejects_nonpositive_step_and_bad_plant() {
        assert!(Scenario::parse("duration 10\nstep 0").is_err());
        assert!(Scenario::parse("duration 10\nplant thermal_mass -1").is_err());
    }
}
