//! Built-in per-step behaviors and the registry binding them to dts.
//!
//! A behavior is a pure function of its input ports, the ambient scenario
//! channels and its private state. Signals are plain numbers; on/off commands
//! are 0 or 1. Every configurable value lives in [`SimConfig`] with the
//! defaults documented on the type.

use std::collections::BTreeMap;

/// Tuning knobs for the built-in behaviors. None of these are intrinsic to
/// the architecture; they are per-run configuration.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Thermostat half-band: on below `set - d`, off above `set + d`.
    pub hysteresis: f64,
    /// Comfort-temperature offset while absent during the day.
    pub absent_day_delta: f64,
    /// Comfort-temperature offset while absent at night.
    pub absent_night_delta: f64,
    /// Freeze protection overrides to on at or below this temperature.
    pub freeze_threshold: f64,
    /// Fire protection forces a cool-off after this many seconds of
    /// uninterrupted heating.
    pub fire_max_on: f64,
    /// Cool-off duration in seconds.
    pub fire_cooloff: f64,
    /// Cost-saving lookup table: `(price threshold, comfort delta)` with
    /// strictly increasing thresholds and non-increasing deltas `<= 0`.
    pub price_table: Vec<(f64, f64)>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            hysteresis: 0.5,
            absent_day_delta: -2.0,
            absent_night_delta: -4.0,
            freeze_threshold: 8.0,
            fire_max_on: 3600.0,
            fire_cooloff: 600.0,
            price_table: vec![(1.0, -1.0), (2.0, -3.0)],
        }
    }
}

impl SimConfig {
    pub fn check(&self) -> Result<(), String> {
        if self.hysteresis <= 0.0 {
            return Err("hysteresis must be positive".into());
        }
        if !(self.absent_night_delta <= self.absent_day_delta && self.absent_day_delta <= 0.0) {
            return Err("setback deltas must satisfy night <= day <= 0".into());
        }
        if self.fire_max_on <= 0.0 || self.fire_cooloff <= 0.0 {
            return Err("fire protection timers must be positive".into());
        }
        let mut last_threshold = f64::NEG_INFINITY;
        let mut last_delta = f64::INFINITY;
        for (threshold, delta) in &self.price_table {
            if *threshold <= last_threshold {
                return Err("price table thresholds must be strictly increasing".into());
            }
            if *delta > last_delta || *delta > 0.0 {
                return Err("price table deltas must be non-increasing and <= 0".into());
            }
            last_threshold = *threshold;
            last_delta = *delta;
        }
        Ok(())
    }
}

/// Inputs for one behavior step.
pub struct StepContext<'a> {
    pub time: f64,
    pub step: f64,
    /// Input port name -> current value.
    pub ports: &'a BTreeMap<String, f64>,
    /// Ambient scenario channels (e.g. `is_day`).
    pub ambient: &'a BTreeMap<String, f64>,
}

impl StepContext<'_> {
    fn port(&self, name: &str) -> f64 {
        self.ports.get(name).copied().unwrap_or(0.0)
    }

    fn ambient(&self, name: &str) -> f64 {
        self.ambient.get(name).copied().unwrap_or(0.0)
    }
}

pub trait Behavior {
    /// Port names the dt must provide as inputs.
    fn required_inputs(&self) -> &'static [&'static str];
    /// Port names read when present.
    fn optional_inputs(&self) -> &'static [&'static str] {
        &[]
    }
    /// Ambient scenario channels the behavior reads.
    fn required_ambient(&self) -> &'static [&'static str] {
        &[]
    }
    /// Compute the value of the dt's single output port.
    fn step(&mut self, ctx: &StepContext) -> f64;
}

pub type BehaviorFactory = Box<dyn Fn(&SimConfig) -> Box<dyn Behavior>>;

/// Behavior key -> factory. `builtin()` registers every behavior shipped with
/// the toolchain; callers may add their own.
pub struct BehaviorRegistry {
    factories: BTreeMap<String, BehaviorFactory>,
}

impl BehaviorRegistry {
    pub fn empty() -> Self {
        BehaviorRegistry { factories: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut r = BehaviorRegistry::empty();
        r.register("thermostat", |c| {
            Box::new(Thermostat { band: c.hysteresis, on: false })
        });
        r.register("energy_saving", |c| {
            Box::new(EnergySaving { day_delta: c.absent_day_delta, night_delta: c.absent_night_delta })
        });
        r.register("freeze_protection", |c| {
            Box::new(FreezeProtection { threshold: c.freeze_threshold })
        });
        r.register("fire_protection", |c| {
            Box::new(FireProtection {
                max_on: c.fire_max_on,
                cooloff: c.fire_cooloff,
                on_run: 0.0,
                cooling_left: 0.0,
            })
        });
        r.register("cost_saving", |c| {
            Box::new(CostSaving { table: c.price_table.clone() })
        });
        r.register("min", |_| Box::new(ArbiterMin));
        r.register("strictest", |_| Box::new(ArbiterMin));
        r
    }

    pub fn register(
        &mut self,
        key: &str,
        factory: impl Fn(&SimConfig) -> Box<dyn Behavior> + 'static,
    ) {
        self.factories.insert(key.to_string(), Box::new(factory));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.factories.contains_key(key)
    }

    pub fn create(&self, key: &str, config: &SimConfig) -> Option<Box<dyn Behavior>> {
        self.factories.get(key).map(|f| f(config))
    }
}

/// Hysteresis thermostat: on below `comfort - d`, off above `comfort + d`,
/// previous command held inside the band.
pub struct Thermostat {
    band: f64,
    on: bool,
}

impl Thermostat {
    pub fn new(band: f64) -> Self {
        Thermostat { band, on: false }
    }
}

impl Behavior for Thermostat {
    fn required_inputs(&self) -> &'static [&'static str] {
        &["temp", "comfort_temp"]
    }

    fn step(&mut self, ctx: &StepContext) -> f64 {
        let temp = ctx.port("temp");
        let set = ctx.port("comfort_temp");
        if temp < set - self.band {
            self.on = true;
        } else if temp > set + self.band {
            self.on = false;
        }
        bool_signal(self.on)
    }
}

/// Lowers the requested comfort temperature while nobody is around, a little
/// less during the day so re-heating stays quick.
pub struct EnergySaving {
    day_delta: f64,
    night_delta: f64,
}

impl Behavior for EnergySaving {
    fn required_inputs(&self) -> &'static [&'static str] {
        &["user_comfort_temp", "presence"]
    }

    fn required_ambient(&self) -> &'static [&'static str] {
        &["is_day"]
    }

    fn step(&mut self, ctx: &StepContext) -> f64 {
        let user = ctx.port("user_comfort_temp");
        let present = ctx.port("presence") != 0.0;
        if present {
            user
        } else if ctx.ambient("is_day") != 0.0 {
            user + self.day_delta
        } else {
            user + self.night_delta
        }
    }
}

/// Watchdog with priority over the chained command: heat whenever the room
/// is at or below the threshold, otherwise forward the upstream command
/// (off when there is no upstream).
pub struct FreezeProtection {
    threshold: f64,
}

impl Behavior for FreezeProtection {
    fn required_inputs(&self) -> &'static [&'static str] {
        &["temp"]
    }

    fn optional_inputs(&self) -> &'static [&'static str] {
        &["upstream_cmd"]
    }

    fn step(&mut self, ctx: &StepContext) -> f64 {
        if ctx.port("temp") <= self.threshold {
            1.0
        } else {
            ctx.port("upstream_cmd")
        }
    }
}

/// Watchdog cutting heating after a maximum uninterrupted operating period,
/// then blocking it for a cool-off before forwarding again.
pub struct FireProtection {
    max_on: f64,
    cooloff: f64,
    on_run: f64,
    cooling_left: f64,
}

impl FireProtection {
    pub fn new(max_on: f64, cooloff: f64) -> Self {
        FireProtection { max_on, cooloff, on_run: 0.0, cooling_left: 0.0 }
    }
}

impl Behavior for FireProtection {
    fn required_inputs(&self) -> &'static [&'static str] {
        &["upstream_cmd"]
    }

    fn step(&mut self, ctx: &StepContext) -> f64 {
        if self.cooling_left > 0.0 {
            self.cooling_left = (self.cooling_left - ctx.step).max(0.0);
            self.on_run = 0.0;
            return 0.0;
        }
        let upstream_on = ctx.port("upstream_cmd") != 0.0;
        if !upstream_on {
            self.on_run = 0.0;
            return 0.0;
        }
        // Heating through this step must not push the run past the maximum.
        if self.on_run + ctx.step > self.max_on {
            self.cooling_left = (self.cooloff - ctx.step).max(0.0);
            self.on_run = 0.0;
            return 0.0;
        }
        self.on_run += ctx.step;
        1.0
    }
}

/// Price-indexed comfort setback via a lookup table: the delta of the highest
/// threshold at or below the current price, zero below the first threshold.
pub struct CostSaving {
    table: Vec<(f64, f64)>,
}

impl CostSaving {
    pub fn delta_for(table: &[(f64, f64)], price: f64) -> f64 {
        table
            .iter()
            .take_while(|(threshold, _)| *threshold <= price)
            .last()
            .map(|(_, delta)| *delta)
            .unwrap_or(0.0)
    }
}

impl Behavior for CostSaving {
    fn required_inputs(&self) -> &'static [&'static str] {
        &["price", "user_comfort_temp"]
    }

    fn step(&mut self, ctx: &StepContext) -> f64 {
        ctx.port("user_comfort_temp") + Self::delta_for(&self.table, ctx.port("price"))
    }
}

/// Picks the lower of two suggestions. Also serves as the scalar projection
/// of the `strictest` rule: componentwise minimum, one component per port.
pub struct ArbiterMin;

impl Behavior for ArbiterMin {
    fn required_inputs(&self) -> &'static [&'static str] {
        &["a", "b"]
    }

    fn step(&mut self, ctx: &StepContext) -> f64 {
        ctx.port("a").min(ctx.port("b"))
    }
}

pub fn bool_signal(on: bool) -> f64 {
    if on {
        1.0
    } else {
        0.0
    }
}

/// Velocity/acceleration bounds a trajectory must respect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KineticLimits {
    pub max_velocity: f64,
    pub max_acceleration: f64,
}

/// The strictest combination of two limit records: componentwise minimum.
pub fn arbiter_strictest(a: KineticLimits, b: KineticLimits) -> KineticLimits {
    KineticLimits {
        max_velocity: a.max_velocity.min(b.max_velocity),
        max_acceleration: a.max_acceleration.min(b.max_acceleration),
    }
}
