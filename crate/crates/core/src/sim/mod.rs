//! Deterministic discrete-time execution of a model against a lumped thermal
//! plant.
//!
//! [`bind_behaviors`] turns a model plus a behavior registry into an
//! [`ExecutablePlan`]: a topologically ordered dt evaluation schedule with
//! every input port resolved to its signal source. [`run`] executes the plan
//! over a [`Scenario`], propagating signals within each step (every flow's
//! sink sees its source's value from the same step) and advancing the plant
//! with an explicit Euler update of
//!
//! ```text
//! T' = T + step * (heater_power * on - loss_coefficient * (T - outdoor)) / thermal_mass
//! ```
//!
//! The plant feeds boundary ports named `room_temp`; terminal on/off control
//! outputs drive the heater (several such outputs heat while any is on).
//! Identical plans and scenarios produce bit-identical traces.
//!
//! With freeze protection chained in front of the heater at threshold `f`,
//! the room can undershoot `f` by at most one cooling step,
//! `m = step * loss_coefficient * (f - min outdoor) / thermal_mass`,
//! because the override fires at the first sample at or below `f`.

pub mod behaviors;
pub mod scenario;

pub use behaviors::{BehaviorRegistry, SimConfig};
pub use scenario::{PlantParams, Scenario, Timeline};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::constraint::TemporalOp;
use crate::model::{Direction, Model, PortRole};

#[derive(Debug, Clone, thiserror::Error)]
pub enum SimError {
    #[error("dt `{0}` has no behavior key")]
    MissingBehavior(String),
    #[error("dt `{dt}` names unknown behavior `{key}`")]
    UnknownBehaviorKey { dt: String, key: String },
    #[error("dt `{dt}` lacks input port `{input}` required by its behavior")]
    MissingInput { dt: String, input: String },
    #[error("behavior-backed dt `{0}` must have exactly one output port")]
    NotOneOutput(String),
    #[error("port `{0}` has more than one writer; resolve the actuation conflict first")]
    MultipleWriters(String),
    #[error("inter-dt flows form a cycle involving `{0}`")]
    CyclicFlows(String),
    #[error("dt input `{0}` is not fed by any flow")]
    UnfedInput(String),
    #[error("scenario provides no timeline for input `{0}`")]
    MissingTimeline(String),
    #[error("goal `{goal}` references poi `{poi}` with no bound trace channel")]
    UnboundPoi { goal: String, poi: String },
    #[error("bad scenario: {0}")]
    BadScenario(String),
}

/// Where a port's value comes from during a step.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Source {
    /// Qualified dt output port.
    DtOutput(String),
    /// Scenario input, by boundary-port name.
    External(String),
    /// The plant's room temperature.
    PlantTemp,
    /// Nothing feeds the port; it reads as 0.
    Silent,
}

/// A bound, topologically ordered execution schedule.
#[derive(Debug)]
pub struct ExecutablePlan {
    model: Model,
    /// Dt evaluation order.
    order: Vec<String>,
    /// Behavior key per dt.
    behavior_keys: BTreeMap<String, String>,
    /// Every port's resolved signal source (qualified port id -> source).
    port_sources: BTreeMap<String, Source>,
    /// Qualified dt output port per dt.
    dt_output: BTreeMap<String, String>,
    /// Terminal on/off control outputs driving the plant's heater.
    actuator_ports: Vec<String>,
    /// Scenario input names the run requires.
    required_inputs: BTreeSet<String>,
    /// Ambient channel names required by behaviors.
    required_ambient: BTreeSet<String>,
}

impl ExecutablePlan {
    pub fn order(&self) -> &[String] {
        &self.order
    }

    pub fn required_inputs(&self) -> impl Iterator<Item = &str> {
        self.required_inputs.iter().map(String::as_str)
    }
}

/// Resolve every signal path and order the dts; fails on unresolved behavior
/// keys, missing ports, multi-writer ports and cyclic inter-dt flows.
pub fn bind_behaviors(
    model: &Model,
    registry: &BehaviorRegistry,
) -> Result<ExecutablePlan, SimError> {
    let mut model = model.clone();
    model.canonicalize();

    // Incoming flow per port; more than one writer is unresolvable.
    let mut incoming: BTreeMap<String, String> = BTreeMap::new();
    let mut outgoing: BTreeSet<String> = BTreeSet::new();
    for sys in model.root_system.systems() {
        for f in &sys.flows {
            let to = f.to.qualified();
            if incoming.insert(to.clone(), f.from.qualified()).is_some() {
                return Err(SimError::MultipleWriters(to));
            }
            outgoing.insert(f.from.qualified());
        }
    }

    let mut dt_outputs: BTreeMap<String, String> = BTreeMap::new();
    let mut is_dt_port: BTreeSet<String> = BTreeSet::new();
    for dt in model.all_dts() {
        for p in &dt.ports {
            is_dt_port.insert(format!("{}.{}", dt.id, p.name));
        }
        let outputs: Vec<_> = dt.outputs().collect();
        if outputs.len() == 1 {
            dt_outputs.insert(dt.id.clone(), format!("{}.{}", dt.id, outputs[0].name));
        }
    }

    // Chase a port back to its origin through forwarding boundary ports.
    let resolve = |start: &str, start_info: (&str, &crate::model::Port)| -> Source {
        let mut q = start.to_string();
        let mut info = Some(start_info.1.clone());
        let mut name = start_info.1.name.clone();
        loop {
            match incoming.get(&q) {
                Some(from) => {
                    if is_dt_port.contains(from) {
                        return Source::DtOutput(from.clone());
                    }
                    let (owner, port_name) = from.rsplit_once('.').unwrap_or(("", from));
                    name = port_name.to_string();
                    info = model
                        .system(owner)
                        .and_then(|s| s.port(port_name))
                        .cloned();
                    q = from.clone();
                }
                None => {
                    if is_dt_port.contains(&q) {
                        return Source::Silent;
                    }
                    let Some(port) = info else { return Source::Silent };
                    return match (port.direction, name.as_str()) {
                        (Direction::Input, "room_temp") => Source::PlantTemp,
                        (Direction::Input, _) => Source::External(name.clone()),
                        (Direction::Output, _) => Source::Silent,
                    };
                }
            }
        }
    };

    let mut port_sources: BTreeMap<String, Source> = BTreeMap::new();
    let mut actuator_ports: Vec<String> = Vec::new();
    for sys in model.root_system.systems() {
        for p in &sys.ports {
            let q = format!("{}.{}", sys.id, p.name);
            port_sources.insert(q.clone(), resolve(&q, (&sys.id, p)));
            let terminal = !outgoing.contains(&q);
            if p.direction == Direction::Output
                && p.role == PortRole::Control
                && p.signal_unit == "on_off"
                && terminal
            {
                actuator_ports.push(q);
            }
        }
        for dt in &sys.dts {
            for p in &dt.ports {
                let q = format!("{}.{}", dt.id, p.name);
                port_sources.insert(q.clone(), resolve(&q, (&dt.id, p)));
            }
        }
    }

    let default_config = SimConfig::default();
    let mut order_input: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut behavior_keys = BTreeMap::new();
    let mut required_inputs: BTreeSet<String> = BTreeSet::new();
    let mut required_ambient: BTreeSet<String> = BTreeSet::new();
    let mut dt_output = BTreeMap::new();

    for dt in model.all_dts() {
        let key = dt
            .behavior_key
            .clone()
            .ok_or_else(|| SimError::MissingBehavior(dt.id.clone()))?;
        let behavior = registry
            .create(&key, &default_config)
            .ok_or_else(|| SimError::UnknownBehaviorKey { dt: dt.id.clone(), key: key.clone() })?;
        behavior_keys.insert(dt.id.clone(), key);
        let output = dt_outputs
            .get(&dt.id)
            .ok_or_else(|| SimError::NotOneOutput(dt.id.clone()))?;
        if dt.outputs().count() != 1 {
            return Err(SimError::NotOneOutput(dt.id.clone()));
        }
        dt_output.insert(dt.id.clone(), output.clone());

        for input in behavior.required_inputs() {
            if dt.port(input).map(|p| p.direction) != Some(Direction::Input) {
                return Err(SimError::MissingInput {
                    dt: dt.id.clone(),
                    input: (*input).to_string(),
                });
            }
        }
        required_ambient.extend(behavior.required_ambient().iter().map(|s| s.to_string()));

        let mut deps = BTreeSet::new();
        for p in dt.ports.iter().filter(|p| p.direction == Direction::Input) {
            let q = format!("{}.{}", dt.id, p.name);
            match port_sources.get(&q) {
                Some(Source::DtOutput(from)) => {
                    let (owner, _) = from.rsplit_once('.').expect("qualified");
                    deps.insert(owner.to_string());
                }
                Some(Source::External(name)) => {
                    required_inputs.insert(name.clone());
                }
                Some(Source::PlantTemp) => {}
                Some(Source::Silent) | None => {
                    return Err(SimError::UnfedInput(q));
                }
            }
        }
        order_input.insert(dt.id.clone(), deps);
    }

    // External inputs also cover boundary ports feeding nothing but the trace.
    for source in port_sources.values() {
        if let Source::External(name) = source {
            required_inputs.insert(name.clone());
        }
    }

    // Kahn's algorithm, smallest id first for determinism.
    let mut order = Vec::new();
    let mut pending = order_input;
    while !pending.is_empty() {
        let ready: Vec<String> = pending
            .iter()
            .filter(|(_, deps)| deps.iter().all(|d| order.contains(d) || !pending.contains_key(d)))
            .map(|(id, _)| id.clone())
            .collect();
        let Some(next) = ready.into_iter().next() else {
            let stuck = pending.keys().next().cloned().unwrap_or_default();
            return Err(SimError::CyclicFlows(stuck));
        };
        pending.remove(&next);
        order.push(next);
    }

    Ok(ExecutablePlan {
        model,
        order,
        behavior_keys,
        port_sources,
        dt_output,
        actuator_ports,
        required_inputs,
        required_ambient,
    })
}

/// Time-indexed record of every port signal plus the derived channels
/// `energy_used` (joules, cumulative) and `heater_on_time` (seconds,
/// cumulative), and any ambient channels the behaviors consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub step: f64,
    pub times: Vec<f64>,
    pub channels: BTreeMap<String, Vec<f64>>,
}

impl Trace {
    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.get(name).map(Vec::as_slice)
    }

    pub fn channel_min(&self, name: &str) -> Option<f64> {
        self.channel(name).map(|v| v.iter().copied().fold(f64::INFINITY, f64::min))
    }

    pub fn last(&self, name: &str) -> Option<f64> {
        self.channel(name).and_then(|v| v.last().copied())
    }

    /// CSV with a `time` column followed by all channels in sorted order.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("time");
        for name in self.channels.keys() {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            write!(out, "{t}").unwrap();
            for values in self.channels.values() {
                write!(out, ",{}", values[i]).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Execute the plan over the scenario. The trace covers `duration/step + 1`
/// samples; the run is fully deterministic.
pub fn run(
    plan: &ExecutablePlan,
    scenario: &Scenario,
    registry: &BehaviorRegistry,
) -> Result<Trace, SimError> {
    scenario.check().map_err(SimError::BadScenario)?;
    for name in plan.required_inputs.iter().chain(plan.required_ambient.iter()) {
        if !scenario.inputs.contains_key(name) {
            return Err(SimError::MissingTimeline(name.clone()));
        }
    }

    let mut behaviors: BTreeMap<String, Box<dyn behaviors::Behavior>> = BTreeMap::new();
    for (dt, key) in &plan.behavior_keys {
        let b = registry
            .create(key, &scenario.config)
            .ok_or_else(|| SimError::UnknownBehaviorKey { dt: dt.clone(), key: key.clone() })?;
        behaviors.insert(dt.clone(), b);
    }

    let samples = (scenario.duration / scenario.step).floor() as usize + 1;
    let mut channels: BTreeMap<String, Vec<f64>> = plan
        .port_sources
        .keys()
        .map(|q| (q.clone(), Vec::with_capacity(samples)))
        .collect();
    for name in &plan.required_ambient {
        channels.entry(name.clone()).or_insert_with(|| Vec::with_capacity(samples));
    }
    channels.insert("energy_used".into(), Vec::with_capacity(samples));
    channels.insert("heater_on_time".into(), Vec::with_capacity(samples));

    let mut times = Vec::with_capacity(samples);
    let mut temp = scenario.plant.initial_temp;
    let mut energy_used = 0.0;
    let mut heater_on_time = 0.0;

    for k in 0..samples {
        let t = k as f64 * scenario.step;
        times.push(t);
        let ambient: BTreeMap<String, f64> =
            scenario.inputs.iter().map(|(name, tl)| (name.clone(), tl.at(t))).collect();

        // Evaluate dts in dependency order; within one step every sink sees
        // its source's value from this same step.
        let mut outputs: BTreeMap<String, f64> = BTreeMap::new();
        let value_of = |source: &Source, outputs: &BTreeMap<String, f64>| -> f64 {
            match source {
                Source::DtOutput(q) => outputs.get(q).copied().unwrap_or(0.0),
                Source::External(name) => ambient.get(name).copied().unwrap_or(0.0),
                Source::PlantTemp => temp,
                Source::Silent => 0.0,
            }
        };
        for dt_id in &plan.order {
            let dt = plan.model.dt(dt_id).expect("dt exists");
            let mut ports: BTreeMap<String, f64> = BTreeMap::new();
            for p in dt.ports.iter().filter(|p| p.direction == Direction::Input) {
                let q = format!("{}.{}", dt.id, p.name);
                let source = plan.port_sources.get(&q).expect("resolved");
                ports.insert(p.name.clone(), value_of(source, &outputs));
            }
            let ctx = behaviors::StepContext {
                time: t,
                step: scenario.step,
                ports: &ports,
                ambient: &ambient,
            };
            let out = behaviors.get_mut(dt_id).expect("behavior bound").step(&ctx);
            outputs.insert(plan.dt_output[dt_id].clone(), out);
        }

        for (q, source) in &plan.port_sources {
            let value = if let Some(v) = outputs.get(q) { *v } else { value_of(source, &outputs) };
            channels.get_mut(q).expect("channel").push(value);
        }
        for name in &plan.required_ambient {
            let v = ambient.get(name).copied().unwrap_or(0.0);
            channels.get_mut(name).expect("channel").push(v);
        }
        channels.get_mut("energy_used").expect("channel").push(energy_used);
        channels.get_mut("heater_on_time").expect("channel").push(heater_on_time);

        let heater_on = plan
            .actuator_ports
            .iter()
            .any(|q| outputs.get(q).copied().or_else(|| {
                plan.port_sources.get(q).map(|s| value_of(s, &outputs))
            }) != Some(0.0));
        if k + 1 < samples {
            let outdoor = scenario.plant.outdoor_temp.at(t);
            temp = scenario.plant.advance(temp, heater_on, outdoor, scenario.step);
            if heater_on {
                energy_used += scenario.plant.heater_power * scenario.step;
                heater_on_time += scenario.step;
            }
        }
    }

    Ok(Trace { step: scenario.step, times, channels })
}

/// Per-goal verdict with the violating time intervals.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GoalVerdict {
    pub goal: String,
    pub title: String,
    pub satisfied: bool,
    /// Closed intervals `[start, end]` of violating samples, in seconds.
    pub violations: Vec<(f64, f64)>,
    pub violated_samples: usize,
}

#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct GoalReport {
    pub verdicts: Vec<GoalVerdict>,
}

impl GoalReport {
    pub fn all_satisfied(&self) -> bool {
        self.verdicts.iter().all(|v| v.satisfied)
    }

    pub fn verdict(&self, goal: &str) -> Option<&GoalVerdict> {
        self.verdicts.iter().find(|v| v.goal == goal)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.verdicts {
            if v.satisfied {
                writeln!(out, "goal {} ({}): satisfied", v.goal, v.title).unwrap();
            } else {
                let spans: Vec<String> = v
                    .violations
                    .iter()
                    .map(|(a, b)| format!("[{a}s, {b}s]"))
                    .collect();
                writeln!(
                    out,
                    "goal {} ({}): violated over {} samples at {}",
                    v.goal,
                    v.title,
                    v.violated_samples,
                    spans.join(", ")
                )
                .unwrap();
            }
        }
        out
    }

    pub fn to_records(&self) -> String {
        let mut out = String::new();
        for v in &self.verdicts {
            out.push_str(&serde_json::to_string(v).expect("verdict serializes"));
            out.push('\n');
        }
        out
    }
}

/// Evaluate every goal constraint over the trace. PoIs resolve through the
/// explicit bindings (`Goal.poi` or bare poi name -> channel), then fall back
/// to a channel of the same name, a root boundary port of the same name, or
/// a uniquely named port anywhere in the model.
pub fn evaluate_goals(
    model: &Model,
    trace: &Trace,
    bindings: &BTreeMap<String, String>,
) -> Result<GoalReport, SimError> {
    let mut report = GoalReport::default();
    for goal in &model.goals {
        let Some(constraint) = &goal.constraint else {
            report.verdicts.push(GoalVerdict {
                goal: goal.id.clone(),
                title: goal.title.clone(),
                satisfied: true,
                violations: Vec::new(),
                violated_samples: 0,
            });
            continue;
        };
        let mut resolved: BTreeMap<String, &[f64]> = BTreeMap::new();
        for poi in constraint.referenced_pois() {
            let channel = resolve_poi_channel(model, trace, bindings, &goal.id, &poi)
                .ok_or_else(|| SimError::UnboundPoi { goal: goal.id.clone(), poi: poi.clone() })?;
            resolved.insert(poi, channel);
        }

        let holds_at = |i: usize| -> bool {
            constraint.holds_at(&|name| resolved.get(name).map(|c| c[i]).unwrap_or(0.0))
        };
        let mut violating: Vec<usize> = Vec::new();
        match constraint.op {
            TemporalOp::Always => {
                for i in 0..trace.times.len() {
                    if !holds_at(i) {
                        violating.push(i);
                    }
                }
            }
            TemporalOp::AtEnd => {
                if let Some(last) = trace.times.len().checked_sub(1) {
                    if !holds_at(last) {
                        violating.push(last);
                    }
                }
            }
        }

        let mut violations: Vec<(f64, f64)> = Vec::new();
        for &i in &violating {
            let t = trace.times[i];
            match violations.last_mut() {
                Some((_, end)) if (*end - (t - trace.step)).abs() < 1e-9 => *end = t,
                _ => violations.push((t, t)),
            }
        }
        report.verdicts.push(GoalVerdict {
            goal: goal.id.clone(),
            title: goal.title.clone(),
            satisfied: violations.is_empty(),
            violated_samples: violating.len(),
            violations,
        });
    }
    Ok(report)
}

fn resolve_poi_channel<'t>(
    model: &Model,
    trace: &'t Trace,
    bindings: &BTreeMap<String, String>,
    goal: &str,
    poi: &str,
) -> Option<&'t [f64]> {
    let explicit = bindings
        .get(&format!("{goal}.{poi}"))
        .or_else(|| bindings.get(poi));
    if let Some(channel) = explicit {
        return trace.channel(channel);
    }
    if let Some(c) = trace.channel(poi) {
        return Some(c);
    }
    let root = &model.root_system;
    if root.port(poi).is_some() {
        if let Some(c) = trace.channel(&format!("{}.{poi}", root.id)) {
            return Some(c);
        }
    }
    let mut matches: Vec<String> = Vec::new();
    for sys in model.root_system.systems() {
        if sys.port(poi).is_some() {
            matches.push(format!("{}.{poi}", sys.id));
        }
        for dt in &sys.dts {
            if dt.port(poi).is_some() {
                matches.push(format!("{}.{poi}", dt.id));
            }
        }
    }
    match matches.as_slice() {
        [only] => trace.channel(only),
        _ => None,
    }
}
