//! Simulation behavior against independent oracles: closed-form plant decay,
//! plan ordering, goal verdicts, architecture-level safety and energy
//! contrasts.

mod common;

use std::collections::BTreeMap;

use common::*;
use dartwin_core::sim::{
    bind_behaviors, evaluate_goals, run, BehaviorRegistry, Scenario, Timeline, Trace,
};
use dartwin_core::Model;

fn load_scenario(name: &str) -> Scenario {
    let path = scenario_dir().join(format!("{name}.scn"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("read {path:?}: {e}"));
    Scenario::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn simulate(model: &Model, scenario: &Scenario) -> Trace {
    let registry = BehaviorRegistry::builtin();
    let plan = bind_behaviors(model, &registry).expect("model binds");
    run(&plan, scenario, &registry).expect("run succeeds")
}

#[test]
fn chained_freeze_plan_orders_the_pipeline() {
    let plan = bind_behaviors(&load("chained_freeze"), &BehaviorRegistry::builtin()).unwrap();
    assert_eq!(plan.order(), ["EnergySaving", "ThermostatLogic", "FreezeProtection"]);
}

#[test]
fn compromise_plan_places_the_arbiter_between_suggesters_and_thermostat() {
    let plan = bind_behaviors(&load("compromise_saving"), &BehaviorRegistry::builtin()).unwrap();
    let pos = |id: &str| plan.order().iter().position(|d| d == id).unwrap();
    assert!(pos("Arbiter") > pos("EnergySaving"));
    assert!(pos("Arbiter") > pos("CostSaving"));
    assert!(pos("Arbiter") < pos("ThermostatLogic"));
}

#[test]
fn binding_fails_without_behavior_keys() {
    let err = bind_behaviors(&load("gantry_initial"), &BehaviorRegistry::builtin()).unwrap_err();
    assert!(err.to_string().contains("Trajectory"), "error should name the dt: {err}");
}

#[test]
fn binding_fails_on_unresolved_actuation_conflicts() {
    let err = bind_behaviors(&load("orthogonal_freeze"), &BehaviorRegistry::builtin()).unwrap_err();
    assert!(err.to_string().contains("more than one writer"), "got: {err}");
}

#[test]
fn binding_fails_on_cyclic_inter_dt_flows() {
    let cyclic = r#"
dartwin "Loop" {
  goal G { poi t: celsius }
  system "S" {
    in src: celsius [user]
    dt A {
      in a: celsius [inter_dt]
      in b: celsius [inter_dt]
      out y: celsius [inter_dt]
      behavior "min"
      satisfies G
    }
    dt B {
      in a: celsius [inter_dt]
      in b: celsius [inter_dt]
      out y: celsius [inter_dt]
      behavior "min"
      satisfies G
    }
    flow boundary.src -> A.a
    flow boundary.src -> B.a
    flow A.y -> B.b
    flow B.y -> A.b
  }
}
"#;
    let model = dartwin_core::parse_model(cyclic).unwrap();
    let err = bind_behaviors(&model, &BehaviorRegistry::builtin()).unwrap_err();
    assert!(err.to_string().contains("cycle"), "got: {err}");
}

#[test]
fn zero_duration_run_yields_one_sample() {
    let model = load("thermal_comfort");
    let scenario = Scenario::new(0.0, 60.0)
        .with_input("comfort_temp", Timeline::constant(21.0));
    let trace = simulate(&model, &scenario);
    assert_eq!(trace.times, vec![0.0]);
    assert_eq!(trace.channel("Thermostat.room_temp").unwrap(), &[20.0]);
    assert_eq!(trace.channel("energy_used").unwrap(), &[0.0]);
}

#[test]
fn heater_off_decay_matches_the_closed_form() {
    // Setpoint far below the room keeps the thermostat off; the plant then
    // follows T_k - out = (T0 - out) * (1 - step*U/C)^k exactly.
    let model = load("thermal_comfort");
    let mut scenario = Scenario::new(86400.0, 60.0)
        .with_input("comfort_temp", Timeline::constant(-100.0));
    scenario.plant.outdoor_temp = Timeline::constant(-10.0);
    scenario.plant.initial_temp = 20.0;
    let trace = simulate(&model, &scenario);
    let room = trace.channel("Thermostat.room_temp").unwrap();

    let out = -10.0;
    let ratio = 1.0 - scenario.step * scenario.plant.loss_coefficient / scenario.plant.thermal_mass;
    for (k, temp) in room.iter().enumerate() {
        let closed = (20.0 - out) * ratio.powi(k as i32);
        let rel = ((temp - out) - closed).abs() / closed;
        assert!(rel <= 1e-9, "step {k}: relative error {rel}");
    }
    assert_eq!(trace.last("energy_used"), Some(0.0));
}

#[test]
fn heater_off_temperature_decreases_toward_outdoor() {
    let model = load("thermal_comfort");
    let mut scenario = Scenario::new(21600.0, 60.0)
        .with_input("comfort_temp", Timeline::constant(-100.0));
    scenario.plant.outdoor_temp = Timeline::constant(-10.0);
    let trace = simulate(&model, &scenario);
    let room = trace.channel("Thermostat.room_temp").unwrap();
    for pair in room.windows(2) {
        assert!(pair[1] < pair[0], "temperature must decrease strictly");
        assert!(pair[1] > -10.0, "never below outdoor");
    }
}

#[test]
fn heater_forced_on_temperature_increases() {
    let model = load("thermal_comfort");
    let scenario = Scenario::new(21600.0, 60.0)
        .with_input("comfort_temp", Timeline::constant(100.0));
    let trace = simulate(&model, &scenario);
    let room = trace.channel("Thermostat.room_temp").unwrap();
    for pair in room.windows(2) {
        assert!(pair[1] > pair[0], "with 5 kW against small losses the room heats strictly");
    }
}

#[test]
fn identical_runs_produce_bit_identical_traces() {
    let model = load("chained_freeze");
    let scenario = load_scenario("hacker");
    let a = simulate(&model, &scenario);
    let b = simulate(&model, &scenario);
    assert_eq!(a, b);
}

#[test]
fn signals_propagate_within_each_step() {
    let model = load("chained_freeze");
    let trace = simulate(&model, &load_scenario("hacker"));
    for sys in model.root_system.systems() {
        for f in &sys.flows {
            let from = trace.channel(&f.from.qualified()).expect("source channel");
            let to = trace.channel(&f.to.qualified()).expect("sink channel");
            assert_eq!(from, to, "flow {} must carry equal values", f.id());
        }
    }
}

#[test]
fn hacker_scenario_contrast_between_basic_and_chained() {
    let scenario = load_scenario("hacker");

    let unprotected = simulate(&load("thermal_comfort"), &scenario);
    let min_basic = unprotected.channel_min("Thermostat.room_temp").unwrap();
    assert!(min_basic < 8.0, "unprotected room freezes: min {min_basic}");

    let protected_run = simulate(&load("chained_freeze"), &scenario);
    let min_chained = protected_run
        .channel_min("Freeze_Protected_Thermostat.room_temp")
        .unwrap();
    // One cooling step below the threshold is the documented bound.
    let m = scenario.step * scenario.plant.loss_coefficient
        * (8.0 - scenario.plant.outdoor_temp.min_value())
        / scenario.plant.thermal_mass;
    assert!(m < 0.1, "bound m = {m} should be tight at defaults");
    assert!(min_chained >= 8.0 - m, "min {min_chained} under bound {}", 8.0 - m);
}

#[test]
fn hacker_goal_verdicts_split_the_architectures() {
    let scenario = load_scenario("hacker");

    let basic = load("thermal_comfort");
    let report =
        evaluate_goals(&basic, &simulate(&basic, &scenario), &scenario.poi_bindings).unwrap();
    let warm = report.verdict("WarmComfort").unwrap();
    assert!(!warm.satisfied, "a -5 °C setpoint cannot give warm comfort");
    assert!(!warm.violations.is_empty());

    let chained = load("chained_freeze");
    let report =
        evaluate_goals(&chained, &simulate(&chained, &scenario), &scenario.poi_bindings).unwrap();
    assert!(report.verdict("NoFreezing").unwrap().satisfied);
    assert!(report.all_satisfied(), "{}", report.to_text());
}

#[test]
fn energy_saving_uses_strictly_less_energy() {
    let scenario = load_scenario("absence_day");
    let basic = simulate(&load("thermal_comfort"), &scenario);
    let saving = simulate(&load("flat_green_comfort"), &scenario);
    let e_basic = basic.last("energy_used").unwrap();
    let e_saving = saving.last("energy_used").unwrap();
    assert!(
        e_saving < e_basic,
        "setbacks must save energy: {e_saving} vs {e_basic}"
    );
}

#[test]
fn nested_and_flat_energy_saving_behave_identically() {
    let scenario = load_scenario("absence_day");
    let nested = simulate(&load("green_comfort"), &scenario);
    let flat = simulate(&load("flat_green_comfort"), &scenario);
    assert_eq!(
        nested.channel("Thermostat.room_temp").unwrap(),
        flat.channel("Energy_Saving_Thermostat.room_temp").unwrap(),
        "the two architectures are semantically equivalent"
    );
    assert_eq!(nested.last("energy_used"), flat.last("energy_used"));
}

#[test]
fn arbiter_delivers_the_pointwise_minimum() {
    let model = load("compromise_saving");
    let mut scenario = load_scenario("absence_day");
    // Price above the second threshold for part of the day.
    scenario.inputs.insert(
        "price".to_string(),
        Timeline::new(vec![(0.0, 0.5), (21600.0, 2.5), (64800.0, 1.2)]).unwrap(),
    );
    let trace = simulate(&model, &scenario);
    let a = trace.channel("EnergySaving.comfort_temp_cmd").unwrap();
    let b = trace.channel("CostSaving.comfort_temp_cmd").unwrap();
    let delivered = trace.channel("ThermostatLogic.comfort_temp").unwrap();
    for i in 0..delivered.len() {
        assert_eq!(delivered[i], a[i].min(b[i]), "sample {i}");
        assert!(delivered[i] <= a[i] && delivered[i] <= b[i]);
    }
}

#[test]
fn missing_scenario_timeline_is_reported() {
    let model = load("chained_freeze");
    let registry = BehaviorRegistry::builtin();
    let plan = bind_behaviors(&model, &registry).unwrap();
    let scenario = Scenario::new(600.0, 60.0).with_input("comfort_temp", Timeline::constant(21.0));
    let err = run(&plan, &scenario, &registry).unwrap_err();
    assert!(err.to_string().contains("no timeline"), "got: {err}");
}

fn synthetic_trace(channels: &[(&str, Vec<f64>)], step: f64) -> Trace {
    let n = channels[0].1.len();
    Trace {
        step,
        times: (0..n).map(|k| k as f64 * step).collect(),
        channels: channels
            .iter()
            .map(|(name, values)| (name.to_string(), values.clone()))
            .collect(),
    }
}

#[test]
fn always_constraint_reports_the_dip_interval() {
    let model = load("chained_freeze");
    let trace = synthetic_trace(
        &[("room", vec![10.0, 9.0, 6.0, 6.5, 9.0, 10.0]), ("comfort", vec![21.0; 6])],
        60.0,
    );
    let bindings = BTreeMap::from([
        ("NoFreezing.room_temp".to_string(), "room".to_string()),
        ("WarmComfort.room_temp".to_string(), "room".to_string()),
        ("WarmComfort.comfort_temp".to_string(), "comfort".to_string()),
    ]);
    let report = evaluate_goals(&model, &trace, &bindings).unwrap();
    let freezing = report.verdict("NoFreezing").unwrap();
    assert!(!freezing.satisfied);
    assert_eq!(freezing.violations, vec![(120.0, 180.0)]);
    assert_eq!(freezing.violated_samples, 2);
}

#[test]
fn goals_on_a_clean_trace_are_satisfied() {
    let model = load("chained_freeze");
    let trace = synthetic_trace(
        &[("room", vec![21.0, 20.5, 21.2]), ("comfort", vec![21.0; 3])],
        60.0,
    );
    let bindings = BTreeMap::from([
        ("NoFreezing.room_temp".to_string(), "room".to_string()),
        ("WarmComfort.room_temp".to_string(), "room".to_string()),
        ("WarmComfort.comfort_temp".to_string(), "comfort".to_string()),
    ]);
    let report = evaluate_goals(&model, &trace, &bindings).unwrap();
    assert!(report.all_satisfied());
}

#[test]
fn gantry_no_swing_is_checked_at_the_end_of_synthetic_traces() {
    let model = load("gantry_initial");
    let wobbling = synthetic_trace(
        &[("swing_angle", vec![0.2, 0.1, 0.05]), ("angular_velocity", vec![0.1, 0.05, 0.02])],
        1.0,
    );
    let bindings = BTreeMap::new();
    let report = evaluate_goals(&model, &wobbling, &bindings).unwrap();
    assert!(!report.verdict("NoSwing").unwrap().satisfied);

    let settled = synthetic_trace(
        &[("swing_angle", vec![0.2, 0.1, 0.0]), ("angular_velocity", vec![0.1, 0.05, 0.0])],
        1.0,
    );
    let report = evaluate_goals(&model, &settled, &bindings).unwrap();
    assert!(report.verdict("NoSwing").unwrap().satisfied);
}

#[test]
fn unbound_poi_is_an_error() {
    let model = load("chained_freeze");
    let trace = synthetic_trace(&[("unrelated", vec![1.0])], 60.0);
    let err = evaluate_goals(&model, &trace, &BTreeMap::new()).unwrap_err();
    assert!(err.to_string().contains("no bound trace channel"), "got: {err}");
}

#[test]
fn freeze_protection_keeps_the_room_above_bound_for_varied_weather() {
    // The safety envelope holds for any outdoor profile the heater can beat.
    let model = load("chained_freeze");
    for (label, outdoor) in [
        ("steady cold", Timeline::constant(-15.0)),
        ("cold snap", Timeline::new(vec![(0.0, 0.0), (21600.0, -20.0), (64800.0, -5.0)]).unwrap()),
        ("mild", Timeline::constant(5.0)),
    ] {
        let mut scenario = load_scenario("hacker");
        scenario.plant.outdoor_temp = outdoor;
        let threshold = 8.0;
        let m = scenario.step * scenario.plant.loss_coefficient
            * (threshold - scenario.plant.outdoor_temp.min_value())
            / scenario.plant.thermal_mass;
        let trace = simulate(&model, &scenario);
        let min = trace
            .channel_min("Freeze_Protected_Thermostat.room_temp")
            .unwrap();
        assert!(min >= threshold - m, "{label}: min {min} below bound {}", threshold - m);
    }
}
