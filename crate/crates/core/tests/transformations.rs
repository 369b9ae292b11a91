//! The evolution chain: every corpus model after the first is rebuilt from
//! its predecessor by the matching transformation and compared structurally,
//! and every reported change set is cross-checked against the independent
//! diff route.

mod common;

use std::collections::BTreeSet;

use common::*;
use dartwin_core::model::{Direction, Model, PortRef};
use dartwin_core::transform::{
    diff, is_isomorphic, isomorphism_witness, TransformKind, TransformOutcome, TransformRequest,
};
use dartwin_core::validator::{detect_actuation_conflicts, validate, Severity};

fn assert_reproduces(outcome: &TransformOutcome, fixture: &str) {
    let expected = load(fixture);
    assert!(
        is_isomorphic(&outcome.model, &expected),
        "derived model is not isomorphic to {fixture}:\n{}",
        dartwin_core::serialize_model(&outcome.model)
    );
}

fn assert_cross_validated(source: &Model, outcome: &TransformOutcome) {
    let independent = diff(source, &outcome.model);
    assert_eq!(independent, outcome.changes, "reported change set deviates from diff");
    assert!(
        validate(&outcome.model).iter().all(|d| d.severity != Severity::Error),
        "transformation result does not validate"
    );
}

#[test]
fn hierarchical_wraps_thermostat_into_green_comfort() {
    let source = load("thermal_comfort");
    let out = derive_green_comfort(&source);
    assert_reproduces(&out, "green_comfort");
    assert_cross_validated(&source, &out);
    assert!(out.changes.removed.is_empty());
    assert_eq!(out.changes.modified, vec!["Thermostat".to_string()]);
}

#[test]
fn hierarchical_leaves_the_nested_system_untouched() {
    let source = load("thermal_comfort");
    let out = derive_green_comfort(&source);
    let nested = out
        .model
        .root_system
        .subsystems
        .iter()
        .find(|s| s.id == "Thermostat")
        .expect("old root nested");
    assert_eq!(nested, &source.root_system, "nested system must be carried over verbatim");
}

#[test]
fn hierarchical_rejects_non_user_bindings() {
    let source = load("thermal_comfort");
    let req = TransformRequest::new(TransformKind::Hierarchical)
        .with("system", "Wrapper")
        .with("dt", "dt Outer { out cmd: celsius [control] satisfies WarmComfort }")
        .with("bind", "Outer.cmd -> Thermostat.room_temp");
    let err = req.apply(Some(&source)).unwrap_err();
    assert!(err.to_string().contains("not a user-role input"), "got: {err}");
}

#[test]
fn flatten_green_comfort_gives_flat_green_comfort() {
    let source = load("green_comfort");
    let out = derive_flat_green_comfort(&source);
    assert_reproduces(&out, "flat_green_comfort");
    assert_cross_validated(&source, &out);
}

#[test]
fn flatten_moves_one_dt_up_and_drops_the_subsystem() {
    let source = load("green_comfort");
    let out = derive_flat_green_comfort(&source);
    assert_eq!(out.model.root_system.dts.len(), source.root_system.dts.len() + 1);
    assert_eq!(out.model.root_system.subsystems.len(), 0);
}

#[test]
fn flatten_rejects_missing_or_bare_systems() {
    let source = load("flat_green_comfort");
    let req = TransformRequest::new(TransformKind::Flatten).with("system", "Thermostat");
    assert!(req.apply(Some(&source)).is_err());
}

/// Independent oracle for flatten: enumerate end-to-end connections by
/// walking flows through forwarding boundary ports. Endpoints are dt ports,
/// or `ext:<name>` for boundary ports facing the outside world.
fn connection_set(model: &Model) -> BTreeSet<(String, String)> {
    let mut dt_ports: BTreeSet<String> = BTreeSet::new();
    for sys in model.root_system.systems() {
        for dt in &sys.dts {
            for p in &dt.ports {
                dt_ports.insert(format!("{}.{}", dt.id, p.name));
            }
        }
    }
    let flows: Vec<(String, String)> = model
        .root_system
        .systems()
        .into_iter()
        .flat_map(|s| s.flows.iter())
        .map(|f| (f.from.qualified(), f.to.qualified()))
        .collect();
    let has_outgoing =
        |port: &str| -> bool { flows.iter().any(|(from, _)| from == port) };
    let port_name = |qualified: &str| -> String {
        qualified.rsplit('.').next().unwrap_or(qualified).to_string()
    };

    // Sources: dt outputs with flows, plus boundary ports with no incoming flow.
    let mut sources: BTreeSet<String> = BTreeSet::new();
    for (from, _) in &flows {
        let fed = flows.iter().any(|(_, to)| to == from);
        if dt_ports.contains(from) || !fed {
            sources.insert(from.clone());
        }
    }

    let mut out = BTreeSet::new();
    for source in sources {
        let label_from = if dt_ports.contains(&source) {
            source.clone()
        } else {
            format!("ext:{}", port_name(&source))
        };
        // Walk forward through forwarding ports.
        let mut frontier = vec![source.clone()];
        let mut seen = BTreeSet::new();
        while let Some(port) = frontier.pop() {
            if !seen.insert(port.clone()) {
                continue;
            }
            for (from, to) in &flows {
                if *from != port {
                    continue;
                }
                if dt_ports.contains(to) {
                    out.insert((label_from.clone(), to.clone()));
                } else if has_outgoing(to) {
                    frontier.push(to.clone());
                } else {
                    out.insert((label_from.clone(), format!("ext:{}", port_name(to))));
                }
            }
        }
    }
    out
}

#[test]
fn flatten_preserves_the_connection_relation() {
    let source = load("green_comfort");
    let out = derive_flat_green_comfort(&source);
    assert_eq!(connection_set(&source), connection_set(&out.model));
}

#[test]
fn orthogonal_adds_the_watchdog_and_warns_about_the_conflict() {
    let source = load("flat_green_comfort");
    let out = derive_orthogonal_freeze(&source);
    assert_reproduces(&out, "orthogonal_freeze");
    assert_cross_validated(&source, &out);
    assert_eq!(out.warnings.len(), 1, "expected exactly the heater conflict warning");

    // The warning matches what the conflict detector reports on the result.
    let conflicts = detect_actuation_conflicts(&out.model);
    assert_eq!(conflicts.len(), 1);
    let c = &conflicts[0];
    assert!(out.warnings[0].elements.contains(&c.actuator.qualified()));
    for w in &c.writers {
        assert!(out.warnings[0].elements.contains(w));
    }
}

#[test]
fn orthogonal_rejects_bindings_to_other_dts() {
    let source = load("flat_green_comfort");
    let req = TransformRequest::new(TransformKind::Orthogonal)
        .with("dt", "dt Watchdog { out cmd: celsius [control] satisfies WarmComfort }")
        .with("bind", "Watchdog.cmd -> ThermostatLogic.comfort_temp");
    let err = req.apply(Some(&source)).unwrap_err();
    assert!(err.to_string().contains("boundary ports"), "got: {err}");
}

#[test]
fn new_output_reroutes_to_a_second_heater() {
    let source = load("orthogonal_freeze");
    let out = derive_additional_heater(&source);
    assert_reproduces(&out, "additional_heater");
    assert_cross_validated(&source, &out);
    assert!(detect_actuation_conflicts(&out.model).is_empty());
}

#[test]
fn new_output_requires_a_flow_or_designated_output() {
    let source = load("thermal_comfort");
    // EnergySaving does not exist here; use a dt with no reroutable flow.
    let req = TransformRequest::new(TransformKind::NewOutput)
        .with("dt", "ThermostatLogic")
        .with("from", "room_temp")
        .with("port", "out heater2: on_off [control]");
    let err = req.apply(Some(&source)).unwrap_err();
    assert!(err.to_string().contains("no flow to reroute"), "got: {err}");
}

#[test]
fn chaining_pipes_the_thermostat_through_the_watchdog() {
    let source = load("orthogonal_freeze");
    let out = derive_chained_freeze(&source);
    assert_reproduces(&out, "chained_freeze");
    assert_cross_validated(&source, &out);
    assert!(detect_actuation_conflicts(&out.model).is_empty());

    let writers = out
        .model
        .actuator_writers(&PortRef::new("Freeze_Protected_Thermostat", "heater"))
        .unwrap();
    assert_eq!(writers, vec!["FreezeProtection".to_string()]);
}

#[test]
fn chaining_a_dt_to_itself_is_rejected() {
    let source = load("orthogonal_freeze");
    let req = TransformRequest::new(TransformKind::Chaining)
        .with("upstream", "ThermostatLogic")
        .with("downstream", "ThermostatLogic")
        .with("signal", "on_off");
    let err = req.apply(Some(&source)).unwrap_err();
    assert!(err.to_string().contains("itself"));
}

#[test]
fn arbitration_inserts_the_min_arbiter() {
    let source = load("compromise_base");
    let out = derive_compromise_saving(&source);
    assert_reproduces(&out, "compromise_saving");
    assert_cross_validated(&source, &out);
    assert!(detect_actuation_conflicts(&out.model).is_empty());
    let arbiter = out.model.dt("Arbiter").expect("arbiter inserted");
    assert_eq!(arbiter.behavior_key.as_deref(), Some("min"));
}

#[test]
fn arbitration_rejects_unit_mismatch_and_unknown_rules() {
    let source = load("compromise_base");
    // FreezeProtection suggests on_off while EnergySaving suggests celsius.
    let req = TransformRequest::new(TransformKind::Arbitration)
        .with("writer_a", "EnergySaving")
        .with("writer_b", "FreezeProtection")
        .with("writer_b_port", "out veto: on_off [inter_dt]")
        .with("target", "ThermostatLogic.comfort_temp")
        .with("rule", "min");
    let err = req.apply(Some(&source)).unwrap_err();
    assert!(err.to_string().contains("unit mismatch"), "got: {err}");

    let req = TransformRequest::new(TransformKind::Arbitration)
        .with("writer_a", "EnergySaving")
        .with("writer_b", "CostSaving")
        .with("target", "ThermostatLogic.comfort_temp")
        .with("rule", "median");
    let err = req.apply(Some(&source)).unwrap_err();
    assert!(err.to_string().contains("unknown arbitration rule"), "got: {err}");
}

#[test]
fn basic_builds_the_initial_gantry_crane() {
    let out = derive_gantry_initial();
    assert_reproduces(&out, "gantry_initial");
    assert!(validate(&out.model).iter().all(|d| d.severity != Severity::Error));
}

#[test]
fn basic_rejects_a_goal_without_pois() {
    let req = TransformRequest::new(TransformKind::Basic)
        .with("name", "X")
        .with("system", "S")
        .with("goal", "goal G { title \"g\" }")
        .with("dt", "dt D { in p: celsius [user] satisfies G }");
    let err = req.apply(None).unwrap_err();
    assert!(err.to_string().contains("at least one poi"), "got: {err}");
}

#[test]
fn augmented_adds_the_keep_out_zone_dt() {
    let source = load("gantry_initial");
    let out = derive_gantry_evolution1(&source);
    assert_reproduces(&out, "gantry_evolution1");
    assert_cross_validated(&source, &out);
    // The new dt, its ports, the new goal, edge, link, boundary port, the
    // solver's new input and both flows are all additions.
    for id in [
        "ObjectsInArea",
        "ObjectsInArea.camera",
        "ObjectsInArea.position_constraints",
        "RespectDynamicPositionConstraints",
        "Trajectory.constraints",
        "Gantry_Crane.camera",
        "link:ObjectsInArea:RespectDynamicPositionConstraints",
    ] {
        assert!(out.changes.added.iter().any(|a| a == id), "missing added id {id}");
    }
}

#[test]
fn augmented_refuses_to_create_an_actuation_conflict() {
    let source = load("flat_green_comfort");
    let req = TransformRequest::new(TransformKind::Augmented)
        .with(
            "dt",
            "dt Rogue { in temp: celsius [monitoring] out heater_cmd: on_off [control] \
             satisfies WarmComfort }",
        )
        .with("flow", "boundary.room_temp -> Rogue.temp")
        .with("flow", "Rogue.heater_cmd -> boundary.heater");
    let err = req.apply(Some(&source)).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("orthogonal"), "error should point at alternatives: {msg}");
}

#[test]
fn augmented_and_new_output_build_continuous_validation() {
    let source = load("gantry_evolution1");
    let (staged, finished) = derive_gantry_evolution2(&source);
    assert_cross_validated(&source, &staged);
    assert_cross_validated(&staged.model, &finished);
    assert_reproduces(&finished, "gantry_evolution2");
}

#[test]
fn augmented_and_arbitration_build_container_constraints() {
    let source = load("gantry_evolution1");
    let (staged, finished) = derive_gantry_evolution3(&source);
    assert_cross_validated(&source, &staged);
    assert_cross_validated(&staged.model, &finished);
    assert_reproduces(&finished, "gantry_evolution3");
    let arbiter = finished.model.dt("Arbiter").expect("arbiter inserted");
    assert_eq!(arbiter.behavior_key.as_deref(), Some("strictest"));
}

#[test]
fn diff_census_thermal_comfort_to_flat_green_comfort() {
    // Enumerated by hand from the two fixtures. The root system is renamed
    // between them, so its boundary ports and flows change identity; on top
    // of that come the energy-saving dt, its ports and flows, the presence
    // port, the three goals, the three goal relations and the new link.
    let cs = diff(&load("thermal_comfort"), &load("flat_green_comfort"));
    let expected_added: BTreeSet<&str> = [
        "LowerEnergy",
        "WhenAbsent",
        "WhenPresent",
        "edge:LowerEnergy:supports:WarmComfort",
        "edge:WhenAbsent:generalizes:LowerEnergy",
        "edge:WhenPresent:generalizes:LowerEnergy",
        "Energy_Saving_Thermostat",
        "Energy_Saving_Thermostat.comfort_temp",
        "Energy_Saving_Thermostat.heater",
        "Energy_Saving_Thermostat.presence",
        "Energy_Saving_Thermostat.room_temp",
        "EnergySaving",
        "EnergySaving.comfort_temp_cmd",
        "EnergySaving.presence",
        "EnergySaving.user_comfort_temp",
        "flow:Energy_Saving_Thermostat.comfort_temp->EnergySaving.user_comfort_temp",
        "flow:Energy_Saving_Thermostat.presence->EnergySaving.presence",
        "flow:Energy_Saving_Thermostat.room_temp->ThermostatLogic.temp",
        "flow:EnergySaving.comfort_temp_cmd->ThermostatLogic.comfort_temp",
        "flow:ThermostatLogic.heater_cmd->Energy_Saving_Thermostat.heater",
        "link:EnergySaving:WhenAbsent",
    ]
    .into_iter()
    .collect();
    let added: BTreeSet<&str> = cs.added.iter().map(String::as_str).collect();
    assert_eq!(added, expected_added);
    assert_eq!(cs.modified, vec!["ThermostatLogic".to_string()]);
    let expected_removed: BTreeSet<&str> = [
        "Thermostat",
        "Thermostat.comfort_temp",
        "Thermostat.heater",
        "Thermostat.room_temp",
        "flow:Thermostat.comfort_temp->ThermostatLogic.comfort_temp",
        "flow:Thermostat.room_temp->ThermostatLogic.temp",
        "flow:ThermostatLogic.heater_cmd->Thermostat.heater",
    ]
    .into_iter()
    .collect();
    let removed: BTreeSet<&str> = cs.removed.iter().map(String::as_str).collect();
    assert_eq!(removed, expected_removed);
}

#[test]
fn isomorphism_distinguishes_flow_topologies() {
    assert!(!is_isomorphic(&load("orthogonal_freeze"), &load("chained_freeze")));
    assert!(!is_isomorphic(&load("thermal_comfort"), &load("flat_green_comfort")));
}

#[test]
fn isomorphism_behaves_like_an_equivalence_on_the_corpus() {
    // Reflexive on every fixture.
    for name in FIXTURES {
        let m = load(name);
        let w = isomorphism_witness(&m, &m).unwrap_or_else(|| panic!("{name} not self-isomorphic"));
        for (a, b) in &w {
            assert_eq!(a, b, "self-witness of {name} should be the identity on ids");
        }
    }
    // Symmetric and transitive across a derived chain.
    let fixture = load("chained_freeze");
    let derived = derive_chained_freeze(&load("orthogonal_freeze")).model;
    let rederived = derive_chained_freeze(&load("orthogonal_freeze")).model;
    assert!(is_isomorphic(&fixture, &derived) && is_isomorphic(&derived, &fixture));
    assert!(is_isomorphic(&derived, &rederived));
    assert!(is_isomorphic(&fixture, &rederived));
}

#[test]
fn every_corpus_pair_of_distinct_shapes_is_not_isomorphic() {
    for (i, a) in FIXTURES.iter().enumerate() {
        for b in &FIXTURES[i + 1..] {
            assert!(
                !is_isomorphic(&load(a), &load(b)),
                "{a} and {b} should differ structurally"
            );
        }
    }
}

#[test]
fn conflict_detector_census_over_the_corpus() {
    let mut with_conflicts = Vec::new();
    for name in FIXTURES {
        let conflicts = detect_actuation_conflicts(&load(name));
        if !conflicts.is_empty() {
            with_conflicts.push((name.to_string(), conflicts));
        }
    }
    assert_eq!(with_conflicts.len(), 1, "exactly one fixture carries a conflict");
    let (name, conflicts) = &with_conflicts[0];
    assert_eq!(name, "orthogonal_freeze");
    assert_eq!(conflicts.len(), 1);
    assert_eq!(conflicts[0].actuator, PortRef::new("Freeze_Protected_Thermostat", "heater"));
    assert_eq!(
        conflicts[0].writers,
        vec!["FreezeProtection".to_string(), "ThermostatLogic".to_string()]
    );
}

#[test]
fn writers_of_the_heater_match_the_architecture() {
    let orthogonal = load("orthogonal_freeze");
    let w = orthogonal
        .actuator_writers(&PortRef::new("Freeze_Protected_Thermostat", "heater"))
        .unwrap();
    assert_eq!(w, vec!["FreezeProtection".to_string(), "ThermostatLogic".to_string()]);

    let chained = load("chained_freeze");
    let w = chained
        .actuator_writers(&PortRef::new("Freeze_Protected_Thermostat", "heater"))
        .unwrap();
    assert_eq!(w, vec!["FreezeProtection".to_string()]);

    // A port with no writers at all.
    let thermal = load("thermal_comfort");
    let w = thermal.actuator_writers(&PortRef::new("Thermostat", "comfort_temp")).unwrap();
    assert!(w.is_empty());
}

#[test]
fn boundary_ports_keep_direction_semantics() {
    // A boundary input acts as a source inside; reusing it as a sink fails.
    let bad = r#"
dartwin "X" {
  goal G { poi t: celsius }
  system "S" {
    in a: celsius [user]
    dt D {
      out c: celsius [control]
      satisfies G
    }
    flow D.c -> boundary.a
  }
}
"#;
    let err = dartwin_core::parse_model(bad).unwrap_err();
    assert!(err.iter().any(|d| d.message.contains("cannot be used as a flow sink")));
}
