//! Shared helpers: corpus loading and the transformation requests that
//! rebuild each evolution step from its predecessor.

#![allow(dead_code)]

use dartwin_core::transform::{TransformKind, TransformOutcome, TransformRequest};
use dartwin_core::{parse_model_named, Model};

pub const FIXTURES: &[&str] = &[
    "thermal_comfort",
    "green_comfort",
    "flat_green_comfort",
    "orthogonal_freeze",
    "additional_heater",
    "chained_freeze",
    "compromise_saving",
    "gantry_initial",
    "gantry_evolution1",
    "gantry_evolution2",
    "gantry_evolution3",
];

pub fn corpus_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn scenario_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn load(name: &str) -> Model {
    let path = corpus_dir().join(format!("{name}.dartwin"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("read {path:?}: {e}"));
    match parse_model_named(&text, &format!("{name}.dartwin")) {
        Ok(m) => m,
        Err(diags) => {
            for d in &diags {
                eprintln!("{d}");
            }
            panic!("{name} failed to parse");
        }
    }
}

fn apply(source: &Model, req: TransformRequest) -> TransformOutcome {
    req.apply(Some(source)).unwrap_or_else(|e| panic!("transformation failed: {e}"))
}

/// Thermal Comfort wrapped by the energy-saving controller.
pub fn derive_green_comfort(source: &Model) -> TransformOutcome {
    let req = TransformRequest::new(TransformKind::Hierarchical)
        .with("name", "Green Comfort")
        .with("system", "Energy Saving Thermostat")
        .with(
            "dt",
            "dt EnergySaving { in presence: bool [monitoring] in user_comfort_temp: celsius [user] \
             out comfort_temp_cmd: celsius [control] behavior \"energy_saving\" satisfies WhenAbsent }",
        )
        .with("goal", "goal LowerEnergy { title \"Lower Energy\" poi energy_used: joules }")
        .with("goal", "goal WhenAbsent { title \"When Absent\" poi presence: bool }")
        .with("goal", "goal WhenPresent { title \"When Present\" poi comfort_temp: celsius }")
        .with("relation", "relation LowerEnergy supports WarmComfort label \"Lower e <=> Lower t\"")
        .with("relation", "relation WhenAbsent generalizes LowerEnergy")
        .with("relation", "relation WhenPresent generalizes LowerEnergy")
        .with("port", "in comfort_temp: celsius [user]")
        .with("port", "in presence: bool [monitoring]")
        .with("flow", "boundary.comfort_temp -> EnergySaving.user_comfort_temp")
        .with("flow", "boundary.presence -> EnergySaving.presence")
        .with("bind", "EnergySaving.comfort_temp_cmd -> Thermostat.comfort_temp");
    apply(source, req)
}

/// The nested thermostat dissolved into a flat twin system.
pub fn derive_flat_green_comfort(source: &Model) -> TransformOutcome {
    let req = TransformRequest::new(TransformKind::Flatten)
        .with("name", "Flat Green Comfort")
        .with("system", "Thermostat");
    apply(source, req)
}

/// Freeze protection deployed in parallel on the shared sensor and actuator.
pub fn derive_orthogonal_freeze(source: &Model) -> TransformOutcome {
    let req = TransformRequest::new(TransformKind::Orthogonal)
        .with("name", "Orthogonal Freeze Protection")
        .with(
            "dt",
            "dt FreezeProtection { in temp: celsius [monitoring] out heater_cmd: on_off [control] \
             behavior \"freeze_protection\" satisfies NoFreezing }",
        )
        .with(
            "goal",
            "goal NoFreezing { title \"No Freezing\" poi room_temp: celsius \
             constraint \"always(room_temp > 7)\" }",
        )
        .with("bind", "boundary.room_temp -> FreezeProtection.temp")
        .with("bind", "FreezeProtection.heater_cmd -> boundary.heater");
    apply(source, req)
}

/// The conflict resolved by a second heater output.
pub fn derive_additional_heater(source: &Model) -> TransformOutcome {
    let req = TransformRequest::new(TransformKind::NewOutput)
        .with("name", "Additional Heater Freeze Protection")
        .with("dt", "FreezeProtection")
        .with("port", "out heater2: on_off [control]");
    apply(source, req)
}

/// The conflict resolved by piping the thermostat through the watchdog.
pub fn derive_chained_freeze(source: &Model) -> TransformOutcome {
    let req = TransformRequest::new(TransformKind::Chaining)
        .with("name", "Chained Freeze Protection")
        .with("upstream", "ThermostatLogic")
        .with("downstream", "FreezeProtection")
        .with("signal", "on_off");
    apply(source, req)
}

/// Both saving strategies reconciled by a lowest-suggestion arbiter.
pub fn derive_compromise_saving(source: &Model) -> TransformOutcome {
    let req = TransformRequest::new(TransformKind::Arbitration)
        .with("name", "Compromise Saving")
        .with("writer_a", "EnergySaving")
        .with("writer_b", "CostSaving")
        .with("target", "ThermostatLogic.comfort_temp")
        .with("rule", "min")
        .with("satisfies", "SavingMoney");
    apply(source, req)
}

/// The initial gantry crane built from nothing.
pub fn derive_gantry_initial() -> TransformOutcome {
    let req = TransformRequest::new(TransformKind::Basic)
        .with("name", "Optimal Control")
        .with("system", "Gantry Crane")
        .with(
            "goal",
            "goal MinimizeDuration { title \"Minimize Trajectory Duration\" poi duration: seconds }",
        )
        .with(
            "goal",
            "goal NoSwing { title \"No Swinging Motion At Trajectory End\" \
             poi angular_velocity: rad_per_s poi swing_angle: rad \
             constraint \"at_end(swing_angle == 0 and angular_velocity == 0)\" }",
        )
        .with(
            "goal",
            "goal RespectSystemConstraints { title \"Respect System Constraints\" \
             poi max_acceleration: m_per_s2 poi max_position: meters \
             poi max_velocity: m_per_s poi min_position: meters }",
        )
        .with(
            "dt",
            "dt Trajectory { in position: meters [monitoring] in swing: rad [monitoring] \
             out trajectory_cmd: trajectory [control] \
             satisfies MinimizeDuration satisfies NoSwing satisfies RespectSystemConstraints }",
        )
        .with("port", "in position: meters [monitoring]")
        .with("port", "in swing: rad [monitoring]")
        .with("port", "out trajectory_cmd: trajectory [control]")
        .with("flow", "boundary.position -> Trajectory.position")
        .with("flow", "boundary.swing -> Trajectory.swing")
        .with("flow", "Trajectory.trajectory_cmd -> boundary.trajectory_cmd");
    req.apply(None).unwrap_or_else(|e| panic!("basic transformation failed: {e}"))
}

/// Keep-out zones feeding the trajectory solver.
pub fn derive_gantry_evolution1(source: &Model) -> TransformOutcome {
    let req = TransformRequest::new(TransformKind::Augmented)
        .with("name", "Dynamic Positioning Constraints")
        .with(
            "dt",
            "dt ObjectsInArea { in camera: camera_image [monitoring] \
             out position_constraints: position_constraints [inter_dt] \
             satisfies RespectDynamicPositionConstraints }",
        )
        .with(
            "goal",
            "goal RespectDynamicPositionConstraints { title \"Respect Dynamic Position Constraints\" \
             poi container_position: meters }",
        )
        .with(
            "relation",
            "relation RespectDynamicPositionConstraints supports RespectSystemConstraints \
             label \"geometric constraints (union)\" combinator union",
        )
        .with("port", "in camera: camera_image [monitoring]")
        .with("dtport", "Trajectory in constraints: position_constraints [inter_dt]")
        .with("flow", "boundary.camera -> ObjectsInArea.camera")
        .with("flow", "ObjectsInArea.position_constraints -> Trajectory.constraints");
    apply(source, req)
}

/// Trajectory validation reported to the operator: an augmented watchdog
/// followed by a new output for its report.
pub fn derive_gantry_evolution2(source: &Model) -> (TransformOutcome, TransformOutcome) {
    let add_watchdog = TransformRequest::new(TransformKind::Augmented)
        .with(
            "dt",
            "dt Validation { in position: meters [monitoring] in swing: rad [monitoring] \
             in trajectory_in: trajectory [inter_dt] out metrics: validation_metrics [user] \
             satisfies ContinuousValidation }",
        )
        .with("goal", "goal ContinuousValidation { title \"Continuous Validation\" poi metrics: validation_metrics }")
        .with("flow", "boundary.position -> Validation.position")
        .with("flow", "boundary.swing -> Validation.swing")
        .with("flow", "Trajectory.trajectory_cmd -> Validation.trajectory_in");
    let staged = apply(source, add_watchdog);
    let route_report = TransformRequest::new(TransformKind::NewOutput)
        .with("name", "Continuous Validation")
        .with("dt", "Validation")
        .with("output", "metrics")
        .with("port", "out metrics: validation_metrics [user]");
    let finished = apply(&staged.model, route_report);
    (staged, finished)
}

/// Container kinetic limits combined with the system limits by a strictest
/// arbiter: an augmented specification DT followed by arbitration.
pub fn derive_gantry_evolution3(source: &Model) -> (TransformOutcome, TransformOutcome) {
    let add_specification = TransformRequest::new(TransformKind::Augmented)
        .with(
            "dt",
            "dt ContainerSpecification { in container_camera: camera_image [monitoring] \
             out container_limits: kinetic_limits [inter_dt] satisfies RespectContainerConstraints }",
        )
        .with(
            "goal",
            "goal RespectContainerConstraints { title \"Respect Container Kinetic Constraints\" \
             poi max_acceleration: m_per_s2 poi max_velocity: m_per_s }",
        )
        .with(
            "relation",
            "relation RespectContainerConstraints supports RespectSystemConstraints \
             label \"kinetic constraints (strictest/minimal)\" combinator strictest",
        )
        .with("port", "in container_camera: camera_image [monitoring]")
        .with("flow", "boundary.container_camera -> ContainerSpecification.container_camera");
    let staged = apply(source, add_specification);
    let arbitrate = TransformRequest::new(TransformKind::Arbitration)
        .with("name", "Container Constraints")
        .with("writer_a", "Trajectory")
        .with("writer_b", "ContainerSpecification")
        .with("target", "Trajectory.limits")
        .with("target_port", "in limits: kinetic_limits [inter_dt]")
        .with("writer_a_port", "out system_limits: kinetic_limits [inter_dt]")
        .with("rule", "strictest")
        .with("satisfies", "RespectContainerConstraints");
    let finished = apply(&staged.model, arbitrate);
    (staged, finished)
}
