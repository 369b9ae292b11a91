//! The architectural transformations as checked rewrites.
//!
//! Every operation takes an immutable source model and returns a fresh model
//! together with the [`ChangeSet`] of added/removed/modified element ids. The
//! change set is assembled by the operation itself while it edits; the
//! independent [`diff`] route recomputes it from the two models, and the test
//! suite holds the two equal.
//!
//! Generated elements take `<base>_<n>` names with the smallest free `n`, so
//! reapplying a transformation is deterministic.

mod diff;
mod iso;
mod request;

pub use diff::{diff, ChangeSet};
pub use iso::{is_isomorphic, isomorphism_witness};
pub use request::{TransformKind, TransformRequest};

use std::collections::BTreeSet;

use crate::model::{
    Direction, Dt, DtGoalLink, Flow, Goal, GoalEdge, Model, Port, PortRef, PortRole, SystemKind,
    TwinSystem,
};
use crate::validator::{detect_actuation_conflicts, validate, Diagnostic, Severity};

/// Arbitration rules a transformation may reference. The transformation layer
/// stores only the key; the simulation registry provides the semantics.
pub const ARBITRATION_RULES: &[&str] = &["min", "strictest"];

#[derive(Debug, Clone, thiserror::Error)]
pub enum TransformError {
    #[error("{0}")]
    Precondition(String),
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("unit mismatch between writers: `{0}` vs `{1}`")]
    UnitMismatch(String, String),
    #[error("unknown arbitration rule `{0}`")]
    UnknownRule(String),
    #[error("transformation produced an invalid model: {0}")]
    ResultInvalid(String),
    #[error("missing parameter `{0}` for this transformation")]
    MissingParameter(String),
    #[error("bad parameter `{key}`: {message}")]
    BadParameter { key: String, message: String },
}

fn precondition(msg: impl Into<String>) -> TransformError {
    TransformError::Precondition(msg.into())
}

/// Result of a transformation: the rewritten model, the changes relative to
/// the source, and any warnings the rewrite knowingly leaves behind.
#[derive(Debug, Clone)]
pub struct TransformOutcome {
    pub model: Model,
    pub changes: ChangeSet,
    pub warnings: Vec<Diagnostic>,
}

/// Goal-layer additions shared by the transformations that introduce goals.
#[derive(Debug, Clone, Default)]
pub struct GoalLayer {
    pub goals: Vec<Goal>,
    pub edges: Vec<GoalEdge>,
    /// Goal ids the new dt satisfies.
    pub satisfies: Vec<String>,
}

fn fresh_name(base: &str, taken: &BTreeSet<String>) -> String {
    if !taken.contains(base) {
        return base.to_string();
    }
    let mut n = 1usize;
    loop {
        let candidate = format!("{base}_{n}");
        if !taken.contains(&candidate) {
            return candidate;
        }
        n += 1;
    }
}

fn all_ids(model: &Model) -> BTreeSet<String> {
    model.elements().into_iter().map(|(id, _)| id).collect()
}

/// Replace a literal `boundary` owner with the given system id.
fn resolve_boundary(mut flow: Flow, system_id: &str) -> Flow {
    if flow.from.owner == "boundary" {
        flow.from.owner = system_id.to_string();
    }
    if flow.to.owner == "boundary" {
        flow.to.owner = system_id.to_string();
    }
    flow
}

/// Canonicalize, add the goal layer, verify invariants and assemble the
/// outcome. Every operation funnels through here.
fn finish(
    source: &Model,
    mut model: Model,
    mut changes: ChangeSet,
    warnings: Vec<Diagnostic>,
) -> Result<TransformOutcome, TransformError> {
    model.canonicalize();
    changes.sort();
    let errors: Vec<String> = validate(&model)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .map(|d| d.message)
        .collect();
    if !errors.is_empty() {
        return Err(TransformError::ResultInvalid(errors.join("; ")));
    }
    changes.check(source, &model).map_err(TransformError::ResultInvalid)?;
    Ok(TransformOutcome { model, changes, warnings })
}

fn add_goal_layer(
    model: &mut Model,
    changes: &mut ChangeSet,
    layer: &GoalLayer,
    new_dt: &str,
) -> Result<(), TransformError> {
    let taken = all_ids(model);
    for g in &layer.goals {
        if taken.contains(&g.id) {
            return Err(precondition(format!("goal id `{}` is already taken", g.id)));
        }
        changes.added.push(g.id.clone());
        model.goals.push(g.clone());
    }
    for e in &layer.edges {
        for endpoint in [&e.source, &e.target] {
            if model.goal(endpoint).is_none() {
                return Err(TransformError::UnknownElement(endpoint.clone()));
            }
        }
        changes.added.push(e.id());
        model.goal_edges.push(e.clone());
    }
    for goal in &layer.satisfies {
        if model.goal(goal).is_none() {
            return Err(TransformError::UnknownElement(goal.clone()));
        }
        let link = DtGoalLink { dt: new_dt.to_string(), goal: goal.clone() };
        changes.added.push(link.id());
        model.dt_goal_links.push(link);
    }
    Ok(())
}

fn push_dt(system: &mut TwinSystem, changes: &mut ChangeSet, dt: Dt) {
    changes.added.push(dt.id.clone());
    for p in &dt.ports {
        changes.added.push(format!("{}.{}", dt.id, p.name));
    }
    system.dts.push(dt);
}

fn push_boundary_ports(system: &mut TwinSystem, changes: &mut ChangeSet, ports: &[Port]) {
    for p in ports {
        changes.added.push(format!("{}.{}", system.id, p.name));
        system.ports.push(p.clone());
    }
}

fn push_flow(system: &mut TwinSystem, changes: &mut ChangeSet, flow: Flow) {
    changes.added.push(flow.id());
    system.flows.push(flow);
}

/// New conflicts introduced by a rewrite, as warning diagnostics.
fn new_conflict_warnings(source: &Model, result: &Model) -> Vec<Diagnostic> {
    let before: BTreeSet<PortRef> =
        detect_actuation_conflicts(source).into_iter().map(|c| c.actuator).collect();
    detect_actuation_conflicts(result)
        .into_iter()
        .filter(|c| !before.contains(&c.actuator))
        .map(|c| Diagnostic {
            severity: Severity::Warning,
            code: "ACT-CONFLICT".into(),
            message: format!(
                "dts {} now independently write `{}`; resolve with new_output, chaining or arbitration",
                c.writers.join(", "),
                c.actuator.qualified()
            ),
            elements: std::iter::once(c.actuator.qualified()).chain(c.writers).collect(),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// basic

#[derive(Debug, Clone)]
pub struct BasicSpec {
    pub model_name: String,
    pub system_name: String,
    pub goals: Vec<Goal>,
    pub goal_edges: Vec<GoalEdge>,
    pub dt: Dt,
    /// Goal ids the dt satisfies.
    pub satisfies: Vec<String>,
    pub boundary_ports: Vec<Port>,
    /// Flows with the owner word `boundary` referring to the new system.
    pub flows: Vec<Flow>,
}

/// Build the starting shape: one goal layer, one dt inside one twin system,
/// boundary ports and their flows.
pub fn apply_basic(spec: &BasicSpec) -> Result<Model, TransformError> {
    let mut system = TwinSystem::new(spec.system_name.clone(), SystemKind::TwinSystem);
    system.ports = spec.boundary_ports.clone();
    let system_id = system.id.clone();
    system.dts.push(spec.dt.clone());
    system.flows = spec.flows.iter().map(|f| resolve_boundary(f.clone(), &system_id)).collect();

    let mut model = Model::new(spec.model_name.clone(), system);
    model.goals = spec.goals.clone();
    model.goal_edges = spec.goal_edges.clone();
    model.dt_goal_links = spec
        .satisfies
        .iter()
        .map(|g| DtGoalLink { dt: spec.dt.id.clone(), goal: g.clone() })
        .collect();
    model.canonicalize();

    let violations = model.check_invariants();
    if !violations.is_empty() {
        let msgs: Vec<String> = violations.into_iter().map(|v| v.message).collect();
        return Err(precondition(msgs.join("; ")));
    }
    Ok(model)
}

// ---------------------------------------------------------------------------
// hierarchical

#[derive(Debug, Clone)]
pub struct HierarchicalParams {
    /// Display name of the resulting model; defaults to the source name.
    pub model_name: Option<String>,
    /// Name of the new enclosing twin system.
    pub system_name: String,
    pub new_dt: Dt,
    pub goal_layer: GoalLayer,
    /// Ports added on the new root boundary.
    pub new_boundary_ports: Vec<Port>,
    /// Flows from the new boundary into the new dt (`boundary.` = new root).
    pub boundary_flows: Vec<Flow>,
    /// Flows from the new dt into user-role ports of the old root boundary.
    pub parameter_bindings: Vec<Flow>,
}

/// Wrap the whole source model as a nested twin system and put a new dt in
/// charge of its user-facing parameters. The old model's internals are
/// untouched.
pub fn apply_hierarchical(
    source: &Model,
    params: &HierarchicalParams,
) -> Result<TransformOutcome, TransformError> {
    let old_root = source.root_system.clone();
    let mut changes = ChangeSet::default();

    let mut new_root = TwinSystem::new(params.system_name.clone(), SystemKind::TwinSystem);
    if new_root.id == old_root.id {
        return Err(precondition(format!(
            "new system name `{}` collides with the existing root id",
            params.system_name
        )));
    }
    changes.added.push(new_root.id.clone());
    // The old root is re-nested, which is its only modification.
    changes.modified.push(old_root.id.clone());

    push_boundary_ports(&mut new_root, &mut changes, &params.new_boundary_ports);
    if source.dt(&params.new_dt.id).is_some() {
        return Err(precondition(format!("dt id `{}` is already taken", params.new_dt.id)));
    }
    push_dt(&mut new_root, &mut changes, params.new_dt.clone());

    for f in &params.boundary_flows {
        let f = resolve_boundary(f.clone(), &new_root.id);
        push_flow(&mut new_root, &mut changes, f);
    }
    for f in &params.parameter_bindings {
        let f = resolve_boundary(f.clone(), &new_root.id);
        if f.to.owner != old_root.id {
            if source.find_element(&f.to.owner).is_some() {
                return Err(precondition(format!(
                    "binding target `{}` lies inside the old root; bind its boundary instead",
                    f.to
                )));
            }
            return Err(TransformError::UnknownElement(f.to.owner.clone()));
        }
        let port = old_root
            .port(&f.to.port)
            .ok_or_else(|| TransformError::UnknownElement(f.to.qualified()))?;
        if port.role != PortRole::User || port.direction != Direction::Input {
            return Err(precondition(format!(
                "binding target `{}` is not a user-role input port",
                f.to
            )));
        }
        if params.new_dt.port(&f.from.port).is_none() || f.from.owner != params.new_dt.id {
            return Err(precondition(format!(
                "binding source `{}` must be an output of the new dt",
                f.from
            )));
        }
        push_flow(&mut new_root, &mut changes, f);
    }

    new_root.subsystems.push(old_root);

    let mut model = Model::new(
        params.model_name.clone().unwrap_or_else(|| source.name.clone()),
        new_root,
    );
    model.extends_name = Some(source.name.clone());
    model.goals = source.goals.clone();
    model.goal_edges = source.goal_edges.clone();
    model.dt_goal_links = source.dt_goal_links.clone();
    add_goal_layer(&mut model, &mut changes, &params.goal_layer, &params.new_dt.id)?;

    finish(source, model, changes, Vec::new())
}

// ---------------------------------------------------------------------------
// flatten

/// Dissolve a directly nested twin system into the root: its dts are hoisted,
/// forwarding boundary ports are elided with their flows reconnected
/// end-to-end, and boundary ports facing the outside world move to the root.
pub fn flatten(source: &Model, inner_id: &str) -> Result<TransformOutcome, TransformError> {
    let root = &source.root_system;
    let Some(inner) = root.subsystems.iter().find(|s| s.id == inner_id) else {
        if source.system(inner_id).is_some() {
            return Err(precondition(format!(
                "`{inner_id}` is not a direct child of the root system"
            )));
        }
        return Err(TransformError::UnknownElement(inner_id.to_string()));
    };
    if inner.kind == SystemKind::ActualTwin {
        return Err(precondition(format!(
            "`{inner_id}` is an actual twin; there is nothing to flatten"
        )));
    }
    if inner.dts.is_empty() {
        return Err(precondition(format!("`{inner_id}` contains no dts to hoist")));
    }

    let mut changes = ChangeSet::default();
    changes.removed.push(inner.id.clone());

    let mut new_root = root.clone();
    new_root.subsystems.retain(|s| s.id != inner_id);
    let inner = inner.clone();

    // Outer flows touching the inner boundary, per port name.
    let outside_of = |port: &str| -> Vec<Flow> {
        root.flows
            .iter()
            .filter(|f| {
                (f.from.owner == inner.id && f.from.port == port)
                    || (f.to.owner == inner.id && f.to.port == port)
            })
            .cloned()
            .collect()
    };
    let inside_of = |port: &str| -> Vec<Flow> {
        inner
            .flows
            .iter()
            .filter(|f| {
                (f.from.owner == inner.id && f.from.port == port)
                    || (f.to.owner == inner.id && f.to.port == port)
            })
            .cloned()
            .collect()
    };

    // Hoist the dts.
    for dt in &inner.dts {
        changes.modified.push(dt.id.clone());
        new_root.dts.push(dt.clone());
    }

    // Inner flows not touching the inner boundary hoist verbatim.
    for f in &inner.flows {
        if f.from.owner != inner.id && f.to.owner != inner.id {
            new_root.flows.push(f.clone());
        }
    }

    let mut removed_outer: BTreeSet<String> = BTreeSet::new();
    let taken: BTreeSet<String> = root.ports.iter().map(|p| p.name.clone()).collect();
    for port in &inner.ports {
        changes.removed.push(format!("{}.{}", inner.id, port.name));
        let outside = outside_of(&port.name);
        let inside = inside_of(&port.name);
        for f in &inside {
            changes.removed.push(f.id());
        }
        for f in &outside {
            changes.removed.push(f.id());
            removed_outer.insert(f.id());
        }
        if !outside.is_empty() && !inside.is_empty() {
            // Pure forwarder: reconnect ends pairwise and drop the port.
            for o in &outside {
                for i in &inside {
                    let new_flow = if port.direction == Direction::Input {
                        Flow { from: o.from.clone(), to: i.to.clone() }
                    } else {
                        Flow { from: i.from.clone(), to: o.to.clone() }
                    };
                    push_flow(&mut new_root, &mut changes, new_flow);
                }
            }
        } else {
            // The port faces the outside world (or dangles): move it onto the
            // root boundary and re-home its flows.
            let name = fresh_name(&port.name, &taken);
            let mut moved = port.clone();
            moved.name = name.clone();
            changes.added.push(format!("{}.{}", new_root.id, name));
            new_root.ports.push(moved);
            let root_id = new_root.id.clone();
            let rehome = |r: &PortRef| -> PortRef {
                if r.owner == inner.id && r.port == port.name {
                    PortRef::new(root_id.clone(), name.clone())
                } else {
                    r.clone()
                }
            };
            for f in inside.iter().chain(outside.iter()) {
                let new_flow = Flow { from: rehome(&f.from), to: rehome(&f.to) };
                push_flow(&mut new_root, &mut changes, new_flow);
            }
        }
    }
    new_root.flows.retain(|f| !removed_outer.contains(&f.id()));

    let mut model = source.clone();
    model.extends_name = Some(source.name.clone());
    model.root_system = new_root;
    finish(source, model, changes, Vec::new())
}

// ---------------------------------------------------------------------------
// augmented

#[derive(Debug, Clone)]
pub struct AugmentedParams {
    pub new_dt: Dt,
    pub goal_layer: GoalLayer,
    pub new_boundary_ports: Vec<Port>,
    /// Ports to add on existing dts, e.g. a new input the new dt feeds.
    pub added_ports: Vec<(String, Port)>,
    /// Flows wiring the new dt with existing dts (either direction) and with
    /// boundary ports (`boundary.` = root).
    pub flows: Vec<Flow>,
}

/// Add a dt in parallel inside the root system, communicating with the
/// existing dts over inter-dt flows while monitoring and control data stay
/// separate: the rewrite refuses to create a new actuation conflict.
pub fn apply_augmented(
    source: &Model,
    params: &AugmentedParams,
) -> Result<TransformOutcome, TransformError> {
    let mut model = source.clone();
    model.extends_name = Some(source.name.clone());
    let mut changes = ChangeSet::default();

    if source.find_element(&params.new_dt.id).is_some() {
        return Err(precondition(format!("dt id `{}` is already taken", params.new_dt.id)));
    }
    let root_id = model.root_system.id.clone();
    for (dt_id, port) in &params.added_ports {
        let dt = model
            .dt_mut(dt_id)
            .ok_or_else(|| TransformError::UnknownElement(dt_id.clone()))?;
        if dt.port(&port.name).is_some() {
            return Err(precondition(format!(
                "dt `{dt_id}` already has a port named `{}`",
                port.name
            )));
        }
        changes.added.push(format!("{dt_id}.{}", port.name));
        dt.ports.push(port.clone());
    }
    {
        let root = model.system_mut(&root_id).expect("root exists");
        push_boundary_ports(root, &mut changes, &params.new_boundary_ports);
        push_dt(root, &mut changes, params.new_dt.clone());
        for f in &params.flows {
            let f = resolve_boundary(f.clone(), &root_id);
            let touches_new = f.from.owner == params.new_dt.id || f.to.owner == params.new_dt.id;
            if !touches_new {
                return Err(precondition(format!(
                    "augmenting flow `{}` does not involve the new dt",
                    f.id()
                )));
            }
            push_flow(root, &mut changes, f);
        }
    }
    add_goal_layer(&mut model, &mut changes, &params.goal_layer, &params.new_dt.id)?;

    model.canonicalize();
    let introduced = new_conflict_warnings(source, &model);
    if let Some(w) = introduced.first() {
        return Err(precondition(format!(
            "{}; use the orthogonal transformation if the conflict is intended",
            w.message
        )));
    }
    finish(source, model, changes, Vec::new())
}

// ---------------------------------------------------------------------------
// orthogonal

#[derive(Debug, Clone)]
pub struct OrthogonalParams {
    pub new_dt: Dt,
    pub goal_layer: GoalLayer,
    /// Flows binding the new dt to existing root boundary ports only.
    pub bindings: Vec<Flow>,
}

/// Deploy a dt in parallel on the shared sensors and actuators. If that
/// leaves an actuator with two writers the rewrite succeeds anyway and
/// reports the conflict as a warning.
pub fn apply_orthogonal(
    source: &Model,
    params: &OrthogonalParams,
) -> Result<TransformOutcome, TransformError> {
    let mut model = source.clone();
    model.extends_name = Some(source.name.clone());
    let mut changes = ChangeSet::default();

    if source.find_element(&params.new_dt.id).is_some() {
        return Err(precondition(format!("dt id `{}` is already taken", params.new_dt.id)));
    }
    let root_id = model.root_system.id.clone();
    {
        let root = model.system_mut(&root_id).expect("root exists");
        push_dt(root, &mut changes, params.new_dt.clone());
        for f in &params.bindings {
            let f = resolve_boundary(f.clone(), &root_id);
            let (dt_end, boundary_end) = if f.from.owner == params.new_dt.id {
                (&f.from, &f.to)
            } else if f.to.owner == params.new_dt.id {
                (&f.to, &f.from)
            } else {
                return Err(precondition(format!(
                    "orthogonal binding `{}` does not involve the new dt",
                    f.id()
                )));
            };
            if boundary_end.owner != root_id {
                return Err(precondition(format!(
                    "orthogonal bindings may only touch boundary ports, not `{}`",
                    boundary_end
                )));
            }
            if root.port(&boundary_end.port).is_none() {
                return Err(TransformError::UnknownElement(boundary_end.qualified()));
            }
            if params.new_dt.port(&dt_end.port).is_none() {
                return Err(TransformError::UnknownElement(dt_end.qualified()));
            }
            push_flow(root, &mut changes, f.clone());
        }
    }
    add_goal_layer(&mut model, &mut changes, &params.goal_layer, &params.new_dt.id)?;

    model.canonicalize();
    let warnings = new_conflict_warnings(source, &model);
    finish(source, model, changes, warnings)
}

// ---------------------------------------------------------------------------
// new output

#[derive(Debug, Clone)]
pub struct NewOutputParams {
    pub dt: String,
    /// The boundary port to create.
    pub new_port: Port,
    /// Boundary port currently written by the dt, when rerouting an existing
    /// actuation; picked automatically if the dt writes exactly one.
    pub reroute_from: Option<String>,
    /// Name of a flow-less dt output to route out instead of rerouting.
    pub output: Option<String>,
}

/// Give a dt its own sink: either reroute its actuation away from a shared
/// control port onto a fresh boundary port, or route a designated dangling
/// output (a report for the operator, say) out of the system.
pub fn apply_new_output(
    source: &Model,
    params: &NewOutputParams,
) -> Result<TransformOutcome, TransformError> {
    let dt = source
        .dt(&params.dt)
        .ok_or_else(|| TransformError::UnknownElement(params.dt.clone()))?;
    let scope = source
        .parent_system_of(&params.dt)
        .ok_or_else(|| TransformError::UnknownElement(params.dt.clone()))?;
    let scope_id = scope.id.clone();

    let mut model = source.clone();
    model.extends_name = Some(source.name.clone());
    let mut changes = ChangeSet::default();
    let taken: BTreeSet<String> = scope.ports.iter().map(|p| p.name.clone()).collect();

    let (new_flow, removed_flow, unit) = if let Some(output) = &params.output {
        let port = dt
            .port(output)
            .ok_or_else(|| TransformError::UnknownElement(format!("{}.{output}", dt.id)))?;
        if port.direction != Direction::Output {
            return Err(precondition(format!("`{}.{output}` is not an output port", dt.id)));
        }
        let already_flowing = scope
            .flows
            .iter()
            .any(|f| f.from.owner == dt.id && f.from.port == *output);
        if already_flowing {
            return Err(precondition(format!(
                "`{}.{output}` already flows somewhere; reroute instead",
                dt.id
            )));
        }
        (PortRef::new(dt.id.clone(), output.clone()), None, port.signal_unit.clone())
    } else {
        let mut candidates: Vec<&Flow> = scope
            .flows
            .iter()
            .filter(|f| {
                f.from.owner == dt.id
                    && f.to.owner == scope_id
                    && scope
                        .port(&f.to.port)
                        .is_some_and(|p| p.role == PortRole::Control && p.direction == Direction::Output)
            })
            .collect();
        if let Some(target) = &params.reroute_from {
            candidates.retain(|f| f.to.port == *target);
        }
        match candidates.len() {
            0 => {
                return Err(precondition(format!(
                    "dt `{}` has no flow to reroute",
                    dt.id
                )))
            }
            1 => {}
            _ => {
                return Err(precondition(format!(
                    "dt `{}` writes several control ports; name one to reroute from",
                    dt.id
                )))
            }
        }
        let flow = candidates[0].clone();
        let unit = source
            .resolve_port(&flow.from)
            .map(|p| p.signal_unit.clone())
            .unwrap_or_default();
        (flow.from.clone(), Some(flow), unit)
    };

    let mut port = params.new_port.clone();
    port.name = fresh_name(&port.name, &taken);
    if port.signal_unit != unit {
        return Err(precondition(format!(
            "new output port unit `{}` does not match the signal unit `{unit}`",
            port.signal_unit
        )));
    }
    let port_name = port.name.clone();
    {
        let scope = model.system_mut(&scope_id).expect("scope exists");
        if let Some(f) = &removed_flow {
            changes.removed.push(f.id());
            scope.flows.retain(|x| x != f);
        }
        changes.added.push(format!("{scope_id}.{port_name}"));
        scope.ports.push(port);
        let flow = Flow { from: new_flow, to: PortRef::new(scope_id.clone(), port_name) };
        push_flow(scope, &mut changes, flow);
    }
    finish(source, model, changes, Vec::new())
}

// ---------------------------------------------------------------------------
// chaining

#[derive(Debug, Clone)]
pub struct ChainingParams {
    pub upstream: String,
    pub downstream: String,
    pub signal_unit: String,
    /// Name for the new input on the downstream dt; `upstream_cmd` by default.
    pub port_name: Option<String>,
}

/// Give the downstream dt priority over the upstream one: the upstream's
/// actuation is redirected into a new input on the downstream dt, which
/// becomes the sole writer of the actuator.
pub fn apply_chaining(
    source: &Model,
    params: &ChainingParams,
) -> Result<TransformOutcome, TransformError> {
    if params.upstream == params.downstream {
        return Err(precondition("cannot chain a dt to itself"));
    }
    let upstream = source
        .dt(&params.upstream)
        .ok_or_else(|| TransformError::UnknownElement(params.upstream.clone()))?;
    let downstream = source
        .dt(&params.downstream)
        .ok_or_else(|| TransformError::UnknownElement(params.downstream.clone()))?;
    let scope = source.parent_system_of(&params.upstream).expect("dt has a parent");
    if !scope.dts.iter().any(|d| d.id == params.downstream) {
        return Err(precondition(format!(
            "dt `{}` is unreachable in the same system scope as `{}`",
            params.downstream, params.upstream
        )));
    }
    let scope_id = scope.id.clone();

    // The upstream's actuation: its flow into a control boundary port with
    // the chained signal unit.
    let actuation: Vec<&Flow> = scope
        .flows
        .iter()
        .filter(|f| {
            f.from.owner == upstream.id
                && f.to.owner == scope_id
                && scope.port(&f.to.port).is_some_and(|p| {
                    p.role == PortRole::Control
                        && p.direction == Direction::Output
                        && p.signal_unit == params.signal_unit
                })
        })
        .collect();
    let old_flow = match actuation.len() {
        0 => {
            return Err(precondition(format!(
                "dt `{}` does not write a `{}` control boundary port",
                upstream.id, params.signal_unit
            )))
        }
        1 => actuation[0].clone(),
        _ => {
            return Err(precondition(format!(
                "dt `{}` writes several `{}` actuators; chaining is ambiguous",
                upstream.id, params.signal_unit
            )))
        }
    };
    let actuator = old_flow.to.clone();

    let mut model = source.clone();
    model.extends_name = Some(source.name.clone());
    let mut changes = ChangeSet::default();

    let port_base = params.port_name.clone().unwrap_or_else(|| "upstream_cmd".to_string());
    let existing: BTreeSet<String> = downstream.ports.iter().map(|p| p.name.clone()).collect();
    let port_name = fresh_name(&port_base, &existing);
    {
        let dt = model.dt_mut(&params.downstream).expect("downstream exists");
        changes.added.push(format!("{}.{port_name}", dt.id));
        dt.ports.push(Port {
            name: port_name.clone(),
            direction: Direction::Input,
            role: PortRole::InterDt,
            signal_unit: params.signal_unit.clone(),
        });
    }

    let downstream_writes = scope
        .flows
        .iter()
        .any(|f| f.from.owner == params.downstream && f.to == actuator);
    let takeover = if downstream_writes {
        None
    } else {
        // The downstream takes the actuator over through a free output of the
        // chained unit.
        let candidates: Vec<&Port> = downstream
            .outputs()
            .filter(|p| {
                p.signal_unit == params.signal_unit
                    && !scope
                        .flows
                        .iter()
                        .any(|f| f.from.owner == params.downstream && f.from.port == p.name)
            })
            .collect();
        let port = candidates.first().ok_or_else(|| {
            precondition(format!(
                "dt `{}` has no free `{}` output to take the actuator over",
                params.downstream, params.signal_unit
            ))
        })?;
        Some(PortRef::new(params.downstream.clone(), port.name.clone()))
    };

    {
        let scope = model.system_mut(&scope_id).expect("scope exists");
        changes.removed.push(old_flow.id());
        scope.flows.retain(|f| *f != old_flow);
        let rerouted = Flow {
            from: old_flow.from.clone(),
            to: PortRef::new(params.downstream.clone(), port_name.clone()),
        };
        push_flow(scope, &mut changes, rerouted);
        if let Some(from) = takeover {
            push_flow(scope, &mut changes, Flow { from, to: actuator.clone() });
        }
    }

    let writers = model.actuator_writers(&actuator).map_err(|e| precondition(e.to_string()))?;
    if writers != vec![params.downstream.clone()] {
        return Err(precondition(format!(
            "chaining left `{}` with writers {:?} instead of `{}` alone",
            actuator.qualified(),
            writers,
            params.downstream
        )));
    }
    finish(source, model, changes, Vec::new())
}

// ---------------------------------------------------------------------------
// arbitration

#[derive(Debug, Clone)]
pub struct ArbitrationParams {
    pub writer_a: String,
    pub writer_b: String,
    /// Port both writers' suggestions should reach (`boundary.` = root). If
    /// it does not exist yet, `target_port` describes the port to create.
    pub target: PortRef,
    pub rule_key: String,
    pub arbiter_name: Option<String>,
    /// Goal the arbiter helps satisfy.
    pub satisfies: Option<String>,
    /// Output ports to create on the writers when they have none to offer.
    pub writer_a_output: Option<Port>,
    pub writer_b_output: Option<Port>,
    pub target_port: Option<Port>,
}

/// Insert an explicit arbiter between two competing writers: both suggestions
/// are rerouted into the arbiter and only its combined result reaches the
/// target. The arbiter carries the arbitration rule as its behavior key.
pub fn apply_arbitration(
    source: &Model,
    params: &ArbitrationParams,
) -> Result<TransformOutcome, TransformError> {
    if !ARBITRATION_RULES.contains(&params.rule_key.as_str()) {
        return Err(TransformError::UnknownRule(params.rule_key.clone()));
    }
    for w in [&params.writer_a, &params.writer_b] {
        if source.dt(w).is_none() {
            return Err(TransformError::UnknownElement(w.clone()));
        }
    }
    let scope_a = source.parent_system_of(&params.writer_a).expect("dt has a parent");
    if !scope_a.dts.iter().any(|d| d.id == params.writer_b) {
        return Err(precondition(format!(
            "writers `{}` and `{}` are not in the same system scope",
            params.writer_a, params.writer_b
        )));
    }
    let scope_id = scope_a.id.clone();

    let mut model = source.clone();
    model.extends_name = Some(source.name.clone());
    let mut changes = ChangeSet::default();

    // Resolve or create the target port.
    let mut target = params.target.clone();
    if target.owner == "boundary" {
        target.owner = scope_id.clone();
    }
    let target_unit = match model.resolve_port(&target) {
        Some(p) => p.signal_unit.clone(),
        None => {
            let spec = params
                .target_port
                .clone()
                .ok_or_else(|| TransformError::UnknownElement(target.qualified()))?;
            let unit = spec.signal_unit.clone();
            let dt = model
                .dt_mut(&target.owner)
                .ok_or_else(|| TransformError::UnknownElement(target.owner.clone()))?;
            let mut spec = spec;
            spec.name = target.port.clone();
            changes.added.push(format!("{}.{}", target.owner, spec.name));
            dt.ports.push(spec);
            unit
        }
    };

    // For each writer: the output port feeding the arbiter, plus the existing
    // flow toward the target to remove, if any.
    let mut resolve_writer = |writer: &str,
                              new_output: &Option<Port>|
     -> Result<(PortRef, Option<Flow>, String), TransformError> {
        let scope = model.system(&scope_id).expect("scope exists");
        if let Some(flow) = scope
            .flows
            .iter()
            .find(|f| f.from.owner == writer && f.to == target)
            .cloned()
        {
            let unit = model.resolve_port(&flow.from).map(|p| p.signal_unit.clone()).unwrap();
            return Ok((flow.from.clone(), Some(flow), unit));
        }
        if let Some(spec) = new_output {
            let dt = model.dt_mut(writer).expect("writer exists");
            if let Some(existing) = dt.port(&spec.name) {
                let unit = existing.signal_unit.clone();
                return Ok((PortRef::new(writer, spec.name.clone()), None, unit));
            }
            let unit = spec.signal_unit.clone();
            changes.added.push(format!("{writer}.{}", spec.name));
            dt.ports.push(spec.clone());
            return Ok((PortRef::new(writer, spec.name.clone()), None, unit));
        }
        // Fall back to a unique free output of the target's unit.
        let scope = model.system(&scope_id).expect("scope exists");
        let dt = model.dt(writer).expect("writer exists");
        let free: Vec<&Port> = dt
            .outputs()
            .filter(|p| {
                !scope.flows.iter().any(|f| f.from.owner == writer && f.from.port == p.name)
            })
            .collect();
        match free.as_slice() {
            [port] => Ok((PortRef::new(writer, port.name.clone()), None, port.signal_unit.clone())),
            [] => Err(precondition(format!(
                "dt `{writer}` neither writes `{}` nor has a free output to arbitrate",
                target.qualified()
            ))),
            _ => Err(precondition(format!(
                "dt `{writer}` has several free outputs; name the one to arbitrate"
            ))),
        }
    };

    let (src_a, flow_a, unit_a) = resolve_writer(&params.writer_a, &params.writer_a_output)?;
    let (src_b, flow_b, unit_b) = resolve_writer(&params.writer_b, &params.writer_b_output)?;
    if unit_a != unit_b {
        return Err(TransformError::UnitMismatch(unit_a, unit_b));
    }
    if unit_a != target_unit {
        return Err(TransformError::UnitMismatch(unit_a, target_unit));
    }

    let taken = all_ids(source);
    let arbiter_id = fresh_name(params.arbiter_name.as_deref().unwrap_or("Arbiter"), &taken);
    let result_role = match model.resolve_port(&target).map(|p| p.role) {
        Some(PortRole::User) | Some(PortRole::Control) => PortRole::Control,
        _ => PortRole::InterDt,
    };
    let mut arbiter = Dt::new(arbiter_id.clone());
    arbiter.behavior_key = Some(params.rule_key.clone());
    arbiter.ports = vec![
        Port {
            name: "a".into(),
            direction: Direction::Input,
            role: PortRole::InterDt,
            signal_unit: unit_a.clone(),
        },
        Port {
            name: "b".into(),
            direction: Direction::Input,
            role: PortRole::InterDt,
            signal_unit: unit_a.clone(),
        },
        Port {
            name: "result".into(),
            direction: Direction::Output,
            role: result_role,
            signal_unit: unit_a.clone(),
        },
    ];

    {
        let scope = model.system_mut(&scope_id).expect("scope exists");
        for f in [&flow_a, &flow_b].into_iter().flatten() {
            changes.removed.push(f.id());
            scope.flows.retain(|x| x != f);
        }
        push_dt(scope, &mut changes, arbiter);
        push_flow(scope, &mut changes, Flow {
            from: src_a,
            to: PortRef::new(arbiter_id.clone(), "a"),
        });
        push_flow(scope, &mut changes, Flow {
            from: src_b,
            to: PortRef::new(arbiter_id.clone(), "b"),
        });
        push_flow(scope, &mut changes, Flow {
            from: PortRef::new(arbiter_id.clone(), "result"),
            to: target.clone(),
        });
    }
    if let Some(goal) = &params.satisfies {
        if model.goal(goal).is_none() {
            return Err(TransformError::UnknownElement(goal.clone()));
        }
        let link = DtGoalLink { dt: arbiter_id.clone(), goal: goal.clone() };
        changes.added.push(link.id());
        model.dt_goal_links.push(link);
    }
    finish(source, model, changes, Vec::new())
}
