//! Static well-formedness and conflict analysis over a model.
//!
//! Diagnostic codes:
//!
//! | code            | severity | meaning                                              |
//! |-----------------|----------|------------------------------------------------------|
//! | `DUP-ID` etc.   | error    | any structural invariant violation (see model module)|
//! | `DT-NO-GOAL`    | warning  | a DT is linked to no goal                             |
//! | `GOAL-UNSATISFIED` | warning | a goal is neither DT-linked nor part of a generalization hierarchy |
//! | `PORT-DANGLING` | warning  | a boundary port touched by no flow on either side     |
//! | `ACT-CONFLICT`  | info     | two or more DTs write the same actuation target       |
//! | `GOAL-CONFLICT` | info     | a conflict relation whose goals' DTs share an unconsolidated target |

use std::collections::BTreeSet;

use crate::model::{
    Direction, GoalEdgeKind, Model, PortRef, PortRole, SystemKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
pub enum Severity {
    Error,
    Warning,
    Info,
}

impl Severity {
    pub fn label(self) -> &'static str {
        match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Info => "info",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: String,
    pub message: String,
    pub elements: Vec<String>,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}[{}]: {}", self.severity.label(), self.code, self.message)
    }
}

/// A control target written by two or more DTs with nothing consolidating
/// their commands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActuationConflict {
    pub actuator: PortRef,
    pub writers: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Resolution {
    NewOutput,
    Chaining,
    Arbitration,
}

impl Resolution {
    pub fn keyword(self) -> &'static str {
        match self {
            Resolution::NewOutput => "new_output",
            Resolution::Chaining => "chaining",
            Resolution::Arbitration => "arbitration",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Advice {
    pub transformation: Resolution,
    pub summary: String,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum AdviseError {
    #[error("stale conflict: `{0}` is no longer present in the model")]
    Stale(String),
}

/// Run every check and return the diagnostics, deterministically ordered.
pub fn validate(model: &Model) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    for v in model.check_invariants() {
        out.push(Diagnostic {
            severity: Severity::Error,
            code: v.code.to_string(),
            message: v.message,
            elements: v.elements,
        });
    }

    let linked_dts: BTreeSet<&str> = model.dt_goal_links.iter().map(|l| l.dt.as_str()).collect();
    for dt in model.all_dts() {
        if !linked_dts.contains(dt.id.as_str()) {
            out.push(Diagnostic {
                severity: Severity::Warning,
                code: "DT-NO-GOAL".into(),
                message: format!("dt `{}` is not linked to any goal", dt.id),
                elements: vec![dt.id.clone()],
            });
        }
    }

    // A goal counts as covered when a DT links to it or when it takes part in
    // a generalization hierarchy (as the general parent or as a refinement of
    // one).
    let linked_goals: BTreeSet<&str> = model.dt_goal_links.iter().map(|l| l.goal.as_str()).collect();
    let in_generalization: BTreeSet<&str> = model
        .goal_edges
        .iter()
        .filter(|e| e.kind == GoalEdgeKind::Generalization)
        .flat_map(|e| [e.source.as_str(), e.target.as_str()])
        .collect();
    for g in &model.goals {
        if !linked_goals.contains(g.id.as_str()) && !in_generalization.contains(g.id.as_str()) {
            out.push(Diagnostic {
                severity: Severity::Warning,
                code: "GOAL-UNSATISFIED".into(),
                message: format!("goal `{}` is not satisfied by any dt", g.id),
                elements: vec![g.id.clone()],
            });
        }
    }

    // Boundary ports must be reached by at least one flow, on either side.
    let mut touched: BTreeSet<String> = BTreeSet::new();
    for sys in model.root_system.systems() {
        for f in &sys.flows {
            touched.insert(f.from.qualified());
            touched.insert(f.to.qualified());
        }
    }
    for sys in model.root_system.systems() {
        for p in &sys.ports {
            let id = format!("{}.{}", sys.id, p.name);
            if !touched.contains(&id) {
                out.push(Diagnostic {
                    severity: Severity::Warning,
                    code: "PORT-DANGLING".into(),
                    message: format!("boundary port `{id}` is reached by no flow"),
                    elements: vec![id],
                });
            }
        }
    }

    let conflicts = detect_actuation_conflicts(model);
    for c in &conflicts {
        out.push(Diagnostic {
            severity: Severity::Info,
            code: "ACT-CONFLICT".into(),
            message: format!(
                "dts {} independently write `{}`; consider new_output, chaining or arbitration",
                c.writers.join(", "),
                c.actuator.qualified()
            ),
            elements: std::iter::once(c.actuator.qualified())
                .chain(c.writers.iter().cloned())
                .collect(),
        });
    }

    // Conflict relations between goals whose DTs share an unconsolidated
    // write target. Conflict edges themselves stay advisory.
    for e in &model.goal_edges {
        if e.kind != GoalEdgeKind::Conflict {
            continue;
        }
        let dts_of = |goal: &str| -> BTreeSet<&str> {
            model
                .dt_goal_links
                .iter()
                .filter(|l| l.goal == goal)
                .map(|l| l.dt.as_str())
                .collect()
        };
        let (a, b) = (dts_of(&e.source), dts_of(&e.target));
        for c in &conflicts {
            let hits_a = c.writers.iter().any(|w| a.contains(w.as_str()));
            let hits_b = c.writers.iter().any(|w| b.contains(w.as_str()));
            if hits_a && hits_b {
                out.push(Diagnostic {
                    severity: Severity::Info,
                    code: "GOAL-CONFLICT".into(),
                    message: format!(
                        "conflicting goals `{}` and `{}` compete for `{}`",
                        e.source,
                        e.target,
                        c.actuator.qualified()
                    ),
                    elements: vec![e.id(), c.actuator.qualified()],
                });
            }
        }
    }

    out.sort_by(|a, b| {
        (a.severity, &a.code, &a.elements, &a.message).cmp(&(
            b.severity,
            &b.code,
            &b.elements,
            &b.message,
        ))
    });
    out
}

/// Targets that count as actuation points: control-role boundary output
/// ports, plus user-role input ports of DTs and of subsystem boundaries
/// (an upstream DT commanding them plays the user's part).
fn actuation_targets(model: &Model) -> Vec<PortRef> {
    let mut out = Vec::new();
    for sys in model.root_system.systems() {
        for p in &sys.ports {
            if p.direction == Direction::Output && p.role == PortRole::Control {
                out.push(PortRef::new(sys.id.clone(), p.name.clone()));
            }
            let is_root = sys.id == model.root_system.id;
            if !is_root
                && sys.kind == SystemKind::TwinSystem
                && p.direction == Direction::Input
                && p.role == PortRole::User
            {
                out.push(PortRef::new(sys.id.clone(), p.name.clone()));
            }
        }
        for dt in &sys.dts {
            for p in &dt.ports {
                if p.direction == Direction::Input && p.role == PortRole::User {
                    out.push(PortRef::new(dt.id.clone(), p.name.clone()));
                }
            }
        }
    }
    out
}

/// One conflict per actuation target with two or more distinct direct
/// writers. Direct means: reachable along flows and forwarding boundary
/// ports with no other DT consolidating the command on the way.
pub fn detect_actuation_conflicts(model: &Model) -> Vec<ActuationConflict> {
    let mut out = Vec::new();
    for target in actuation_targets(model) {
        let Ok(writers) = model.actuator_writers(&target) else { continue };
        if writers.len() >= 2 {
            out.push(ActuationConflict { actuator: target, writers });
        }
    }
    out.sort_by(|a, b| a.actuator.cmp(&b.actuator));
    out
}

/// The resolutions applicable to a conflict: a separate output always works;
/// chaining once a writer can be put upstream of another; arbitration only
/// when all writers emit the same signal unit.
pub fn advise(model: &Model, conflict: &ActuationConflict) -> Result<Vec<Advice>, AdviseError> {
    if model.resolve_port(&conflict.actuator).is_none() {
        return Err(AdviseError::Stale(conflict.actuator.qualified()));
    }
    for w in &conflict.writers {
        if model.dt(w).is_none() {
            return Err(AdviseError::Stale(w.clone()));
        }
    }

    let mut out = Vec::new();
    out.push(Advice {
        transformation: Resolution::NewOutput,
        summary: format!(
            "give one of {} its own output port next to `{}`",
            conflict.writers.join(", "),
            conflict.actuator.qualified()
        ),
    });
    if conflict.writers.len() >= 2 {
        out.push(Advice {
            transformation: Resolution::Chaining,
            summary: format!(
                "pipe one writer through another so `{}` keeps a single writer",
                conflict.actuator.qualified()
            ),
        });
    }
    // Arbitration needs every writer to be able to emit one common unit.
    let mut common: Option<BTreeSet<String>> = None;
    for w in &conflict.writers {
        let Some(dt) = model.dt(w) else { continue };
        let units: BTreeSet<String> = dt.outputs().map(|p| p.signal_unit.clone()).collect();
        common = Some(match common {
            None => units,
            Some(prev) => prev.intersection(&units).cloned().collect(),
        });
    }
    if common.is_some_and(|u| !u.is_empty()) {
        out.push(Advice {
            transformation: Resolution::Arbitration,
            summary: format!(
                "insert an arbiter combining the {} suggestions into one command",
                conflict.writers.len()
            ),
        });
    }
    Ok(out)
}

/// Text report, one line per diagnostic.
pub fn report_text(diagnostics: &[Diagnostic]) -> String {
    let mut out = String::new();
    for d in diagnostics {
        out.push_str(&d.to_string());
        out.push('\n');
    }
    out
}

/// Machine-readable report: one JSON record per line.
pub fn report_records(diagnostics: &[Diagnostic]) -> String {
    let mut out = String::new();
    for d in diagnostics {
        out.push_str(&serde_json::to_string(d).expect("diagnostic serializes"));
        out.push('\n');
    }
    out
}
