//! In-memory representation of a DarTwin model.
//!
//! A [`Model`] is one named frame with a goal layer (goals and the relations
//! between them), an architecture layer (a tree of twin systems holding DTs,
//! ports and flows) and dashed DT-to-goal links crossing the two layers.
//!
//! Models are immutable after construction; every editing operation in this
//! crate rebuilds a fresh value. All collections are kept in canonical sorted
//! order (see [`Model::canonicalize`]) so that structural equality is plain
//! `==` and serialized output is deterministic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::constraint::ConstraintExpr;

/// Units accepted for PoIs and port signals.
pub const UNIT_REGISTRY: &[&str] = &[
    "bool",
    "camera_image",
    "celsius",
    "currency_per_kwh",
    "joules",
    "kinetic_limits",
    "m_per_s",
    "m_per_s2",
    "meters",
    "on_off",
    "position_constraints",
    "rad",
    "rad_per_s",
    "seconds",
    "trajectory",
    "validation_metrics",
    "watts",
];

pub fn is_registered_unit(unit: &str) -> bool {
    UNIT_REGISTRY.contains(&unit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub enum Direction {
    Input,
    Output,
}

impl Direction {
    pub fn keyword(self) -> &'static str {
        match self {
            Direction::Input => "in",
            Direction::Output => "out",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub enum PortRole {
    Monitoring,
    Control,
    User,
    InterDt,
}

impl PortRole {
    pub fn keyword(self) -> &'static str {
        match self {
            PortRole::Monitoring => "monitoring",
            PortRole::Control => "control",
            PortRole::User => "user",
            PortRole::InterDt => "inter_dt",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "monitoring" => Some(PortRole::Monitoring),
            "control" => Some(PortRole::Control),
            "user" => Some(PortRole::User),
            "inter_dt" => Some(PortRole::InterDt),
            _ => None,
        }
    }
}

/// A communication port on a DT or on a system boundary.
///
/// A port's full identifier is `<owner id>.<name>`; the bare name only has to
/// be unique within its owner.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Port {
    pub name: String,
    pub direction: Direction,
    pub role: PortRole,
    pub signal_unit: String,
}

/// Reference to a port as `<owner>.<port>`, where owner is a DT id or a
/// system id (a system's own boundary is written `boundary.<port>` in the
/// textual form and resolved to the enclosing system id here).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortRef {
    pub owner: String,
    pub port: String,
}

impl PortRef {
    pub fn new(owner: impl Into<String>, port: impl Into<String>) -> Self {
        PortRef { owner: owner.into(), port: port.into() }
    }

    /// The qualified element id of the referenced port.
    pub fn qualified(&self) -> String {
        format!("{}.{}", self.owner, self.port)
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.owner, self.port)
    }
}

/// A data flow between two ports within one system scope.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Flow {
    pub from: PortRef,
    pub to: PortRef,
}

impl Flow {
    pub fn id(&self) -> String {
        format!("flow:{}->{}", self.from, self.to)
    }
}

/// Property of interest declared on a goal. Identified by `<goal id>.<name>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Poi {
    pub name: String,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Goal {
    pub id: String,
    pub title: String,
    pub pois: Vec<Poi>,
    pub constraint: Option<ConstraintExpr>,
}

impl Goal {
    pub fn poi(&self, name: &str) -> Option<&Poi> {
        self.pois.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub enum GoalEdgeKind {
    /// Source is the more specific goal, target the general one.
    Generalization,
    PositiveRelation,
    Conflict,
}

impl GoalEdgeKind {
    pub fn keyword(self) -> &'static str {
        match self {
            GoalEdgeKind::Generalization => "generalizes",
            GoalEdgeKind::PositiveRelation => "supports",
            GoalEdgeKind::Conflict => "conflicts",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Combinator {
    Union,
    Strictest,
}

impl Combinator {
    pub fn keyword(self) -> &'static str {
        match self {
            Combinator::Union => "union",
            Combinator::Strictest => "strictest",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalEdge {
    pub kind: GoalEdgeKind,
    pub source: String,
    pub target: String,
    pub label: Option<String>,
    pub combinator: Option<Combinator>,
}

impl GoalEdge {
    pub fn id(&self) -> String {
        format!("edge:{}:{}:{}", self.source, self.kind.keyword(), self.target)
    }
}

/// Digital twin component. The id doubles as the display name.
#[derive(Debug, Clone, PartialEq)]
pub struct Dt {
    pub id: String,
    pub ports: Vec<Port>,
    pub behavior_key: Option<String>,
}

impl Dt {
    pub fn new(id: impl Into<String>) -> Self {
        Dt { id: id.into(), ports: Vec::new(), behavior_key: None }
    }

    pub fn port(&self, name: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &Port> {
        self.ports.iter().filter(|p| p.direction == Direction::Output)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SystemKind {
    TwinSystem,
    ActualTwin,
}

/// A twin system: boundary ports, member DTs, nested subsystems and the flows
/// connecting them. An actual twin is the collapsed stand-in for the real
/// system and carries ports only.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinSystem {
    pub id: String,
    pub name: String,
    pub kind: SystemKind,
    pub ports: Vec<Port>,
    pub dts: Vec<Dt>,
    pub subsystems: Vec<TwinSystem>,
    pub flows: Vec<Flow>,
}

impl TwinSystem {
    pub fn new(name: impl Into<String>, kind: SystemKind) -> Self {
        let name = name.into();
        TwinSystem {
            id: slugify(&name),
            name,
            kind,
            ports: Vec::new(),
            dts: Vec::new(),
            subsystems: Vec::new(),
            flows: Vec::new(),
        }
    }

    pub fn port(&self, name: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.name == name)
    }

    /// Depth-first traversal of this system and all nested subsystems.
    pub fn systems(&self) -> Vec<&TwinSystem> {
        let mut out = vec![self];
        for sub in &self.subsystems {
            out.extend(sub.systems());
        }
        out
    }

    fn find_system_mut(&mut self, id: &str) -> Option<&mut TwinSystem> {
        if self.id == id {
            return Some(self);
        }
        self.subsystems.iter_mut().find_map(|sub| sub.find_system_mut(id))
    }

    fn find_dt_mut(&mut self, id: &str) -> Option<&mut Dt> {
        if let Some(dt) = self.dts.iter_mut().find(|d| d.id == id) {
            return Some(dt);
        }
        self.subsystems.iter_mut().find_map(|sub| sub.find_dt_mut(id))
    }
}

/// Derive a stable identifier from a display name: every run of characters
/// outside `[A-Za-z0-9_]` becomes a single underscore.
pub fn slugify(name: &str) -> String {
    let mut out = String::new();
    let mut gap = false;
    for c in name.chars() {
        if c.is_ascii_alphanumeric() || c == '_' {
            if gap && !out.is_empty() {
                out.push('_');
            }
            gap = false;
            out.push(c);
        } else {
            gap = true;
        }
    }
    if out.is_empty() {
        out.push('_');
    }
    if out.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        out.insert(0, '_');
    }
    out
}

/// Dashed relation between a DT and the goal it helps satisfy.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DtGoalLink {
    pub dt: String,
    pub goal: String,
}

impl DtGoalLink {
    pub fn id(&self) -> String {
        format!("link:{}:{}", self.dt, self.goal)
    }
}

/// One named DarTwin frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub name: String,
    pub extends_name: Option<String>,
    pub goals: Vec<Goal>,
    pub goal_edges: Vec<GoalEdge>,
    pub root_system: TwinSystem,
    pub dt_goal_links: Vec<DtGoalLink>,
}

/// Borrowed view of one element of a model, paired with its id by
/// [`Model::elements`].
#[derive(Debug, Clone, Copy)]
pub enum ElementRef<'a> {
    Goal(&'a Goal),
    GoalEdge(&'a GoalEdge),
    System(&'a TwinSystem),
    Dt(&'a Dt),
    /// `owner` is the id of the DT or system carrying the port.
    Port { owner: &'a str, port: &'a Port },
    /// `system` is the system whose scope declares the flow.
    Flow { system: &'a TwinSystem, flow: &'a Flow },
    Link(&'a DtGoalLink),
}

impl<'a> ElementRef<'a> {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ElementRef::Goal(_) => "goal",
            ElementRef::GoalEdge(_) => "relation",
            ElementRef::System(_) => "system",
            ElementRef::Dt(_) => "dt",
            ElementRef::Port { .. } => "port",
            ElementRef::Flow { .. } => "flow",
            ElementRef::Link(_) => "link",
        }
    }
}

/// Violation of a structural invariant, reported by [`Model::check_invariants`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantViolation {
    pub code: &'static str,
    pub message: String,
    pub elements: Vec<String>,
}

impl InvariantViolation {
    fn new(code: &'static str, message: String, elements: Vec<String>) -> Self {
        InvariantViolation { code, message, elements }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown port id `{0}`")]
    UnknownPort(String),
    #[error("unknown element id `{0}`")]
    UnknownElement(String),
}

impl Model {
    pub fn new(name: impl Into<String>, root_system: TwinSystem) -> Self {
        Model {
            name: name.into(),
            extends_name: None,
            goals: Vec::new(),
            goal_edges: Vec::new(),
            root_system,
            dt_goal_links: Vec::new(),
        }
    }

    /// Sort every collection into canonical order. Structural equality and
    /// serialization both assume canonicalized models.
    pub fn canonicalize(&mut self) {
        self.goals.sort_by(|a, b| a.id.cmp(&b.id));
        for g in &mut self.goals {
            g.pois.sort();
        }
        self.goal_edges
            .sort_by(|a, b| (&a.source, a.kind, &a.target).cmp(&(&b.source, b.kind, &b.target)));
        self.dt_goal_links.sort();
        canonicalize_system(&mut self.root_system);
    }

    /// All elements of the model as `(id, element)` pairs, in a fixed order:
    /// goals, goal edges, links, then the system tree (each system followed by
    /// its ports, DTs with their ports, subsystems, and its flows).
    pub fn elements(&self) -> Vec<(String, ElementRef<'_>)> {
        let mut out: Vec<(String, ElementRef<'_>)> = Vec::new();
        for g in &self.goals {
            out.push((g.id.clone(), ElementRef::Goal(g)));
        }
        for e in &self.goal_edges {
            out.push((e.id(), ElementRef::GoalEdge(e)));
        }
        for l in &self.dt_goal_links {
            out.push((l.id(), ElementRef::Link(l)));
        }
        collect_system_elements(&self.root_system, &mut out);
        out
    }

    /// Look up any element by id; `None` on a miss.
    pub fn find_element(&self, id: &str) -> Option<ElementRef<'_>> {
        self.elements().into_iter().find(|(eid, _)| eid == id).map(|(_, e)| e)
    }

    pub fn all_dts(&self) -> Vec<&Dt> {
        self.root_system.systems().into_iter().flat_map(|s| s.dts.iter()).collect()
    }

    pub fn dt(&self, id: &str) -> Option<&Dt> {
        self.all_dts().into_iter().find(|d| d.id == id)
    }

    pub fn goal(&self, id: &str) -> Option<&Goal> {
        self.goals.iter().find(|g| g.id == id)
    }

    pub fn system(&self, id: &str) -> Option<&TwinSystem> {
        self.root_system.systems().into_iter().find(|s| s.id == id)
    }

    pub(crate) fn system_mut(&mut self, id: &str) -> Option<&mut TwinSystem> {
        self.root_system.find_system_mut(id)
    }

    pub(crate) fn dt_mut(&mut self, id: &str) -> Option<&mut Dt> {
        self.root_system.find_dt_mut(id)
    }

    /// The system that directly contains the element (DT or subsystem) with
    /// the given id, if any.
    pub fn parent_system_of(&self, id: &str) -> Option<&TwinSystem> {
        self.root_system.systems().into_iter().find(|s| {
            s.dts.iter().any(|d| d.id == id) || s.subsystems.iter().any(|c| c.id == id)
        })
    }

    /// Resolve a port reference to its port, regardless of owner kind.
    pub fn resolve_port(&self, r: &PortRef) -> Option<&Port> {
        if let Some(dt) = self.dt(&r.owner) {
            return dt.port(&r.port);
        }
        self.system(&r.owner).and_then(|s| s.port(&r.port))
    }

    /// All goals reachable from `goal` via generalization edges toward the
    /// general end (excluding `goal` itself).
    pub fn generalization_ancestors(&self, goal: &str) -> Vec<&Goal> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![goal.to_string()];
        let mut out = Vec::new();
        while let Some(g) = stack.pop() {
            for e in &self.goal_edges {
                if e.kind == GoalEdgeKind::Generalization && e.source == g
                    && seen.insert(e.target.clone())
                {
                    if let Some(parent) = self.goal(&e.target) {
                        out.push(parent);
                    }
                    stack.push(e.target.clone());
                }
            }
        }
        out
    }

    /// Every DT whose output reaches the given port along flows, traversing
    /// forwarding boundary ports but never passing through another DT.
    pub fn actuator_writers(&self, target: &PortRef) -> Result<Vec<String>, ModelError> {
        if self.resolve_port(target).is_none() {
            return Err(ModelError::UnknownPort(target.qualified()));
        }
        let owners = self.port_owner_kinds();
        let mut writers = BTreeSet::new();
        let mut seen = BTreeSet::new();
        let mut stack = vec![target.clone()];
        while let Some(p) = stack.pop() {
            if !seen.insert(p.clone()) {
                continue;
            }
            for sys in self.root_system.systems() {
                for f in &sys.flows {
                    if f.to != p {
                        continue;
                    }
                    match owners.get(f.from.owner.as_str()) {
                        Some(OwnerKind::Dt) => {
                            writers.insert(f.from.owner.clone());
                        }
                        // System boundary ports forward; keep walking.
                        Some(OwnerKind::System) => stack.push(f.from.clone()),
                        None => {}
                    }
                }
            }
        }
        Ok(writers.into_iter().collect())
    }

    fn port_owner_kinds(&self) -> BTreeMap<&str, OwnerKind> {
        let mut map = BTreeMap::new();
        for sys in self.root_system.systems() {
            map.insert(sys.id.as_str(), OwnerKind::System);
            for dt in &sys.dts {
                map.insert(dt.id.as_str(), OwnerKind::Dt);
            }
        }
        map
    }

    /// Check every structural invariant and return all violations.
    pub fn check_invariants(&self) -> Vec<InvariantViolation> {
        let mut out = Vec::new();
        self.check_unique_ids(&mut out);
        self.check_goals(&mut out);
        self.check_goal_edges(&mut out);
        self.check_links(&mut out);
        self.check_systems(&mut out);
        self.check_flows(&mut out);
        out
    }

    fn check_unique_ids(&self, out: &mut Vec<InvariantViolation>) {
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (id, _) in self.elements() {
            *seen.entry(id).or_insert(0) += 1;
        }
        for (id, n) in seen {
            if n > 1 {
                out.push(InvariantViolation::new(
                    "DUP-ID",
                    format!("identifier `{id}` is declared {n} times"),
                    vec![id],
                ));
            }
        }
    }

    fn check_goals(&self, out: &mut Vec<InvariantViolation>) {
        for g in &self.goals {
            if g.pois.is_empty() {
                out.push(InvariantViolation::new(
                    "GOAL-NO-POI",
                    format!("goal `{}` must declare at least one poi", g.id),
                    vec![g.id.clone()],
                ));
            }
            let mut names = BTreeSet::new();
            for p in &g.pois {
                if !names.insert(&p.name) {
                    out.push(InvariantViolation::new(
                        "DUP-POI",
                        format!("goal `{}` declares poi `{}` more than once", g.id, p.name),
                        vec![g.id.clone()],
                    ));
                }
                if !is_registered_unit(&p.unit) {
                    out.push(InvariantViolation::new(
                        "BAD-UNIT",
                        format!("poi `{}.{}` uses unregistered unit `{}`", g.id, p.name, p.unit),
                        vec![g.id.clone()],
                    ));
                }
            }
            if let Some(c) = &g.constraint {
                let mut visible: BTreeSet<&str> =
                    g.pois.iter().map(|p| p.name.as_str()).collect();
                for anc in self.generalization_ancestors(&g.id) {
                    visible.extend(anc.pois.iter().map(|p| p.name.as_str()));
                }
                for name in c.referenced_pois() {
                    if !visible.contains(name.as_str()) {
                        out.push(InvariantViolation::new(
                            "CONSTRAINT-POI",
                            format!(
                                "constraint of goal `{}` references undeclared poi `{}`",
                                g.id, name
                            ),
                            vec![g.id.clone()],
                        ));
                    }
                }
            }
        }
    }

    fn check_goal_edges(&self, out: &mut Vec<InvariantViolation>) {
        for e in &self.goal_edges {
            if e.source == e.target {
                out.push(InvariantViolation::new(
                    "EDGE-SELF",
                    format!("relation `{}` connects a goal to itself", e.id()),
                    vec![e.id()],
                ));
            }
            for g in [&e.source, &e.target] {
                if self.goal(g).is_none() {
                    out.push(InvariantViolation::new(
                        "DANGLING-REF",
                        format!("relation `{}` names unknown goal `{g}`", e.id()),
                        vec![e.id()],
                    ));
                }
            }
        }
        // Generalization acyclicity by depth-first search for a back edge.
        let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &self.goal_edges {
            if e.kind == GoalEdgeKind::Generalization {
                adj.entry(e.source.as_str()).or_default().push(e.target.as_str());
            }
        }
        let mut done: BTreeSet<&str> = BTreeSet::new();
        for g in adj.keys().copied().collect::<Vec<_>>() {
            let mut path: Vec<&str> = Vec::new();
            if has_cycle(g, &adj, &mut path, &mut done) {
                out.push(InvariantViolation::new(
                    "GOAL-EDGE-CYCLE",
                    format!("generalization cycle through goal `{g}`"),
                    vec![g.to_string()],
                ));
            }
        }
    }

    fn check_links(&self, out: &mut Vec<InvariantViolation>) {
        for l in &self.dt_goal_links {
            if self.dt(&l.dt).is_none() {
                out.push(InvariantViolation::new(
                    "DANGLING-REF",
                    format!("link `{}` names unknown dt `{}`", l.id(), l.dt),
                    vec![l.id()],
                ));
            }
            if self.goal(&l.goal).is_none() {
                out.push(InvariantViolation::new(
                    "DANGLING-REF",
                    format!("link `{}` names unknown goal `{}`", l.id(), l.goal),
                    vec![l.id()],
                ));
            }
        }
    }

    fn check_systems(&self, out: &mut Vec<InvariantViolation>) {
        for sys in self.root_system.systems() {
            if sys.kind == SystemKind::ActualTwin
                && (!sys.dts.is_empty() || !sys.subsystems.is_empty())
            {
                out.push(InvariantViolation::new(
                    "AT-NONEMPTY",
                    format!("actual twin `{}` must not contain dts or subsystems", sys.id),
                    vec![sys.id.clone()],
                ));
            }
            for owner in std::iter::once((sys.id.as_str(), &sys.ports))
                .chain(sys.dts.iter().map(|d| (d.id.as_str(), &d.ports)))
            {
                let mut names = BTreeSet::new();
                for p in owner.1 {
                    if !names.insert(&p.name) {
                        out.push(InvariantViolation::new(
                            "DUP-PORT",
                            format!("`{}` declares port `{}` more than once", owner.0, p.name),
                            vec![owner.0.to_string()],
                        ));
                    }
                    if !is_registered_unit(&p.signal_unit) {
                        out.push(InvariantViolation::new(
                            "BAD-UNIT",
                            format!(
                                "port `{}.{}` uses unregistered unit `{}`",
                                owner.0, p.name, p.signal_unit
                            ),
                            vec![format!("{}.{}", owner.0, p.name)],
                        ));
                    }
                }
            }
        }
    }

    fn check_flows(&self, out: &mut Vec<InvariantViolation>) {
        for sys in self.root_system.systems() {
            for f in &sys.flows {
                let Some((from_port, from_is_boundary)) = resolve_in_scope(sys, &f.from) else {
                    out.push(InvariantViolation::new(
                        "FLOW-LOCALITY",
                        format!(
                            "flow `{}` endpoint `{}` does not resolve within system `{}`",
                            f.id(),
                            f.from,
                            sys.id
                        ),
                        vec![f.id()],
                    ));
                    continue;
                };
                let Some((to_port, to_is_boundary)) = resolve_in_scope(sys, &f.to) else {
                    out.push(InvariantViolation::new(
                        "FLOW-LOCALITY",
                        format!(
                            "flow `{}` endpoint `{}` does not resolve within system `{}`",
                            f.id(),
                            f.to,
                            sys.id
                        ),
                        vec![f.id()],
                    ));
                    continue;
                };
                // A boundary input port is a source for the inside of its
                // system; a boundary output port is a sink.
                let from_ok = if from_is_boundary {
                    from_port.direction == Direction::Input
                } else {
                    from_port.direction == Direction::Output
                };
                let to_ok = if to_is_boundary {
                    to_port.direction == Direction::Output
                } else {
                    to_port.direction == Direction::Input
                };
                if !from_ok || !to_ok {
                    out.push(InvariantViolation::new(
                        "FLOW-DIRECTION",
                        format!("flow `{}` does not run from a source to a sink", f.id()),
                        vec![f.id()],
                    ));
                }
                if from_port.signal_unit != to_port.signal_unit {
                    out.push(InvariantViolation::new(
                        "FLOW-UNIT",
                        format!(
                            "flow `{}` connects unit `{}` to unit `{}`",
                            f.id(),
                            from_port.signal_unit,
                            to_port.signal_unit
                        ),
                        vec![f.id()],
                    ));
                }
            }
        }
    }
}

enum OwnerKind {
    Dt,
    System,
}

/// Resolve a flow endpoint within the scope of `sys`: the system's own
/// boundary, a direct child DT, or a direct child subsystem's boundary.
/// Returns the port and whether it sits on `sys`'s own boundary.
fn resolve_in_scope<'a>(sys: &'a TwinSystem, r: &PortRef) -> Option<(&'a Port, bool)> {
    if r.owner == sys.id {
        return sys.port(&r.port).map(|p| (p, true));
    }
    if let Some(dt) = sys.dts.iter().find(|d| d.id == r.owner) {
        return dt.port(&r.port).map(|p| (p, false));
    }
    if let Some(sub) = sys.subsystems.iter().find(|s| s.id == r.owner) {
        // The child's boundary seen from outside: inputs are sinks, outputs
        // are sources, i.e. the opposite of the boundary view, which is what
        // the plain (non-boundary) reading already expresses.
        return sub.port(&r.port).map(|p| (p, false));
    }
    None
}

fn has_cycle<'a>(
    node: &'a str,
    adj: &BTreeMap<&'a str, Vec<&'a str>>,
    path: &mut Vec<&'a str>,
    done: &mut BTreeSet<&'a str>,
) -> bool {
    if path.contains(&node) {
        return true;
    }
    if done.contains(node) {
        return false;
    }
    path.push(node);
    let cyclic = adj
        .get(node)
        .map(|next| next.iter().any(|n| has_cycle(n, adj, path, done)))
        .unwrap_or(false);
    path.pop();
    done.insert(node);
    cyclic
}

fn canonicalize_system(sys: &mut TwinSystem) {
    sys.ports.sort_by(|a, b| a.name.cmp(&b.name));
    sys.dts.sort_by(|a, b| a.id.cmp(&b.id));
    for dt in &mut sys.dts {
        dt.ports.sort_by(|a, b| a.name.cmp(&b.name));
    }
    sys.subsystems.sort_by(|a, b| a.id.cmp(&b.id));
    for sub in &mut sys.subsystems {
        canonicalize_system(sub);
    }
    sys.flows.sort();
}

fn collect_system_elements<'a>(sys: &'a TwinSystem, out: &mut Vec<(String, ElementRef<'a>)>) {
    out.push((sys.id.clone(), ElementRef::System(sys)));
    for p in &sys.ports {
        out.push((format!("{}.{}", sys.id, p.name), ElementRef::Port { owner: &sys.id, port: p }));
    }
    for dt in &sys.dts {
        out.push((dt.id.clone(), ElementRef::Dt(dt)));
        for p in &dt.ports {
            out.push((
                format!("{}.{}", dt.id, p.name),
                ElementRef::Port { owner: &dt.id, port: p },
            ));
        }
    }
    for sub in &sys.subsystems {
        collect_system_elements(sub, out);
    }
    for f in &sys.flows {
        out.push((f.id(), ElementRef::Flow { system: sys, flow: f }));
    }
}
