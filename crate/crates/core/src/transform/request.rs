//! Textual form of a transformation request, shared by the command line and
//! the C bindings.
//!
//! A request is a transformation kind plus named parameters. Parameters
//! holding model elements use the same syntax as `.dartwin` files, e.g.
//! `dt: dt FreezeProtection { in temp: celsius [monitoring] ... }`.

use std::collections::BTreeMap;

use crate::model::{Dt, Flow, Goal, GoalEdge, Model, Port, PortRef};
use crate::parser::{
    parse_dt_fragment, parse_flow_fragment, parse_goal_fragment, parse_pathref_fragment,
    parse_port_fragment, parse_relation_fragment,
};

use super::{
    apply_arbitration, apply_augmented, apply_basic, apply_chaining, apply_hierarchical,
    apply_new_output, apply_orthogonal, flatten, ArbitrationParams, AugmentedParams, BasicSpec,
    ChainingParams, ChangeSet, GoalLayer, HierarchicalParams, NewOutputParams, OrthogonalParams,
    TransformError, TransformOutcome,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    Basic,
    Hierarchical,
    Augmented,
    Orthogonal,
    NewOutput,
    Chaining,
    Arbitration,
    Flatten,
}

impl TransformKind {
    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "basic" => TransformKind::Basic,
            "hierarchical" => TransformKind::Hierarchical,
            "augmented" => TransformKind::Augmented,
            "orthogonal" => TransformKind::Orthogonal,
            "new_output" => TransformKind::NewOutput,
            "chaining" => TransformKind::Chaining,
            "arbitration" => TransformKind::Arbitration,
            "flatten" => TransformKind::Flatten,
            _ => return None,
        })
    }

    pub fn keyword(self) -> &'static str {
        match self {
            TransformKind::Basic => "basic",
            TransformKind::Hierarchical => "hierarchical",
            TransformKind::Augmented => "augmented",
            TransformKind::Orthogonal => "orthogonal",
            TransformKind::NewOutput => "new_output",
            TransformKind::Chaining => "chaining",
            TransformKind::Arbitration => "arbitration",
            TransformKind::Flatten => "flatten",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransformRequest {
    pub kind: TransformKind,
    /// Repeatable named parameters.
    pub params: BTreeMap<String, Vec<String>>,
}

impl TransformRequest {
    pub fn new(kind: TransformKind) -> Self {
        TransformRequest { kind, params: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.params.entry(key.to_string()).or_default().push(value.into());
        self
    }

    /// Parse the line-oriented form: `kind: chaining`, then one `key: value`
    /// line per parameter; repeated keys accumulate.
    pub fn from_lines(text: &str) -> Result<Self, TransformError> {
        let mut kind = None;
        let mut params: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            let Some((key, value)) = line.split_once(':') else {
                return Err(TransformError::BadParameter {
                    key: line.to_string(),
                    message: "expected `key: value`".into(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if key == "kind" {
                kind = Some(TransformKind::from_keyword(value).ok_or_else(|| {
                    TransformError::BadParameter {
                        key: "kind".into(),
                        message: format!("unknown transformation `{value}`"),
                    }
                })?);
            } else {
                params.entry(key.to_string()).or_default().push(value.to_string());
            }
        }
        let kind = kind.ok_or(TransformError::MissingParameter("kind".into()))?;
        Ok(TransformRequest { kind, params })
    }

    fn one(&self, key: &str) -> Result<&str, TransformError> {
        match self.params.get(key).map(Vec::as_slice) {
            Some([value]) => Ok(value),
            Some([]) | None => Err(TransformError::MissingParameter(key.to_string())),
            Some(_) => Err(TransformError::BadParameter {
                key: key.to_string(),
                message: "given more than once".into(),
            }),
        }
    }

    fn opt(&self, key: &str) -> Option<&str> {
        self.params.get(key).and_then(|v| v.first()).map(String::as_str)
    }

    fn many(&self, key: &str) -> &[String] {
        self.params.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    fn goals(&self) -> Result<Vec<Goal>, TransformError> {
        self.many("goal").iter().map(|s| bad("goal", parse_goal_fragment(s))).collect()
    }

    fn relations(&self) -> Result<Vec<GoalEdge>, TransformError> {
        self.many("relation").iter().map(|s| bad("relation", parse_relation_fragment(s))).collect()
    }

    fn ports(&self, key: &str) -> Result<Vec<Port>, TransformError> {
        self.many(key).iter().map(|s| bad(key, parse_port_fragment(s))).collect()
    }

    fn flows(&self, key: &str) -> Result<Vec<Flow>, TransformError> {
        self.many(key).iter().map(|s| bad(key, parse_flow_fragment(s))).collect()
    }

    fn dt(&self) -> Result<(Dt, Vec<String>), TransformError> {
        bad("dt", parse_dt_fragment(self.one("dt")?))
    }

    /// Apply the request. Every kind except `basic` needs a source model.
    pub fn apply(&self, source: Option<&Model>) -> Result<TransformOutcome, TransformError> {
        if self.kind == TransformKind::Basic {
            return self.apply_basic_request();
        }
        let source = source.ok_or_else(|| {
            TransformError::Precondition("this transformation needs an input model".into())
        })?;
        match self.kind {
            TransformKind::Basic => unreachable!(),
            TransformKind::Hierarchical => {
                let (new_dt, satisfies) = self.dt()?;
                apply_hierarchical(
                    source,
                    &HierarchicalParams {
                        model_name: self.opt("name").map(String::from),
                        system_name: self.one("system")?.to_string(),
                        new_dt,
                        goal_layer: GoalLayer {
                            goals: self.goals()?,
                            edges: self.relations()?,
                            satisfies,
                        },
                        new_boundary_ports: self.ports("port")?,
                        boundary_flows: self.flows("flow")?,
                        parameter_bindings: self.flows("bind")?,
                    },
                )
            }
            TransformKind::Flatten => {
                let out = flatten(source, self.one("system")?)?;
                Ok(rename(out, self.opt("name")))
            }
            TransformKind::Augmented => {
                let (new_dt, satisfies) = self.dt()?;
                let mut added_ports = Vec::new();
                for s in self.many("dtport") {
                    let (dt_id, port) = s.split_once(' ').ok_or_else(|| {
                        TransformError::BadParameter {
                            key: "dtport".into(),
                            message: "expected `<dt id> <port declaration>`".into(),
                        }
                    })?;
                    added_ports.push((dt_id.trim().to_string(), bad("dtport", parse_port_fragment(port))?));
                }
                let out = apply_augmented(
                    source,
                    &AugmentedParams {
                        new_dt,
                        goal_layer: GoalLayer {
                            goals: self.goals()?,
                            edges: self.relations()?,
                            satisfies,
                        },
                        new_boundary_ports: self.ports("port")?,
                        added_ports,
                        flows: self.flows("flow")?,
                    },
                )?;
                Ok(rename(out, self.opt("name")))
            }
            TransformKind::Orthogonal => {
                let (new_dt, satisfies) = self.dt()?;
                let out = apply_orthogonal(
                    source,
                    &OrthogonalParams {
                        new_dt,
                        goal_layer: GoalLayer {
                            goals: self.goals()?,
                            edges: self.relations()?,
                            satisfies,
                        },
                        bindings: self.flows("bind")?,
                    },
                )?;
                Ok(rename(out, self.opt("name")))
            }
            TransformKind::NewOutput => {
                let out = apply_new_output(
                    source,
                    &NewOutputParams {
                        dt: self.one("dt")?.to_string(),
                        new_port: bad("port", parse_port_fragment(self.one("port")?))?,
                        reroute_from: self.opt("from").map(String::from),
                        output: self.opt("output").map(String::from),
                    },
                )?;
                Ok(rename(out, self.opt("name")))
            }
            TransformKind::Chaining => {
                let out = apply_chaining(
                    source,
                    &ChainingParams {
                        upstream: self.one("upstream")?.to_string(),
                        downstream: self.one("downstream")?.to_string(),
                        signal_unit: self.one("signal")?.to_string(),
                        port_name: self.opt("port_name").map(String::from),
                    },
                )?;
                Ok(rename(out, self.opt("name")))
            }
            TransformKind::Arbitration => {
                let target: PortRef = bad("target", parse_pathref_fragment(self.one("target")?))?;
                let port_spec = |key: &str| -> Result<Option<Port>, TransformError> {
                    self.opt(key).map(|s| bad(key, parse_port_fragment(s))).transpose()
                };
                let out = apply_arbitration(
                    source,
                    &ArbitrationParams {
                        writer_a: self.one("writer_a")?.to_string(),
                        writer_b: self.one("writer_b")?.to_string(),
                        target,
                        rule_key: self.one("rule")?.to_string(),
                        arbiter_name: self.opt("arbiter").map(String::from),
                        satisfies: self.opt("satisfies").map(String::from),
                        writer_a_output: port_spec("writer_a_port")?,
                        writer_b_output: port_spec("writer_b_port")?,
                        target_port: port_spec("target_port")?,
                    },
                )?;
                Ok(rename(out, self.opt("name")))
            }
        }
    }

    fn apply_basic_request(&self) -> Result<TransformOutcome, TransformError> {
        let (dt, satisfies) = self.dt()?;
        let model = apply_basic(&BasicSpec {
            model_name: self.one("name")?.to_string(),
            system_name: self.one("system")?.to_string(),
            goals: self.goals()?,
            goal_edges: self.relations()?,
            dt,
            satisfies,
            boundary_ports: self.ports("port")?,
            flows: self.flows("flow")?,
        })?;
        // Everything in a freshly built model counts as added.
        let mut changes = ChangeSet {
            added: model.elements().into_iter().map(|(id, _)| id).collect(),
            ..ChangeSet::default()
        };
        changes.sort();
        Ok(TransformOutcome { model, changes, warnings: Vec::new() })
    }
}

fn rename(mut out: TransformOutcome, name: Option<&str>) -> TransformOutcome {
    if let Some(name) = name {
        out.model.name = name.to_string();
    }
    out
}

fn bad<T>(key: &str, r: Result<T, String>) -> Result<T, TransformError> {
    r.map_err(|message| TransformError::BadParameter { key: key.to_string(), message })
}
