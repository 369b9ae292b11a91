//! DOT output for a model, with optional change highlighting.
//!
//! Goals form a cluster above the system clusters, mirroring the horizontal
//! separator of the notation. Every element id appears exactly once as a node
//! name, a `cluster_<id>` subgraph name or an edge `id` attribute, so tooling
//! can map the drawing back onto the model. Output is byte-deterministic for
//! equal inputs.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::model::{GoalEdgeKind, Model, SystemKind, TwinSystem};
use crate::transform::ChangeSet;

pub const HIGHLIGHT_COLOR: &str = "orange";

#[derive(Debug, Clone, Default)]
pub struct RenderOptions {
    /// Elements added or modified by this change set get the highlight color.
    pub highlight: Option<ChangeSet>,
    pub show_goal_layer: bool,
    pub collapse_actual_twins: bool,
}

impl RenderOptions {
    pub fn standard() -> Self {
        RenderOptions { highlight: None, show_goal_layer: true, collapse_actual_twins: false }
    }
}

pub fn render_dot(model: &Model, options: &RenderOptions) -> String {
    let mut model = model.clone();
    model.canonicalize();
    let highlighted: BTreeSet<&String> = options
        .highlight
        .as_ref()
        .map(|cs| cs.highlighted().collect())
        .unwrap_or_default();
    let mark = |id: &str| -> String {
        if highlighted.contains(&id.to_string()) {
            format!(", color=\"{HIGHLIGHT_COLOR}\", fontcolor=\"{HIGHLIGHT_COLOR}\"")
        } else {
            String::new()
        }
    };

    let mut out = String::new();
    writeln!(out, "digraph \"{}\" {{", escape(&model.name)).unwrap();
    writeln!(out, "  rankdir=TB;").unwrap();
    writeln!(out, "  compound=true;").unwrap();
    writeln!(out, "  node [fontname=\"Helvetica\"];").unwrap();

    if options.show_goal_layer {
        writeln!(out, "  subgraph \"cluster_goals\" {{").unwrap();
        writeln!(out, "    label=\"goals\";").unwrap();
        writeln!(out, "    style=invis;").unwrap();
        for g in &model.goals {
            let mut label = escape(&g.title);
            for p in &g.pois {
                label.push_str(&format!("\\n{}: {}", escape(&p.name), escape(&p.unit)));
            }
            if let Some(c) = &g.constraint {
                label.push_str(&format!("\\n{}", escape(&c.to_string())));
            }
            writeln!(out, "    \"{}\" [shape=trapezium, label=\"{label}\"{}];", g.id, mark(&g.id))
                .unwrap();
        }
        writeln!(out, "  }}").unwrap();
    }

    render_system(&mut out, &model.root_system, options, &mark, 1);

    for sys in model.root_system.systems() {
        for f in &sys.flows {
            let id = f.id();
            writeln!(
                out,
                "  \"{}\" -> \"{}\" [id=\"{}\"{}];",
                f.from.qualified(),
                f.to.qualified(),
                escape(&id),
                mark(&id)
            )
            .unwrap();
        }
    }
    if options.show_goal_layer {
        for e in &model.goal_edges {
            let id = e.id();
            let style = match e.kind {
                GoalEdgeKind::Generalization => "arrowhead=onormal",
                GoalEdgeKind::PositiveRelation => "arrowhead=vee",
                GoalEdgeKind::Conflict => "dir=both, arrowhead=normal, arrowtail=normal",
            };
            let mut attrs = format!("id=\"{}\", {style}", escape(&id));
            if let Some(label) = &e.label {
                attrs.push_str(&format!(", label=\"{}\"", escape(label)));
            }
            if let Some(c) = e.combinator {
                attrs.push_str(&format!(", taillabel=\"{}\"", c.keyword()));
            }
            writeln!(out, "  \"{}\" -> \"{}\" [{attrs}{}];", e.source, e.target, mark(&id))
                .unwrap();
        }
        for l in &model.dt_goal_links {
            let id = l.id();
            writeln!(
                out,
                "  \"{}\" -> \"{}\" [style=dashed, id=\"{}\"{}];",
                l.dt,
                l.goal,
                escape(&id),
                mark(&id)
            )
            .unwrap();
        }
    }
    writeln!(out, "}}").unwrap();
    out
}

fn render_system(
    out: &mut String,
    sys: &TwinSystem,
    options: &RenderOptions,
    mark: &dyn Fn(&str) -> String,
    depth: usize,
) {
    let pad = "  ".repeat(depth);
    if sys.kind == SystemKind::ActualTwin && options.collapse_actual_twins {
        // Collapsed view: one plain node standing in for the whole system.
        writeln!(
            out,
            "{pad}\"{}\" [shape=box, label=\"{} (AT)\"{}];",
            sys.id,
            escape(&sys.name),
            mark(&sys.id)
        )
        .unwrap();
        for p in &sys.ports {
            let id = format!("{}.{}", sys.id, p.name);
            writeln!(
                out,
                "{pad}\"{id}\" [shape=cds, height=0.2, label=\"{}\"{}];",
                escape(&p.name),
                mark(&id)
            )
            .unwrap();
        }
        return;
    }
    let kind_label = match sys.kind {
        SystemKind::TwinSystem => "twin system",
        SystemKind::ActualTwin => "at",
    };
    writeln!(out, "{pad}subgraph \"cluster_{}\" {{", sys.id).unwrap();
    writeln!(out, "{pad}  label=\"{kind_label} {}\";", escape(&sys.name)).unwrap();
    writeln!(out, "{pad}  style=rounded;").unwrap();
    // Anchor node so the system id itself is addressable (and paintable).
    writeln!(out, "{pad}  \"{}\" [shape=point, style=invis{}];", sys.id, mark(&sys.id)).unwrap();
    for p in &sys.ports {
        let id = format!("{}.{}", sys.id, p.name);
        writeln!(
            out,
            "{pad}  \"{id}\" [shape=cds, height=0.2, label=\"{}\"{}];",
            escape(&p.name),
            mark(&id)
        )
        .unwrap();
    }
    for dt in &sys.dts {
        writeln!(
            out,
            "{pad}  \"{}\" [shape=box, style=rounded, label=\"{}\"{}];",
            dt.id,
            escape(&dt.id),
            mark(&dt.id)
        )
        .unwrap();
        for p in &dt.ports {
            let id = format!("{}.{}", dt.id, p.name);
            writeln!(
                out,
                "{pad}  \"{id}\" [shape=cds, height=0.15, label=\"{}\"{}];",
                escape(&p.name),
                mark(&id)
            )
            .unwrap();
        }
    }
    for sub in &sys.subsystems {
        render_system(out, sub, options, mark, depth + 1);
    }
    writeln!(out, "{pad}}}").unwrap();
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
