//! Canonical text form of a model.
//!
//! Elements are emitted by declaration category and sorted by id within each
//! category, producing a fixed point: serializing a parse of the output
//! yields the output again, byte for byte. Output always uses LF.

use std::fmt::Write;

use crate::model::{Dt, Model, SystemKind, TwinSystem};

pub fn serialize_model(model: &Model) -> String {
    let mut model = model.clone();
    model.canonicalize();
    let mut out = String::new();
    write!(out, "dartwin \"{}\"", model.name).unwrap();
    if let Some(parent) = &model.extends_name {
        write!(out, " extends \"{parent}\"").unwrap();
    }
    out.push_str(" {\n");
    for g in &model.goals {
        writeln!(out, "  goal {} {{", g.id).unwrap();
        writeln!(out, "    title \"{}\"", g.title).unwrap();
        for p in &g.pois {
            writeln!(out, "    poi {}: {}", p.name, p.unit).unwrap();
        }
        if let Some(c) = &g.constraint {
            writeln!(out, "    constraint \"{c}\"").unwrap();
        }
        out.push_str("  }\n");
    }
    for e in &model.goal_edges {
        write!(out, "  relation {} {} {}", e.source, e.kind.keyword(), e.target).unwrap();
        if let Some(label) = &e.label {
            write!(out, " label \"{label}\"").unwrap();
        }
        if let Some(c) = e.combinator {
            write!(out, " combinator {}", c.keyword()).unwrap();
        }
        out.push('\n');
    }
    write_system(&mut out, &model, &model.root_system, 1);
    out.push_str("}\n");
    out
}

fn write_system(out: &mut String, model: &Model, sys: &TwinSystem, depth: usize) {
    let pad = "  ".repeat(depth);
    let keyword = match sys.kind {
        SystemKind::TwinSystem => "system",
        SystemKind::ActualTwin => "at",
    };
    writeln!(out, "{pad}{keyword} \"{}\" {{", sys.name).unwrap();
    write_ports(out, &sys.ports, depth + 1);
    for dt in &sys.dts {
        write_dt(out, model, dt, depth + 1);
    }
    for sub in &sys.subsystems {
        write_system(out, model, sub, depth + 1);
    }
    for f in &sys.flows {
        writeln!(out, "{pad}  flow {} -> {}", path(sys, &f.from), path(sys, &f.to)).unwrap();
    }
    writeln!(out, "{pad}}}").unwrap();
}

fn write_dt(out: &mut String, model: &Model, dt: &Dt, depth: usize) {
    let pad = "  ".repeat(depth);
    writeln!(out, "{pad}dt {} {{", dt.id).unwrap();
    write_ports(out, &dt.ports, depth + 1);
    if let Some(key) = &dt.behavior_key {
        writeln!(out, "{pad}  behavior \"{key}\"").unwrap();
    }
    let mut goals: Vec<&str> = model
        .dt_goal_links
        .iter()
        .filter(|l| l.dt == dt.id)
        .map(|l| l.goal.as_str())
        .collect();
    goals.sort_unstable();
    for g in goals {
        writeln!(out, "{pad}  satisfies {g}").unwrap();
    }
    writeln!(out, "{pad}}}").unwrap();
}

fn write_ports(out: &mut String, ports: &[crate::model::Port], depth: usize) {
    let pad = "  ".repeat(depth);
    for p in ports {
        writeln!(
            out,
            "{pad}{} {}: {} [{}]",
            p.direction.keyword(),
            p.name,
            p.signal_unit,
            p.role.keyword()
        )
        .unwrap();
    }
}

fn path(scope: &TwinSystem, r: &crate::model::PortRef) -> String {
    if r.owner == scope.id {
        format!("boundary.{}", r.port)
    } else {
        format!("{}.{}", r.owner, r.port)
    }
}
