//! Structural isomorphism between models, ignoring ids and display names.
//!
//! Two models are isomorphic when a bijection between their elements
//! preserves element kind, port direction/role/unit, goal PoI units,
//! behavior keys, relation kinds/combinators and the full connection
//! topology. Names, ids, titles and relation labels carry no weight.
//!
//! The check runs color refinement to split elements into structural
//! classes, then a small backtracking search inside the classes. Models are
//! tiny, so this is quick in practice.

use std::collections::BTreeMap;

use crate::model::{ElementRef, Goal, GoalEdgeKind, Model};

#[derive(Debug, Clone)]
struct Graph {
    /// Node element ids, in `Model::elements` order.
    ids: Vec<String>,
    /// Structural base signature per node.
    base: Vec<String>,
    /// Typed directed edges `(signature, from, to)`.
    edges: Vec<(String, usize, usize)>,
}

fn normalized_constraint(g: &Goal) -> String {
    let Some(c) = &g.constraint else { return String::new() };
    let mut text = c.to_string();
    // Longest-first so one poi name never clobbers another's prefix.
    let mut pois: Vec<_> = g.pois.iter().collect();
    pois.sort_by_key(|p| std::cmp::Reverse(p.name.len()));
    for p in pois {
        text = text.replace(&p.name, &format!("<{}>", p.unit));
    }
    text
}

fn build_graph(model: &Model) -> Graph {
    let mut ids = Vec::new();
    let mut base = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let elements = model.elements();

    for (id, el) in &elements {
        let sig = match el {
            ElementRef::Goal(g) => {
                let mut units: Vec<&str> = g.pois.iter().map(|p| p.unit.as_str()).collect();
                units.sort_unstable();
                Some(format!("goal|{}|{}", units.join(","), normalized_constraint(g)))
            }
            ElementRef::System(s) => {
                let root = if s.id == model.root_system.id { "|root" } else { "" };
                Some(format!("sys|{:?}{root}", s.kind))
            }
            ElementRef::Dt(d) => Some(format!("dt|{}", d.behavior_key.as_deref().unwrap_or("-"))),
            ElementRef::Port { port, .. } => Some(format!(
                "port|{:?}|{:?}|{}",
                port.direction, port.role, port.signal_unit
            )),
            _ => None,
        };
        if let Some(sig) = sig {
            index.insert(id.clone(), ids.len());
            ids.push(id.clone());
            base.push(sig);
        }
    }

    let mut edges = Vec::new();
    for sys in model.root_system.systems() {
        let sys_ix = index[&sys.id];
        for p in &sys.ports {
            edges.push(("own".to_string(), sys_ix, index[&format!("{}.{}", sys.id, p.name)]));
        }
        for dt in &sys.dts {
            let dt_ix = index[&dt.id];
            edges.push(("own".to_string(), sys_ix, dt_ix));
            for p in &dt.ports {
                edges.push(("own".to_string(), dt_ix, index[&format!("{}.{}", dt.id, p.name)]));
            }
        }
        for sub in &sys.subsystems {
            edges.push(("own".to_string(), sys_ix, index[&sub.id]));
        }
        for f in &sys.flows {
            if let (Some(&a), Some(&b)) =
                (index.get(&f.from.qualified()), index.get(&f.to.qualified()))
            {
                edges.push(("flow".to_string(), a, b));
            }
        }
    }
    for e in &model.goal_edges {
        let kind = match e.kind {
            GoalEdgeKind::Generalization => "gen",
            GoalEdgeKind::PositiveRelation => "sup",
            GoalEdgeKind::Conflict => "conf",
        };
        let comb = e.combinator.map(|c| c.keyword()).unwrap_or("-");
        if let (Some(&a), Some(&b)) = (index.get(&e.source), index.get(&e.target)) {
            edges.push((format!("{kind}|{comb}"), a, b));
        }
    }
    for l in &model.dt_goal_links {
        if let (Some(&a), Some(&b)) = (index.get(&l.dt), index.get(&l.goal)) {
            edges.push(("link".to_string(), a, b));
        }
    }
    Graph { ids, base, edges }
}

/// Refine node colors over both graphs at once so the resulting color values
/// are comparable between them. One round recolors every node with its old
/// color plus the sorted multiset of (edge kind, direction, neighbor color);
/// rounds repeat until the partition stops splitting.
fn refine_pair(ga: &Graph, gb: &Graph) -> (Vec<u64>, Vec<u64>) {
    let mut table: BTreeMap<String, u64> = BTreeMap::new();
    let intern = |table: &mut BTreeMap<String, u64>, s: &str| -> u64 {
        let n = table.len() as u64;
        *table.entry(s.to_string()).or_insert(n)
    };
    let mut ca: Vec<u64> = ga.base.iter().map(|s| intern(&mut table, s)).collect();
    let mut cb: Vec<u64> = gb.base.iter().map(|s| intern(&mut table, s)).collect();

    let signature = |g: &Graph, colors: &[u64], i: usize| -> String {
        let mut nbrs: Vec<String> = Vec::new();
        for (sig, a, b) in &g.edges {
            if *a == i {
                nbrs.push(format!(">{sig}>{}", colors[*b]));
            }
            if *b == i {
                nbrs.push(format!("<{sig}<{}", colors[*a]));
            }
        }
        nbrs.sort();
        format!("{}#{}", colors[i], nbrs.join(";"))
    };

    for _ in 0..=(ga.ids.len()) {
        let mut round: BTreeMap<String, u64> = BTreeMap::new();
        let next_a: Vec<u64> = (0..ca.len())
            .map(|i| {
                let s = signature(ga, &ca, i);
                let n = round.len() as u64;
                *round.entry(s).or_insert(n)
            })
            .collect();
        let next_b: Vec<u64> = (0..cb.len())
            .map(|i| {
                let s = signature(gb, &cb, i);
                let n = round.len() as u64;
                *round.entry(s).or_insert(n)
            })
            .collect();
        let before = distinct(&ca, &cb);
        let after = distinct(&next_a, &next_b);
        ca = next_a;
        cb = next_b;
        if after == before {
            break;
        }
    }
    (ca, cb)
}

fn distinct(a: &[u64], b: &[u64]) -> usize {
    let mut v: Vec<u64> = a.iter().chain(b.iter()).copied().collect();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Find a kind-, attribute- and topology-preserving bijection between the
/// elements of `a` and `b`; returns the id mapping on success.
pub fn isomorphism_witness(a: &Model, b: &Model) -> Option<BTreeMap<String, String>> {
    let ga = build_graph(a);
    let gb = build_graph(b);
    if ga.ids.len() != gb.ids.len() || ga.edges.len() != gb.edges.len() {
        return None;
    }
    let (ca, cb) = refine_pair(&ga, &gb);

    let mut class_a: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, c) in ca.iter().enumerate() {
        class_a.entry(*c).or_default().push(i);
    }
    let mut class_b: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, c) in cb.iter().enumerate() {
        class_b.entry(*c).or_default().push(i);
    }
    if class_a.len() != class_b.len() {
        return None;
    }
    for (color, members) in &class_a {
        if class_b.get(color).map(|m| m.len()) != Some(members.len()) {
            return None;
        }
    }

    // Most constrained classes first.
    let mut order: Vec<usize> = (0..ga.ids.len()).collect();
    order.sort_by_key(|&i| (class_a[&ca[i]].len(), i));

    let mut mapping: Vec<Option<usize>> = vec![None; ga.ids.len()];
    let mut used: Vec<bool> = vec![false; gb.ids.len()];
    if !assign(0, &order, &ga, &gb, &ca, &cb, &mut mapping, &mut used) {
        return None;
    }

    let mut witness: BTreeMap<String, String> = BTreeMap::new();
    for (i, m) in mapping.iter().enumerate() {
        witness.insert(ga.ids[i].clone(), gb.ids[(*m)?].clone());
    }
    // Extend the witness over flows, goal edges and links through the node map.
    extend_witness_edges(a, b, &mut witness)?;
    Some(witness)
}

pub fn is_isomorphic(a: &Model, b: &Model) -> bool {
    isomorphism_witness(a, b).is_some()
}

fn assign(
    k: usize,
    order: &[usize],
    ga: &Graph,
    gb: &Graph,
    ca: &[u64],
    cb: &[u64],
    mapping: &mut Vec<Option<usize>>,
    used: &mut Vec<bool>,
) -> bool {
    if k == order.len() {
        return edges_match(ga, gb, mapping);
    }
    let i = order[k];
    for j in 0..gb.ids.len() {
        if used[j] || cb[j] != ca[i] {
            continue;
        }
        mapping[i] = Some(j);
        used[j] = true;
        if consistent_so_far(i, ga, gb, mapping) && assign(k + 1, order, ga, gb, ca, cb, mapping, used)
        {
            return true;
        }
        mapping[i] = None;
        used[j] = false;
    }
    false
}

/// Every edge between already-mapped nodes must exist on both sides.
fn consistent_so_far(i: usize, ga: &Graph, gb: &Graph, mapping: &[Option<usize>]) -> bool {
    for (sig, a, b) in &ga.edges {
        if *a != i && *b != i {
            continue;
        }
        if let (Some(ma), Some(mb)) = (mapping[*a], mapping[*b]) {
            if !gb.edges.iter().any(|(s, x, y)| s == sig && *x == ma && *y == mb) {
                return false;
            }
        }
    }
    true
}

fn edges_match(ga: &Graph, gb: &Graph, mapping: &[Option<usize>]) -> bool {
    let mut mapped: Vec<(String, usize, usize)> = ga
        .edges
        .iter()
        .map(|(sig, a, b)| (sig.clone(), mapping[*a].unwrap(), mapping[*b].unwrap()))
        .collect();
    let mut theirs = gb.edges.clone();
    mapped.sort();
    theirs.sort();
    mapped == theirs
}

fn extend_witness_edges(
    a: &Model,
    b: &Model,
    witness: &mut BTreeMap<String, String>,
) -> Option<()> {
    let mut extra: Vec<(String, String)> = Vec::new();
    for sys in a.root_system.systems() {
        for f in &sys.flows {
            let from = witness.get(&f.from.qualified())?;
            let to = witness.get(&f.to.qualified())?;
            extra.push((f.id(), format!("flow:{from}->{to}")));
        }
    }
    for e in &a.goal_edges {
        let s = witness.get(&e.source)?;
        let t = witness.get(&e.target)?;
        extra.push((e.id(), format!("edge:{s}:{}:{t}", e.kind.keyword())));
    }
    for l in &a.dt_goal_links {
        let dt = witness.get(&l.dt)?;
        let goal = witness.get(&l.goal)?;
        extra.push((l.id(), format!("link:{dt}:{goal}")));
    }
    for (from, to) in extra {
        if b.find_element(&to).is_none() {
            return None;
        }
        witness.insert(from, to);
    }
    Some(())
}
