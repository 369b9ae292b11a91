//! Structural diff between two models, reported as a change set.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::model::{ElementRef, Model};

/// Added/removed/modified element identifiers between two models. This is the
/// machine form of the highlight convention used by diagram output.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChangeSet {
    pub added: Vec<String>,
    pub removed: Vec<String>,
    pub modified: Vec<String>,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.modified.is_empty()
    }

    pub fn sort(&mut self) {
        self.added.sort();
        self.added.dedup();
        self.removed.sort();
        self.removed.dedup();
        self.modified.sort();
        self.modified.dedup();
        // An element that was rebuilt in place is modified, not added+removed.
        self.modified.retain(|id| !self.added.contains(id) && !self.removed.contains(id));
    }

    /// Everything the highlight convention paints: additions and modifications.
    pub fn highlighted(&self) -> impl Iterator<Item = &String> {
        self.added.iter().chain(self.modified.iter())
    }

    /// Line-oriented sidecar form: `added <id>` / `removed <id>` /
    /// `modified <id>`, sorted.
    pub fn to_sidecar(&self) -> String {
        let mut lines: Vec<String> = Vec::new();
        for id in &self.added {
            lines.push(format!("added {id}"));
        }
        for id in &self.modified {
            lines.push(format!("modified {id}"));
        }
        for id in &self.removed {
            lines.push(format!("removed {id}"));
        }
        lines.sort();
        let mut out = String::new();
        for l in lines {
            writeln!(out, "{l}").unwrap();
        }
        out
    }

    pub fn from_sidecar(text: &str) -> Result<ChangeSet, String> {
        let mut cs = ChangeSet::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            let Some((kind, id)) = line.split_once(' ') else {
                return Err(format!("line {}: expected `<kind> <id>`", n + 1));
            };
            match kind {
                "added" => cs.added.push(id.trim().to_string()),
                "removed" => cs.removed.push(id.trim().to_string()),
                "modified" => cs.modified.push(id.trim().to_string()),
                other => return Err(format!("line {}: unknown change kind `{other}`", n + 1)),
            }
        }
        cs.sort();
        Ok(cs)
    }

    /// The three lists must be pairwise disjoint, every added id must exist in
    /// `result` and every removed id must have existed in `source`.
    pub fn check(&self, source: &Model, result: &Model) -> Result<(), String> {
        for (a, b, what) in [
            (&self.added, &self.removed, "added/removed"),
            (&self.added, &self.modified, "added/modified"),
            (&self.removed, &self.modified, "removed/modified"),
        ] {
            if let Some(id) = a.iter().find(|id| b.contains(id)) {
                return Err(format!("id `{id}` appears in both {what}"));
            }
        }
        for id in &self.added {
            if result.find_element(id).is_none() {
                return Err(format!("added id `{id}` not present in result"));
            }
        }
        for id in &self.removed {
            if source.find_element(id).is_none() {
                return Err(format!("removed id `{id}` not present in source"));
            }
        }
        Ok(())
    }
}

/// Fingerprint a model as id -> owned state. The state covers an element's
/// own fields plus the id of its parent, so re-nesting shows up as a
/// modification while child additions do not touch the parent.
fn fingerprints(model: &Model) -> BTreeMap<String, String> {
    let mut parents: BTreeMap<String, String> = BTreeMap::new();
    for sys in model.root_system.systems() {
        for dt in &sys.dts {
            parents.insert(dt.id.clone(), sys.id.clone());
        }
        for sub in &sys.subsystems {
            parents.insert(sub.id.clone(), sys.id.clone());
        }
    }
    let mut out = BTreeMap::new();
    for (id, el) in model.elements() {
        let state = match el {
            ElementRef::Goal(g) => format!(
                "goal|{}|{:?}|{}",
                g.title,
                g.pois,
                g.constraint.as_ref().map(|c| c.to_string()).unwrap_or_default()
            ),
            ElementRef::GoalEdge(e) => {
                format!("edge|{:?}|{:?}", e.label, e.combinator)
            }
            ElementRef::System(s) => format!(
                "system|{}|{:?}|{}",
                s.name,
                s.kind,
                parents.get(&s.id).map(String::as_str).unwrap_or("")
            ),
            ElementRef::Dt(d) => format!(
                "dt|{:?}|{}",
                d.behavior_key,
                parents.get(&d.id).map(String::as_str).unwrap_or("")
            ),
            ElementRef::Port { owner, port } => {
                format!("port|{owner}|{:?}|{:?}|{}", port.direction, port.role, port.signal_unit)
            }
            ElementRef::Flow { .. } => "flow".to_string(),
            ElementRef::Link(_) => "link".to_string(),
        };
        out.insert(id, state);
    }
    out
}

/// Compare two models by element id: ids only in `result` are added, ids only
/// in `source` removed, ids in both with different owned state modified.
pub fn diff(source: &Model, result: &Model) -> ChangeSet {
    let a = fingerprints(source);
    let b = fingerprints(result);
    let mut cs = ChangeSet::default();
    for (id, state) in &b {
        match a.get(id) {
            None => cs.added.push(id.clone()),
            Some(old) if old != state => cs.modified.push(id.clone()),
            _ => {}
        }
    }
    for id in a.keys() {
        if !b.contains_key(id) {
            cs.removed.push(id.clone());
        }
    }
    cs.sort();
    cs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse_model;

    const BASE: &str = r#"
dartwin "D" {
  goal G { poi t: celsius }
  system "S" {
    in a: celsius [user]
    dt X {
      in p: celsius [user]
      satisfies G
    }
    flow boundary.a -> X.p
  }
}
"#;

    #[test]
    fn diff_of_identical_models_is_empty() {
        let m = parse_model(BASE).unwrap();
        assert!(diff(&m, &m).is_empty());
    }

    #[test]
    fn added_and_removed_partition_id_changes() {
        let m = parse_model(BASE).unwrap();
        let other = parse_model(&BASE.replace("goal G", "goal H").replace("satisfies G", "satisfies H"))
            .unwrap();
        let cs = diff(&m, &other);
        assert_eq!(cs.added, vec!["H".to_string(), "link:X:H".to_string()]);
        assert_eq!(cs.removed, vec!["G".to_string(), "link:X:G".to_string()]);
        assert!(cs.modified.is_empty());
    }

    #[test]
    fn sidecar_round_trips() {
        let m = parse_model(BASE).unwrap();
        let other = parse_model(&BASE.replace("goal G", "goal H").replace("satisfies G", "satisfies H"))
            .unwrap();
        let cs = diff(&m, &other);
        let text = cs.to_sidecar();
        assert_eq!(ChangeSet::from_sidecar(&text).unwrap(), cs);
    }
}
