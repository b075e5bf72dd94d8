//! Static checks over a program graph.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::topology::{NodeId, NodeKind, ProgramGraph};
use crate::value::PlaceholderId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finding {
    UnboundDeferred(NodeId),
    DanglingHandle { node: NodeId, placeholder: PlaceholderId },
    GroupKindViolation { group: String, kinds: Vec<NodeKind> },
    GroupMembership { node: NodeId, groups: Vec<String> },
    BadColocation { node: NodeId, reason: String },
    SelfLoop(NodeId),
    Cycle(Vec<NodeId>),
}

impl Finding {
    pub fn severity(&self) -> Severity {
        match self {
            Finding::SelfLoop(_) | Finding::Cycle(_) => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::UnboundDeferred(n) => write!(f, "deferred node {n} was never bound"),
            Finding::DanglingHandle { node, placeholder } => {
                write!(f, "node {node} references unknown handle {placeholder}")
            }
            Finding::GroupKindViolation { group, kinds } => {
                write!(f, "group {group:?} mixes node kinds {kinds:?}")
            }
            Finding::GroupMembership { node, groups } => {
                write!(f, "node {node} must belong to exactly one group, found {groups:?}")
            }
            Finding::BadColocation { node, reason } => {
                write!(f, "colocation node {node}: {reason}")
            }
            Finding::SelfLoop(n) => write!(f, "node {n} holds its own handle"),
            Finding::Cycle(nodes) => {
                f.write_str("communication cycle through")?;
                for n in nodes {
                    write!(f, " {n}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity() == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity() == Severity::Warning)
    }

    pub fn error_count(&self) -> usize {
        self.errors().count()
    }

    pub fn warning_count(&self) -> usize {
        self.warnings().count()
    }

    pub fn is_ok(&self) -> bool {
        self.error_count() == 0
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for finding in &self.findings {
            let tag = match finding.severity() {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            writeln!(f, "{tag}: {finding}")?;
        }
        write!(
            f,
            "{} errors, {} warnings",
            self.error_count(),
            self.warning_count()
        )
    }
}

pub fn validate(program: &ProgramGraph) -> ValidationReport {
    let mut findings = Vec::new();
    let nodes = program.nodes();

    for n in nodes {
        if n.kind == NodeKind::Deferred {
            findings.push(Finding::UnboundDeferred(n.node_id));
        }
        let mut seen = BTreeSet::new();
        for p in n.handle_refs() {
            if program.placeholder_owner(p).is_none() && seen.insert(p) {
                findings.push(Finding::DanglingHandle {
                    node: n.node_id,
                    placeholder: p,
                });
            }
        }
    }

    let mut membership: BTreeMap<NodeId, Vec<String>> = BTreeMap::new();
    for (name, members) in program.groups() {
        let kinds: BTreeSet<NodeKind> = members
            .iter()
            .filter_map(|id| program.node(*id))
            .map(|n| match n.kind {
                NodeKind::Deferred => NodeKind::Service,
                k => k,
            })
            .collect();
        if kinds.len() > 1 {
            findings.push(Finding::GroupKindViolation {
                group: name.clone(),
                kinds: kinds.into_iter().collect(),
            });
        }
        for id in members {
            membership.entry(*id).or_default().push(name.clone());
        }
    }
    for n in nodes {
        let groups = membership.remove(&n.node_id).unwrap_or_default();
        if groups.len() != 1 || groups[0] != n.group {
            findings.push(Finding::GroupMembership {
                node: n.node_id,
                groups,
            });
        }
    }
    // members that name nonexistent nodes
    for (id, groups) in membership {
        findings.push(Finding::GroupMembership { node: id, groups });
    }

    let mut wrapped: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    for n in nodes.iter().filter(|n| n.kind == NodeKind::Colocation) {
        if n.children.is_empty() {
            findings.push(bad_colocation(n.node_id, "no children"));
        }
        for c in &n.children {
            match program.node(*c) {
                None => findings.push(bad_colocation(n.node_id, &format!("missing child {c}"))),
                Some(child) if child.kind == NodeKind::Colocation => {
                    findings.push(bad_colocation(n.node_id, "nested colocation"))
                }
                Some(_) => {
                    if let Some(prev) = wrapped.insert(*c, n.node_id) {
                        findings.push(bad_colocation(
                            n.node_id,
                            &format!("child {c} already wrapped by {prev}"),
                        ));
                    }
                }
            }
        }
    }

    let edges = program.derive_edges();
    for (a, b) in &edges {
        if a == b {
            findings.push(Finding::SelfLoop(*a));
        }
    }
    for scc in strongly_connected(nodes.len(), &edges) {
        if scc.len() > 1 {
            findings.push(Finding::Cycle(scc));
        }
    }

    ValidationReport { findings }
}

impl ProgramGraph {
    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }
}

fn bad_colocation(node: NodeId, reason: &str) -> Finding {
    Finding::BadColocation {
        node,
        reason: reason.into(),
    }
}

/// Tarjan's algorithm, iterative. Components come out sorted by node id.
fn strongly_connected(n: usize, edges: &BTreeSet<(NodeId, NodeId)>) -> Vec<Vec<NodeId>> {
    let mut adj = vec![Vec::new(); n];
    for (a, b) in edges {
        if a.0 < n && b.0 < n && a != b {
            adj[a.0].push(b.0);
        }
    }
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next = 0;
    let mut out = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        // (node, next child position)
        let mut work = vec![(root, 0usize)];
        while let Some(&(v, pos)) = work.last() {
            if pos == 0 && index[v] == UNSEEN {
                index[v] = next;
                low[v] = next;
                next += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if let Some(&w) = adj[v].get(pos) {
                if let Some(top) = work.last_mut() {
                    top.1 += 1;
                }
                if index[w] == UNSEEN {
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            work.pop();
            if let Some(&(parent, _)) = work.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                while let Some(w) = stack.pop() {
                    on_stack[w] = false;
                    comp.push(NodeId(w));
                    if w == v {
                        break;
                    }
                }
                comp.sort();
                out.push(comp);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::NodeDef;
    use crate::value::ArgValue;
    use alloc::string::ToString;

    #[test]
    fn producer_consumer_is_clean() {
        let mut p = ProgramGraph::new("producer-consumer").unwrap();
        let mut g = p.group("producer").unwrap();
        let a = g.add_node(NodeDef::service("Range", vec![0.into(), 10.into()])).unwrap().unwrap();
        let b = g.add_node(NodeDef::service("Range", vec![10.into(), 20.into()])).unwrap().unwrap();
        drop(g);
        let mut g = p.group("consumer").unwrap();
        g.add_node(NodeDef::leaf("Consumer", vec![vec![a.arg(), b.arg()].into()])).unwrap();
        drop(g);
        let r = validate(&p);
        assert!(r.findings.is_empty(), "{r}");
        assert!(r.to_string().ends_with("0 errors, 0 warnings"));
    }

    #[test]
    fn unbound_deferred_is_error() {
        let mut p = ProgramGraph::new("g").unwrap();
        p.add_deferred_node().unwrap();
        let r = validate(&p);
        assert_eq!(r.error_count(), 1);
        assert_eq!(r.findings[0], Finding::UnboundDeferred(NodeId(0)));
    }

    #[test]
    fn two_cycle_is_one_warning() {
        let mut p = ProgramGraph::new("g").unwrap();
        let (ha, slot) = p.add_deferred_node().unwrap();
        let hb = p.add_node(NodeDef::service("P", vec![ha.arg()])).unwrap().unwrap();
        p.bind_deferred(slot, "P", vec![hb.arg()]).unwrap();
        let r = validate(&p);
        assert_eq!((r.error_count(), r.warning_count()), (0, 1));
        assert_eq!(r.findings[0], Finding::Cycle(vec![NodeId(0), NodeId(1)]));
    }

    #[test]
    fn self_loop_flagged_as_warning() {
        let mut p = ProgramGraph::new("g").unwrap();
        let (h, slot) = p.add_deferred_node().unwrap();
        p.bind_deferred(slot, "P", vec![h.arg()]).unwrap();
        let r = validate(&p);
        assert_eq!(r.findings, vec![Finding::SelfLoop(NodeId(0))]);
        assert!(r.is_ok());
    }

    #[test]
    fn dangling_and_mixed_groups_from_raw_parts() {
        let mut p = ProgramGraph::new("g").unwrap();
        p.add_node(NodeDef::service("A", vec![])).unwrap();
        p.add_node(NodeDef::leaf("B", vec![])).unwrap_err();
        let mut nodes = p.nodes().to_vec();
        nodes[0].args.push(ArgValue::Handle(PlaceholderId(99)));
        let mut leaf = nodes[0].clone();
        leaf.node_id = NodeId(1);
        leaf.kind = NodeKind::Leaf;
        leaf.placeholder = None;
        leaf.args.clear();
        nodes.push(leaf);
        let mut groups = p.groups().clone();
        groups.get_mut("default").unwrap().insert(NodeId(1));
        let raw = ProgramGraph::from_parts("g".into(), nodes, groups);
        let r = validate(&raw);
        assert_eq!(r.error_count(), 2, "{r}");
    }

    #[test]
    fn longer_cycle_reported_once() {
        let mut p = ProgramGraph::new("ring").unwrap();
        let (h0, s0) = p.add_deferred_node().unwrap();
        let h1 = p.add_node(NodeDef::service("P", vec![h0.arg()])).unwrap().unwrap();
        let h2 = p.add_node(NodeDef::service("P", vec![h1.arg()])).unwrap().unwrap();
        p.bind_deferred(s0, "P", vec![h2.arg()]).unwrap();
        p.add_node(NodeDef::service("P", vec![h2.arg()])).unwrap();
        let r = validate(&p);
        assert_eq!(
            r.findings,
            vec![Finding::Cycle(vec![NodeId(0), NodeId(1), NodeId(2)])]
        );
    }
}
