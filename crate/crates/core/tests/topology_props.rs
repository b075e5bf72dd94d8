use std::collections::BTreeSet;

use launchgraph_core::topology::NodeDef;
use launchgraph_core::{ArgValue, Handle, Manifest, AddressTable, NodeId, ProgramGraph};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Step {
    group: usize,
    picks: Vec<prop::sample::Index>,
    nest: bool,
}

fn steps() -> impl Strategy<Value = Vec<Step>> {
    prop::collection::vec(
        (0usize..4, prop::collection::vec(any::<prop::sample::Index>(), 0..4), any::<bool>())
            .prop_map(|(group, picks, nest)| Step { group, picks, nest }),
        0..24,
    )
}

/// Groups: 0 default (service), 1 "svc" (service), 2 "leaf" (leaf),
/// 3 "cache" (cacher).
fn build(steps: &[Step]) -> (ProgramGraph, Vec<Handle>) {
    let mut p = ProgramGraph::new("prop").unwrap();
    let mut handles: Vec<Handle> = Vec::new();
    for s in steps {
        let refs: Vec<ArgValue> = if handles.is_empty() {
            vec![]
        } else {
            s.picks.iter().map(|i| i.get(&handles).arg()).collect()
        };
        let args = if s.nest {
            vec![ArgValue::Seq(vec![ArgValue::Seq(refs)])]
        } else {
            refs
        };
        let (def, group) = match s.group {
            0 => (NodeDef::service("S", args), None),
            1 => (NodeDef::service("S", args), Some("svc")),
            2 => (NodeDef::leaf("L", args), Some("leaf")),
            _ => match handles.first() {
                Some(h) => (NodeDef::cacher(h, 1.0).unwrap(), Some("cache")),
                None => (NodeDef::service("S", args), None),
            },
        };
        let added = match group {
            None => p.add_node(def).unwrap(),
            Some(g) => p.group(g).unwrap().add_node(def).unwrap(),
        };
        handles.extend(added);
    }
    (p, handles)
}

proptest! {
    #[test]
    fn edges_match_args(s in steps()) {
        let (p, _) = build(&s);
        prop_assert_eq!(p.edges(), &p.derive_edges());
        for (a, b) in p.edges() {
            let provider = p.node(*b).unwrap().placeholder.unwrap();
            prop_assert!(p.node(*a).unwrap().handle_refs().contains(&provider));
        }
    }

    #[test]
    fn insertion_order_is_deterministic(s in steps()) {
        let (a, ha) = build(&s);
        let (b, hb) = build(&s);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(ha, hb);
    }

    #[test]
    fn groups_partition_nodes(s in steps()) {
        let (p, _) = build(&s);
        let mut seen = BTreeSet::new();
        for members in p.groups().values() {
            for id in members {
                prop_assert!(seen.insert(*id), "node {} in two groups", id);
            }
        }
        let all: BTreeSet<NodeId> = (0..p.len()).map(NodeId).collect();
        prop_assert_eq!(seen, all);
        prop_assert!(p.validate().is_ok());
    }

    #[test]
    fn handles_point_below_node_count(s in steps()) {
        let (p, handles) = build(&s);
        for h in handles {
            prop_assert!(h.target.0 < p.len());
        }
    }

    #[test]
    fn manifest_round_trip(s in steps()) {
        let (p, _) = build(&s);
        let m = Manifest::new(p, AddressTable::new());
        let text = m.to_canonical_string().unwrap();
        let back = Manifest::parse(text.as_bytes()).unwrap();
        prop_assert_eq!(back.to_canonical_string().unwrap(), text);
        prop_assert_eq!(back, m);
    }
}
