use std::collections::{BTreeSet, HashMap};

use agentgraph::{GraphError, TaskEdge, TaskGraph, TaskNode};
use proptest::prelude::*;

/// A random DAG: edges only run forward along a shuffled order.
fn dag() -> impl Strategy<Value = TaskGraph> {
    (1usize..9)
        .prop_flat_map(|n| {
            (
                Just(n),
                Just((1..=n).collect::<Vec<_>>()).prop_shuffle(),
                proptest::collection::vec(any::<bool>(), n * (n - 1) / 2),
            )
        })
        .prop_map(|(n, order, mask)| {
            let nodes = (1..=n).map(|i| TaskNode::new(i.to_string(), format!("step {i}"))).collect();
            let mut edges = Vec::new();
            let mut bits = mask.into_iter();
            for a in 0..n {
                for b in a + 1..n {
                    if bits.next().unwrap() {
                        edges.push(TaskEdge::new(order[a].to_string(), order[b].to_string()));
                    }
                }
            }
            TaskGraph::new(nodes, edges).unwrap()
        })
}

fn reachable(g: &TaskGraph, from: &str) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![from.to_string()];
    while let Some(u) = stack.pop() {
        for e in g.edges().iter().filter(|e| e.from == u) {
            if seen.insert(e.to.clone()) {
                stack.push(e.to.clone());
            }
        }
    }
    seen
}

fn longest_from(g: &TaskGraph, u: &str, w: &HashMap<String, f64>) -> f64 {
    w[u] + g
        .edges()
        .iter()
        .filter(|e| e.from == u)
        .map(|e| longest_from(g, &e.to, w))
        .fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn topological_order_respects_every_edge(g in dag()) {
        let order = g.topological_order();
        prop_assert_eq!(order.len(), g.node_count());
        let pos: HashMap<&str, usize> = order.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        prop_assert_eq!(pos.len(), g.node_count());
        for e in g.edges() {
            prop_assert!(pos[e.from.as_str()] < pos[e.to.as_str()]);
        }
    }

    #[test]
    fn json_round_trip(g in dag()) {
        let back = TaskGraph::from_json(&g.to_json_pretty()).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(back.to_json_pretty(), g.to_json_pretty());
    }

    #[test]
    fn complexity_counts_nodes_and_edges(g in dag()) {
        prop_assert_eq!(g.complexity_score(), g.node_count() + g.edge_count());
    }

    #[test]
    fn ancestors_match_reachability(g in dag()) {
        let view = g.dependency_view();
        for v in g.nodes() {
            let want: BTreeSet<String> = g
                .nodes()
                .iter()
                .filter(|u| reachable(&g, &u.id).contains(&v.id))
                .map(|u| u.id.clone())
                .collect();
            prop_assert_eq!(&view.ancestors[&v.id], &want);
            prop_assert_eq!(view.descendants(&v.id), reachable(&g, &v.id));
        }
    }

    #[test]
    fn critical_path_is_a_heaviest_chain(g in dag(), raw in proptest::collection::vec(0u8..10, 8)) {
        let w: HashMap<String, f64> = g.nodes().iter().enumerate().map(|(i, n)| (n.id.clone(), raw[i] as f64)).collect();
        let cp = g.critical_path(Some(&w)).unwrap();
        for pair in cp.path.windows(2) {
            prop_assert!(g.contains_edge(&pair[0], &pair[1]));
        }
        let total: f64 = cp.path.iter().map(|id| w[id]).sum();
        prop_assert_eq!(total, cp.length);
        let best = g.nodes().iter().map(|n| longest_from(&g, &n.id, &w)).fold(0.0, f64::max);
        prop_assert_eq!(cp.length, best);
    }

    #[test]
    fn reversing_an_edge_creates_a_cycle(g in dag()) {
        prop_assume!(g.edge_count() > 0);
        let mut edges = g.edges().to_vec();
        let e = edges[0].clone();
        edges.push(TaskEdge::new(e.to, e.from));
        let cyclic = TaskGraph::new(g.nodes().to_vec(), edges);
        prop_assert!(matches!(cyclic, Err(GraphError::Cycle(_))));
    }
}

#[test]
fn negative_weight_is_rejected() {
    let g = TaskGraph::new(vec![TaskNode::new("1", "a")], vec![]).unwrap();
    let w = HashMap::from([("1".to_string(), -1.0)]);
    assert!(matches!(g.critical_path(Some(&w)), Err(GraphError::InvalidWeight { .. })));
}

#[test]
fn empty_graph_has_empty_critical_path() {
    let cp = TaskGraph::empty().critical_path(None).unwrap();
    assert!(cp.path.is_empty());
    assert_eq!(cp.length, 0.0);
}
