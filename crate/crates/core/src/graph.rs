//! Task graph data model.
//!
//! A [`TaskGraph`] is an immutable, validated DAG of natural-language tasks.
//! Graphs are parsed from the JSON document format the orchestrator asks the
//! model to emit (`{"nodes": [...], "edges": [...]}`), optionally wrapped in a
//! `{"task_graph": {...}}` envelope. Serialization always emits the wrapped
//! form.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("malformed graph document: {0}")]
    Parse(String),
    #[error("graph contains a cycle through nodes [{}]", .0.join(", "))]
    Cycle(Vec<String>),
    #[error("edge {from} -> {to} references unknown node {missing}")]
    DanglingEdge {
        from: String,
        to: String,
        missing: String,
    },
    #[error("duplicate node id {0}")]
    DuplicateId(String),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("invalid weight {weight} for node {id}")]
    InvalidWeight { id: String, weight: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskNode {
    pub id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskEdge {
    pub from: String,
    pub to: String,
}

impl TaskNode {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            label: label.into(),
        }
    }
}

impl TaskEdge {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
        }
    }
}

/// Orders ids the way a person would: digit runs compare numerically, so
/// `task_2 < task_10` and `"9" < "10"`. Falls back to byte order so the
/// ordering is total.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let mut left = a.as_bytes();
    let mut right = b.as_bytes();
    loop {
        match (left.first(), right.first()) {
            (None, None) => return a.cmp(b),
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) if x.is_ascii_digit() && y.is_ascii_digit() => {
                let ln = left.iter().take_while(|c| c.is_ascii_digit()).count();
                let rn = right.iter().take_while(|c| c.is_ascii_digit()).count();
                let ld = trim_zeros(&left[..ln]);
                let rd = trim_zeros(&right[..rn]);
                let ord = ld.len().cmp(&rd.len()).then_with(|| ld.cmp(rd));
                if ord != Ordering::Equal {
                    return ord;
                }
                left = &left[ln..];
                right = &right[rn..];
            }
            (Some(x), Some(y)) => {
                if x != y {
                    return x.cmp(y);
                }
                left = &left[1..];
                right = &right[1..];
            }
        }
    }
}

fn trim_zeros(digits: &[u8]) -> &[u8] {
    let start = digits.iter().take_while(|&&c| c == b'0').count();
    &digits[start..]
}

/// Heap key for `natural_cmp` ordering.
#[derive(PartialEq, Eq)]
pub(crate) struct NaturalKey<'a>(pub(crate) &'a str);

impl Ord for NaturalKey<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        natural_cmp(self.0, other.0)
    }
}

impl PartialOrd for NaturalKey<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A validated, acyclic task graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskGraph {
    nodes: Vec<TaskNode>,
    edges: Vec<TaskEdge>,
    index: HashMap<String, usize>,
}

impl Default for TaskGraph {
    fn default() -> Self {
        Self::empty()
    }
}

impl TaskGraph {
    pub fn empty() -> Self {
        Self {
            nodes: Vec::new(),
            edges: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Builds a graph, checking every structural invariant.
    pub fn new(nodes: Vec<TaskNode>, edges: Vec<TaskEdge>) -> Result<Self, GraphError> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if node.id.is_empty() {
                return Err(GraphError::Parse(format!("node #{} has an empty id", i + 1)));
            }
            if node.label.trim().is_empty() {
                return Err(GraphError::Parse(format!("node {} has an empty label", node.id)));
            }
            if index.insert(node.id.clone(), i).is_some() {
                return Err(GraphError::DuplicateId(node.id.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for edge in &edges {
            for end in [&edge.from, &edge.to] {
                if !index.contains_key(end) {
                    return Err(GraphError::DanglingEdge {
                        from: edge.from.clone(),
                        to: edge.to.clone(),
                        missing: end.clone(),
                    });
                }
            }
            if edge.from == edge.to {
                return Err(GraphError::Cycle(vec![edge.from.clone()]));
            }
            if !seen.insert((edge.from.as_str(), edge.to.as_str())) {
                return Err(GraphError::DuplicateEdge(edge.from.clone(), edge.to.clone()));
            }
        }
        let graph = Self { nodes, edges, index };
        if let Some(cycle) = graph.find_cycle() {
            return Err(GraphError::Cycle(cycle));
        }
        Ok(graph)
    }

    /// Parses and validates a graph document (bare or `task_graph`-wrapped).
    pub fn from_json(document: &str) -> Result<Self, GraphError> {
        let value: serde_json::Value =
            serde_json::from_str(document).map_err(|e| GraphError::Parse(e.to_string()))?;
        Self::from_value(&value)
    }

    pub fn from_value(value: &serde_json::Value) -> Result<Self, GraphError> {
        let doc = GraphDocument::from_value(value)?;
        doc.into_graph()
    }

    /// Canonical wrapped document.
    pub fn to_document(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("graph serialization is infallible")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialization is infallible")
    }

    pub fn nodes(&self) -> &[TaskNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[TaskEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<&TaskNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn label(&self, id: &str) -> Option<&str> {
        self.node(id).map(|n| n.label.as_str())
    }

    pub fn contains_edge(&self, from: &str, to: &str) -> bool {
        self.edges.iter().any(|e| e.from == from && e.to == to)
    }

    /// Direct successors of every node, in edge order.
    pub fn successors(&self) -> HashMap<&str, Vec<&str>> {
        let mut out: HashMap<&str, Vec<&str>> =
            self.nodes.iter().map(|n| (n.id.as_str(), Vec::new())).collect();
        for e in &self.edges {
            out.get_mut(e.from.as_str())
                .expect("validated endpoint")
                .push(e.to.as_str());
        }
        out
    }

    /// Nodes with no incoming edge.
    pub fn roots(&self) -> Vec<&str> {
        let targets: BTreeSet<&str> = self.edges.iter().map(|e| e.to.as_str()).collect();
        self.nodes
            .iter()
            .map(|n| n.id.as_str())
            .filter(|id| !targets.contains(id))
            .collect()
    }

    /// Kahn's algorithm with ascending (natural) id tie-break.
    pub fn topological_order(&self) -> Vec<String> {
        self.kahn().0
    }

    fn kahn(&self) -> (Vec<String>, HashMap<&str, usize>) {
        let succ = self.successors();
        let mut indegree: HashMap<&str, usize> =
            self.nodes.iter().map(|n| (n.id.as_str(), 0)).collect();
        for e in &self.edges {
            *indegree.get_mut(e.to.as_str()).expect("validated endpoint") += 1;
        }
        let mut ready: BinaryHeap<Reverse<NaturalKey>> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&id, _)| Reverse(NaturalKey(id)))
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(Reverse(NaturalKey(id))) = ready.pop() {
            order.push(id.to_string());
            for &next in &succ[id] {
                let d = indegree.get_mut(next).expect("validated endpoint");
                *d -= 1;
                if *d == 0 {
                    ready.push(Reverse(NaturalKey(next)));
                }
            }
        }
        (order, indegree)
    }

    fn find_cycle(&self) -> Option<Vec<String>> {
        let (order, indegree) = self.kahn();
        if order.len() == self.nodes.len() {
            return None;
        }
        // Every leftover node has a leftover predecessor; walk predecessors
        // until one repeats.
        let mut pred: HashMap<&str, &str> = HashMap::new();
        for e in &self.edges {
            if indegree[e.from.as_str()] > 0 && indegree[e.to.as_str()] > 0 {
                pred.entry(e.to.as_str()).or_insert(e.from.as_str());
            }
        }
        let start = self
            .nodes
            .iter()
            .map(|n| n.id.as_str())
            .find(|id| indegree[id] > 0)?;
        let mut walk = vec![start];
        let mut position: HashMap<&str, usize> = HashMap::from([(start, 0)]);
        let mut current = start;
        loop {
            current = pred[current];
            if let Some(&at) = position.get(current) {
                let mut cycle: Vec<String> = walk[at..].iter().map(|s| s.to_string()).collect();
                cycle.reverse();
                return Some(cycle);
            }
            position.insert(current, walk.len());
            walk.push(current);
        }
    }

    pub fn dependency_view(&self) -> DependencyView {
        let mut direct: BTreeMap<String, BTreeSet<String>> = self
            .nodes
            .iter()
            .map(|n| (n.id.clone(), BTreeSet::new()))
            .collect();
        for e in &self.edges {
            direct.get_mut(&e.to).expect("validated endpoint").insert(e.from.clone());
        }
        let mut ancestors: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for id in self.topological_order() {
            let mut acc = BTreeSet::new();
            for p in &direct[&id] {
                acc.insert(p.clone());
                acc.extend(ancestors[p].iter().cloned());
            }
            ancestors.insert(id, acc);
        }
        DependencyView {
            direct_predecessors: direct,
            ancestors,
        }
    }

    /// Maximum-weight directed path. Missing weights count as 1.0. Ties go
    /// to the lexicographically smallest id sequence.
    pub fn critical_path(
        &self,
        weights: Option<&HashMap<String, f64>>,
    ) -> Result<CriticalPath, GraphError> {
        let weight_of = |id: &str| -> Result<f64, GraphError> {
            let w = weights.and_then(|m| m.get(id).copied()).unwrap_or(1.0);
            if !w.is_finite() || w < 0.0 {
                return Err(GraphError::InvalidWeight {
                    id: id.to_string(),
                    weight: w,
                });
            }
            Ok(w)
        };
        let view = self.dependency_view();
        let mut best: HashMap<String, (f64, Vec<String>)> = HashMap::new();
        for id in self.topological_order() {
            let w = weight_of(&id)?;
            let mut winner = (w, vec![id.clone()]);
            for p in &view.direct_predecessors[&id] {
                let (pw, ppath) = &best[p];
                let mut path = ppath.clone();
                path.push(id.clone());
                let candidate = (pw + w, path);
                if better_path(&candidate, &winner) {
                    winner = candidate;
                }
            }
            best.insert(id, winner);
        }
        let mut overall: Option<(f64, Vec<String>)> = None;
        for candidate in best.into_values() {
            match &overall {
                Some(current) if !better_path(&candidate, current) => {}
                _ => overall = Some(candidate),
            }
        }
        let (length, path) = overall.unwrap_or((0.0, Vec::new()));
        Ok(CriticalPath { path, length })
    }

    /// |V| + |E|.
    pub fn complexity_score(&self) -> usize {
        self.nodes.len() + self.edges.len()
    }
}

fn better_path(a: &(f64, Vec<String>), b: &(f64, Vec<String>)) -> bool {
    if a.0 != b.0 {
        return a.0 > b.0;
    }
    compare_id_sequences(&a.1, &b.1) == Ordering::Less
}

pub fn compare_id_sequences(a: &[String], b: &[String]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let ord = natural_cmp(x, y);
        if ord != Ordering::Equal {
            return ord;
        }
    }
    a.len().cmp(&b.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPath {
    pub path: Vec<String>,
    pub length: f64,
}

/// Direct and transitive predecessor sets for every node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyView {
    pub direct_predecessors: BTreeMap<String, BTreeSet<String>>,
    pub ancestors: BTreeMap<String, BTreeSet<String>>,
}

impl DependencyView {
    /// All nodes reachable from `id`.
    pub fn descendants(&self, id: &str) -> BTreeSet<String> {
        self.ancestors
            .iter()
            .filter(|(_, anc)| anc.contains(id))
            .map(|(n, _)| n.clone())
            .collect()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawId {
    Text(String),
    Integer(i64),
}

impl RawId {
    fn into_string(self) -> String {
        match self {
            RawId::Text(s) => s,
            RawId::Integer(i) => i.to_string(),
        }
    }
}

#[derive(Deserialize)]
struct RawNode {
    id: RawId,
    label: String,
}

#[derive(Deserialize)]
struct RawEdge {
    from: RawId,
    to: RawId,
}

#[derive(Deserialize)]
struct GraphDocument {
    nodes: Vec<RawNode>,
    #[serde(default)]
    edges: Vec<RawEdge>,
}

impl GraphDocument {
    fn from_value(value: &serde_json::Value) -> Result<Self, GraphError> {
        let inner = match value.get("task_graph") {
            Some(wrapped) => wrapped,
            None => value,
        };
        if !inner.is_object() {
            return Err(GraphError::Parse("expected a JSON object".into()));
        }
        GraphDocument::deserialize(inner).map_err(|e| GraphError::Parse(e.to_string()))
    }

    fn into_graph(self) -> Result<TaskGraph, GraphError> {
        let nodes = self
            .nodes
            .into_iter()
            .map(|n| TaskNode {
                id: n.id.into_string(),
                label: n.label,
            })
            .collect();
        let edges = self
            .edges
            .into_iter()
            .map(|e| TaskEdge {
                from: e.from.into_string(),
                to: e.to.into_string(),
            })
            .collect();
        TaskGraph::new(nodes, edges)
    }
}

#[derive(Serialize)]
struct BareRef<'a> {
    nodes: &'a [TaskNode],
    edges: &'a [TaskEdge],
}

#[derive(Serialize)]
struct WrappedRef<'a> {
    task_graph: BareRef<'a>,
}

impl Serialize for TaskGraph {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        WrappedRef {
            task_graph: BareRef {
                nodes: &self.nodes,
                edges: &self.edges,
            },
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TaskGraph {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        TaskGraph::from_value(&value).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(ids: &[&str]) -> TaskGraph {
        let nodes = ids.iter().map(|i| TaskNode::new(*i, format!("do {i}"))).collect();
        let edges = ids.windows(2).map(|w| TaskEdge::new(w[0], w[1])).collect();
        TaskGraph::new(nodes, edges).unwrap()
    }

    fn diamond() -> TaskGraph {
        TaskGraph::from_json(
            r#"{"nodes":[{"id":"A","label":"a"},{"id":"B","label":"b"},{"id":"C","label":"c"},{"id":"D","label":"d"}],
                "edges":[{"from":"A","to":"B"},{"from":"A","to":"C"},{"from":"B","to":"D"},{"from":"C","to":"D"}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn validates_minimal_chain_with_numeric_ids() {
        let g = TaskGraph::from_json(
            r#"{"nodes":[{"id":1,"label":"A"},{"id":2,"label":"B"}],"edges":[{"from":1,"to":2}]}"#,
        )
        .unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edges()[0], TaskEdge::new("1", "2"));
    }

    #[test]
    fn rejects_two_cycle() {
        let err = TaskGraph::from_json(
            r#"{"nodes":[{"id":1,"label":"A"},{"id":2,"label":"B"}],
                "edges":[{"from":1,"to":2},{"from":2,"to":1}]}"#,
        )
        .unwrap_err();
        match err {
            GraphError::Cycle(ids) => {
                let set: BTreeSet<_> = ids.into_iter().collect();
                assert_eq!(set, BTreeSet::from(["1".to_string(), "2".to_string()]));
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn cycle_error_names_only_cycle_members() {
        // 0 -> 1 -> 2 -> 3 -> 1 : node 0 feeds the cycle but is not on it.
        let nodes = (0..4).map(|i| TaskNode::new(i.to_string(), "x")).collect();
        let edges = vec![
            TaskEdge::new("0", "1"),
            TaskEdge::new("1", "2"),
            TaskEdge::new("2", "3"),
            TaskEdge::new("3", "1"),
        ];
        let Err(GraphError::Cycle(ids)) = TaskGraph::new(nodes, edges) else {
            panic!("expected cycle");
        };
        assert_eq!(ids.len(), 3);
        assert!(!ids.contains(&"0".to_string()));
        for w in 0..ids.len() {
            let (a, b) = (&ids[w], &ids[(w + 1) % ids.len()]);
            let next = (a.parse::<u32>().unwrap() % 3) + 1;
            assert_eq!(b, &next.to_string());
        }
    }

    #[test]
    fn rejects_dangling_edge() {
        let err = TaskGraph::from_json(r#"{"nodes":[{"id":1,"label":"A"}],"edges":[{"from":1,"to":2}]}"#)
            .unwrap_err();
        assert!(matches!(err, GraphError::DanglingEdge { ref missing, .. } if missing == "2"));
    }

    #[test]
    fn rejects_duplicates_self_loops_and_garbage() {
        let dup = r#"{"nodes":[{"id":1,"label":"A"},{"id":"1","label":"B"}],"edges":[]}"#;
        assert_eq!(TaskGraph::from_json(dup).unwrap_err(), GraphError::DuplicateId("1".into()));
        let selfloop = r#"{"nodes":[{"id":1,"label":"A"}],"edges":[{"from":1,"to":1}]}"#;
        assert!(matches!(TaskGraph::from_json(selfloop), Err(GraphError::Cycle(_))));
        let dup_edge = r#"{"nodes":[{"id":1,"label":"A"},{"id":2,"label":"B"}],
            "edges":[{"from":1,"to":2},{"from":1,"to":2}]}"#;
        assert!(matches!(TaskGraph::from_json(dup_edge), Err(GraphError::DuplicateEdge(..))));
        assert!(matches!(TaskGraph::from_json("[1,2]"), Err(GraphError::Parse(_))));
        assert!(matches!(TaskGraph::from_json("{\"nodes\": 3}"), Err(GraphError::Parse(_))));
        let blank = r#"{"nodes":[{"id":1,"label":"  "}]}"#;
        assert!(matches!(TaskGraph::from_json(blank), Err(GraphError::Parse(_))));
    }

    #[test]
    fn accepts_wrapped_form_and_serializes_wrapped() {
        let g = TaskGraph::from_json(
            r#"{"task_graph":{"nodes":[{"id":"task_1","label":"boil"}],"edges":[]}}"#,
        )
        .unwrap();
        let doc = g.to_document();
        assert_eq!(doc["task_graph"]["nodes"][0]["id"], "task_1");
        assert_eq!(TaskGraph::from_value(&doc).unwrap(), g);
    }

    #[test]
    fn empty_graph_is_valid() {
        let g = TaskGraph::from_json(r#"{"nodes":[],"edges":[]}"#).unwrap();
        assert_eq!(g.complexity_score(), 0);
        assert!(g.topological_order().is_empty());
        let cp = g.critical_path(None).unwrap();
        assert!(cp.path.is_empty());
        assert_eq!(cp.length, 0.0);
    }

    #[test]
    fn topological_examples() {
        assert_eq!(chain(&["A", "B", "C"]).topological_order(), ["A", "B", "C"]);
        assert_eq!(diamond().topological_order(), ["A", "B", "C", "D"]);
        let isolated = TaskGraph::new(
            ["d", "b", "a", "c"].iter().map(|i| TaskNode::new(*i, "x")).collect(),
            vec![],
        )
        .unwrap();
        assert_eq!(isolated.topological_order(), ["a", "b", "c", "d"]);
    }

    #[test]
    fn natural_ordering_of_ids() {
        let mut ids = vec!["task_10", "task_2", "task_1", "10", "9", "b", "a"];
        ids.sort_by(|a, b| natural_cmp(a, b));
        assert_eq!(ids, ["9", "10", "a", "b", "task_1", "task_2", "task_10"]);
        assert_eq!(natural_cmp("01", "1"), "01".cmp("1"));
    }

    #[test]
    fn dependency_examples() {
        let view = chain(&["A", "B", "C"]).dependency_view();
        assert_eq!(view.ancestors["C"], BTreeSet::from(["A".into(), "B".into()]));
        let view = diamond().dependency_view();
        assert_eq!(
            view.ancestors["D"],
            BTreeSet::from(["A".into(), "B".into(), "C".into()])
        );
        assert_eq!(
            view.direct_predecessors["D"],
            BTreeSet::from(["B".into(), "C".into()])
        );
        assert_eq!(
            view.descendants("A"),
            BTreeSet::from(["B".into(), "C".into(), "D".into()])
        );
    }

    #[test]
    fn critical_path_examples() {
        let cp = chain(&["A", "B", "C"]).critical_path(None).unwrap();
        assert_eq!(cp.length, 3.0);
        assert_eq!(cp.path, ["A", "B", "C"]);

        let g = TaskGraph::new(
            ["A", "B", "C"].iter().map(|i| TaskNode::new(*i, "x")).collect(),
            vec![TaskEdge::new("A", "B"), TaskEdge::new("A", "C")],
        )
        .unwrap();
        let weights = HashMap::from([("A".into(), 1.0), ("B".into(), 5.0), ("C".into(), 2.0)]);
        let cp = g.critical_path(Some(&weights)).unwrap();
        assert_eq!(cp.path, ["A", "B"]);
        assert_eq!(cp.length, 6.0);

        // diamond: both branches weigh 3, B wins the tie.
        assert_eq!(diamond().critical_path(None).unwrap().path, ["A", "B", "D"]);
    }

    #[test]
    fn critical_path_rejects_negative_weight() {
        let weights = HashMap::from([("A".into(), -1.0)]);
        assert!(matches!(
            chain(&["A"]).critical_path(Some(&weights)),
            Err(GraphError::InvalidWeight { .. })
        ));
    }

    #[test]
    fn complexity_examples() {
        assert_eq!(chain(&["A", "B", "C", "D"]).complexity_score(), 7);
        assert_eq!(diamond().complexity_score(), 8);
    }
}
