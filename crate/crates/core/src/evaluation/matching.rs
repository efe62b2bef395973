//! Node, edge and tool matching, and precision / recall / F1.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_similarity, EmbeddingError, EmbeddingProvider};
use crate::graph::{natural_cmp, TaskGraph};

/// Pairwise label similarities, rows = expected nodes, columns = actual
/// nodes, both in graph node order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub expected_ids: Vec<String>,
    pub actual_ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn compute(expected: &TaskGraph, actual: &TaskGraph, provider: &dyn EmbeddingProvider) -> Result<Self, EmbeddingError> {
        let embed = |g: &TaskGraph| {
            let labels: Vec<&str> = g.nodes().iter().map(|n| n.label.as_str()).collect();
            if labels.is_empty() {
                Ok(Vec::new())
            } else {
                provider.embed(&labels)
            }
        };
        let ev = embed(expected)?;
        let av = embed(actual)?;
        let mut values = Vec::with_capacity(ev.len());
        for e in &ev {
            values.push(av.iter().map(|a| cosine_similarity(e, a)).collect::<Result<Vec<_>, _>>()?);
        }
        Ok(Self {
            expected_ids: expected.nodes().iter().map(|n| n.id.clone()).collect(),
            actual_ids: actual.nodes().iter().map(|n| n.id.clone()).collect(),
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.expected_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.actual_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub expected: String,
    pub actual: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    #[serde(rename = "tp")]
    pub true_positives: usize,
    #[serde(rename = "fp")]
    pub false_positives: usize,
    #[serde(rename = "fn")]
    pub false_negatives: usize,
}

impl MatchResult {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        Self {
            pairs: Vec::new(),
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
        }
    }

    /// expected id -> actual id.
    pub fn forward(&self) -> HashMap<&str, &str> {
        self.pairs.iter().map(|p| (p.expected.as_str(), p.actual.as_str())).collect()
    }

    /// actual id -> expected id.
    pub fn inverse(&self) -> HashMap<&str, &str> {
        self.pairs.iter().map(|p| (p.actual.as_str(), p.expected.as_str())).collect()
    }

    pub fn prf1(&self) -> Prf1 {
        prf1(self.true_positives, self.false_positives, self.false_negatives)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Zero denominators give 0, except that tp = fp = fn = 0 (nothing expected,
/// nothing produced) scores 1 across the board.
pub fn prf1(tp: usize, fp: usize, fn_: usize) -> Prf1 {
    if tp == 0 && fp == 0 && fn_ == 0 {
        return Prf1 {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        };
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf1 { precision, recall, f1 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStrategy {
    /// Repeatedly take the most similar unmatched pair.
    #[default]
    Greedy,
    /// Maximum total similarity assignment.
    Optimal,
}

fn finish(sim: &SimilarityMatrix, chosen: Vec<(usize, usize)>) -> MatchResult {
    let mut pairs: Vec<MatchedPair> = chosen
        .into_iter()
        .map(|(i, j)| MatchedPair {
            expected: sim.expected_ids[i].clone(),
            actual: sim.actual_ids[j].clone(),
            similarity: sim.values[i][j],
        })
        .collect();
    pairs.sort_by(|a, b| natural_cmp(&a.expected, &b.expected));
    let tp = pairs.len();
    MatchResult {
        pairs,
        true_positives: tp,
        false_positives: sim.cols() - tp,
        false_negatives: sim.rows() - tp,
    }
}

/// Greedy one-to-one matching over pairs with similarity >= `threshold`;
/// ties broken by (expected id, actual id).
pub fn match_nodes_greedy(sim: &SimilarityMatrix, threshold: f64) -> MatchResult {
    let mut candidates: Vec<(usize, usize)> = (0..sim.rows())
        .flat_map(|i| (0..sim.cols()).map(move |j| (i, j)))
        .filter(|&(i, j)| sim.values[i][j] >= threshold)
        .collect();
    candidates.sort_by(|&(i1, j1), &(i2, j2)| {
        sim.values[i2][j2]
            .total_cmp(&sim.values[i1][j1])
            .then_with(|| natural_cmp(&sim.expected_ids[i1], &sim.expected_ids[i2]))
            .then_with(|| natural_cmp(&sim.actual_ids[j1], &sim.actual_ids[j2]))
    });
    let mut used_e = vec![false; sim.rows()];
    let mut used_a = vec![false; sim.cols()];
    let mut chosen = Vec::new();
    for (i, j) in candidates {
        if !used_e[i] && !used_a[j] {
            used_e[i] = true;
            used_a[j] = true;
            chosen.push((i, j));
        }
    }
    finish(sim, chosen)
}

/// Assignment maximizing the summed similarity of admissible pairs
/// (similarity >= `threshold`), via the Hungarian algorithm.
pub fn match_nodes_optimal(sim: &SimilarityMatrix, threshold: f64) -> MatchResult {
    let (rows, cols) = (sim.rows(), sim.cols());
    let n = rows.max(cols);
    if rows == 0 || cols == 0 {
        return finish(sim, Vec::new());
    }
    // Inadmissible pairs weigh nothing, so they never beat leaving both
    // nodes unmatched.
    let weight = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols && sim.values[i][j] >= threshold {
            sim.values[i][j]
        } else {
            0.0
        }
    };
    let assignment = hungarian_max(n, weight);
    let chosen = assignment
        .into_iter()
        .enumerate()
        .filter(|&(i, j)| i < rows && j < cols && sim.values[i][j] >= threshold)
        .collect();
    finish(sim, chosen)
}

/// Maximum-weight perfect assignment on an `n x n` matrix; returns the
/// column assigned to each row.
fn hungarian_max(n: usize, weight: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    // Potentials formulation, 1-based with a virtual column 0.
    let cost = |i: usize, j: usize| -weight(i - 1, j - 1);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

pub fn match_nodes(sim: &SimilarityMatrix, threshold: f64, strategy: MatchStrategy) -> MatchResult {
    match strategy {
        MatchStrategy::Greedy => match_nodes_greedy(sim, threshold),
        MatchStrategy::Optimal => match_nodes_optimal(sim, threshold),
    }
}

/// Direction-sensitive edge matching through a node matching. Edge pairs are
/// reported as `from->to`.
pub fn match_edges(expected: &TaskGraph, actual: &TaskGraph, node_match: &MatchResult) -> MatchResult {
    let inverse = node_match.inverse();
    let expected_edges: HashSet<(&str, &str)> = expected
        .edges()
        .iter()
        .map(|e| (e.from.as_str(), e.to.as_str()))
        .collect();
    let mut pairs = Vec::new();
    for e in actual.edges() {
        let (Some(&u), Some(&v)) = (inverse.get(e.from.as_str()), inverse.get(e.to.as_str())) else {
            continue;
        };
        if expected_edges.contains(&(u, v)) {
            pairs.push(MatchedPair {
                expected: format!("{u}->{v}"),
                actual: format!("{}->{}", e.from, e.to),
                similarity: 1.0,
            });
        }
    }
    let tp = pairs.len();
    MatchResult {
        pairs,
        true_positives: tp,
        false_positives: actual.edge_count() - tp,
        false_negatives: expected.edge_count() - tp,
    }
}

/// Multiset matching of tool names.
pub fn match_tools(expected: &[String], actual: &[String]) -> MatchResult {
    fn count(names: &[String]) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for n in names {
            *m.entry(n.as_str()).or_default() += 1;
        }
        m
    }
    let ce = count(expected);
    let ca = count(actual);
    let mut pairs = Vec::new();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for name in ce.keys().chain(ca.keys().filter(|k| !ce.contains_key(*k))) {
        let e = ce.get(name).copied().unwrap_or(0);
        let a = ca.get(name).copied().unwrap_or(0);
        let hit = e.min(a);
        tp += hit;
        fp += a - hit;
        fn_ += e - hit;
        pairs.extend((0..hit).map(|_| MatchedPair {
            expected: name.to_string(),
            actual: name.to_string(),
            similarity: 1.0,
        }));
    }
    MatchResult {
        pairs,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
    }
}

/// Total similarity of a matching, used to compare strategies.
pub fn total_similarity(m: &MatchResult) -> f64 {
    m.pairs.iter().map(|p| p.similarity).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashEmbedder;
    use crate::graph::{TaskEdge, TaskNode};
    use proptest::prelude::*;

    fn g(nodes: &[(&str, &str)], edges: &[(&str, &str)]) -> TaskGraph {
        TaskGraph::new(
            nodes.iter().map(|(i, l)| TaskNode::new(*i, *l)).collect(),
            edges.iter().map(|(a, b)| TaskEdge::new(*a, *b)).collect(),
        )
        .unwrap()
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn matrix(values: Vec<Vec<f64>>) -> SimilarityMatrix {
        SimilarityMatrix {
            expected_ids: (0..values.len()).map(|i| format!("e{i}")).collect(),
            actual_ids: (0..values.first().map_or(0, Vec::len)).map(|j| format!("a{j}")).collect(),
            values,
        }
    }

    #[test]
    fn prf1_examples() {
        let p = prf1(2, 1, 1);
        assert!((p.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(prf1(0, 0, 0), Prf1 { precision: 1.0, recall: 1.0, f1: 1.0 });
        assert_eq!(prf1(0, 3, 2), Prf1 { precision: 0.0, recall: 0.0, f1: 0.0 });
        assert_eq!(prf1(0, 0, 2), Prf1 { precision: 0.0, recall: 0.0, f1: 0.0 });
    }

    #[test]
    fn tool_matching_examples() {
        let m = match_tools(&names(&["a", "b"]), &names(&["a", "b"]));
        assert_eq!((m.true_positives, m.false_positives, m.false_negatives), (2, 0, 0));
        let m = match_tools(&names(&["a"]), &names(&["a", "a"]));
        assert_eq!((m.true_positives, m.false_positives, m.false_negatives), (1, 1, 0));
        let m = match_tools(&names(&["a", "b", "c"]), &names(&["a", "d"]));
        assert_eq!((m.true_positives, m.false_positives, m.false_negatives), (1, 1, 2));
        let p = m.prf1();
        assert_eq!(p.precision, 0.5);
        assert!((p.recall - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.f1 - 0.4).abs() < 1e-15);
    }

    #[test]
    fn identical_graphs_match_fully() {
        let p = HashEmbedder::default();
        let a = g(&[("1", "boil water"), ("2", "pour tea"), ("3", "water boil")], &[("1", "2")]);
        let sim = SimilarityMatrix::compute(&a, &a, &p).unwrap();
        for strategy in [MatchStrategy::Greedy, MatchStrategy::Optimal] {
            let m = match_nodes(&sim, 0.75, strategy);
            assert_eq!((m.true_positives, m.false_positives, m.false_negatives), (3, 0, 0));
            assert!(m.pairs.iter().all(|p| p.expected == p.actual), "{strategy:?}: {:?}", m.pairs);
            let e = match_edges(&a, &a, &m);
            assert_eq!((e.true_positives, e.false_positives, e.false_negatives), (1, 0, 0));
        }
    }

    #[test]
    fn disjoint_vocabulary_matches_nothing() {
        let p = HashEmbedder::default();
        let a = g(&[("1", "boil water"), ("2", "pour tea")], &[]);
        let b = g(&[("x", "send email"), ("y", "book flight")], &[]);
        let sim = SimilarityMatrix::compute(&a, &b, &p).unwrap();
        assert!(sim.values.iter().flatten().all(|&s| s < 0.75));
        let m = match_nodes_greedy(&sim, 0.75);
        assert_eq!((m.true_positives, m.false_positives, m.false_negatives), (0, 2, 2));
    }

    #[test]
    fn greedy_tie_break_prefers_lower_ids() {
        let m = match_nodes_greedy(&matrix(vec![vec![0.9, 0.9], vec![0.9, 0.9]]), 0.5);
        let got: Vec<_> = m.pairs.iter().map(|p| (p.expected.as_str(), p.actual.as_str())).collect();
        assert_eq!(got, [("e0", "a0"), ("e1", "a1")]);
    }

    #[test]
    fn optimal_beats_greedy_when_greedy_is_myopic() {
        // greedy takes (0,0)=0.95 and strands row 1; optimal pairs 0-1, 1-0.
        let sim = matrix(vec![vec![0.95, 0.9], vec![0.9, 0.1]]);
        let greedy = match_nodes_greedy(&sim, 0.5);
        let optimal = match_nodes_optimal(&sim, 0.5);
        assert_eq!(greedy.true_positives, 1);
        assert_eq!(optimal.true_positives, 2);
        assert!((total_similarity(&optimal) - 1.8).abs() < 1e-12);
    }

    #[test]
    fn edge_matching_examples() {
        let chain = g(&[("A", "alpha"), ("B", "beta"), ("C", "gamma")], &[("A", "B"), ("B", "C")]);
        let reversed = g(&[("A", "alpha"), ("B", "beta"), ("C", "gamma")], &[("A", "B"), ("C", "B")]);
        let p = HashEmbedder::default();
        let m = match_nodes_greedy(&SimilarityMatrix::compute(&chain, &reversed, &p).unwrap(), 0.75);
        let e = match_edges(&chain, &reversed, &m);
        assert_eq!((e.true_positives, e.false_positives, e.false_negatives), (1, 1, 1));
        let none = MatchResult::from_counts(0, 3, 3);
        let e = match_edges(&chain, &reversed, &none);
        assert_eq!((e.true_positives, e.false_positives, e.false_negatives), (0, 2, 2));
    }

    /// Exhaustive best total similarity over all partial injective matchings.
    fn brute_force_best(sim: &SimilarityMatrix, threshold: f64) -> f64 {
        fn go(sim: &SimilarityMatrix, t: f64, i: usize, used: &mut Vec<bool>) -> f64 {
            if i == sim.rows() {
                return 0.0;
            }
            let mut best = go(sim, t, i + 1, used);
            for j in 0..sim.cols() {
                if !used[j] && sim.values[i][j] >= t {
                    used[j] = true;
                    best = best.max(sim.values[i][j] + go(sim, t, i + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        go(sim, threshold, 0, &mut vec![false; sim.cols()])
    }

    proptest! {
        #[test]
        fn optimal_equals_brute_force(values in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 3), 3)) {
            let sim = matrix(values);
            let best = brute_force_best(&sim, 0.3);
            let optimal = match_nodes_optimal(&sim, 0.3);
            prop_assert!((total_similarity(&optimal) - best).abs() < 1e-9);
            let greedy = match_nodes_greedy(&sim, 0.3);
            prop_assert!(total_similarity(&greedy) <= best + 1e-9);
        }

        #[test]
        fn rectangular_optimal_equals_brute_force(
            values in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 4), 2),
            threshold in 0.0f64..0.8,
        ) {
            let sim = matrix(values);
            let optimal = match_nodes_optimal(&sim, threshold);
            prop_assert!((total_similarity(&optimal) - brute_force_best(&sim, threshold)).abs() < 1e-9);
            let transposed = SimilarityMatrix {
                expected_ids: sim.actual_ids.clone(),
                actual_ids: sim.expected_ids.clone(),
                values: (0..sim.cols()).map(|j| (0..sim.rows()).map(|i| sim.values[i][j]).collect()).collect(),
            };
            let t = match_nodes_optimal(&transposed, threshold);
            prop_assert!((total_similarity(&t) - total_similarity(&optimal)).abs() < 1e-9);
        }

        #[test]
        fn tool_multiset_identities(
            expected in proptest::collection::vec("[abcd]", 0..8),
            actual in proptest::collection::vec("[abcd]", 0..8),
        ) {
            let m = match_tools(&expected, &actual);
            prop_assert_eq!(m.true_positives + m.false_negatives, expected.len());
            prop_assert_eq!(m.true_positives + m.false_positives, actual.len());
        }

        #[test]
        fn prf1_bounded_and_harmonic(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50) {
            let p = prf1(tp, fp, fn_);
            for v in [p.precision, p.recall, p.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if p.precision + p.recall > 0.0 {
                let h = 2.0 * p.precision * p.recall / (p.precision + p.recall);
                prop_assert!((p.f1 - h).abs() < 1e-12);
            }
        }
    }
}
