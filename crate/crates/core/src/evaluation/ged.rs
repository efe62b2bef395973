//! Graph edit distance between task graphs.
//!
//! Unit costs: node insertion and deletion cost 1, substitution costs 0 when
//! the labels are at least `theta` similar and 1 otherwise, edge insertion and
//! deletion cost 1.

use super::matching::{match_nodes_greedy, SimilarityMatrix};
use crate::embedding::{EmbeddingError, EmbeddingProvider};
use crate::graph::TaskGraph;

pub const DEFAULT_EXACT_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GedResult {
    pub cost: u32,
    pub exact: bool,
}

/// Dense form of a graph pair: adjacency matrices and substitution costs.
#[derive(Debug, Clone)]
pub struct EditProblem {
    pub adj1: Vec<Vec<bool>>,
    pub adj2: Vec<Vec<bool>>,
    /// `sub[i][j]` is the cost of substituting node i of the first graph
    /// with node j of the second.
    pub sub: Vec<Vec<u32>>,
}

impl EditProblem {
    pub fn new(expected: &TaskGraph, actual: &TaskGraph, sim: &SimilarityMatrix, theta: f64) -> Self {
        let sub = sim
            .values
            .iter()
            .map(|row| row.iter().map(|&s| u32::from(s < theta)).collect())
            .collect();
        Self {
            adj1: adjacency(expected),
            adj2: adjacency(actual),
            sub,
        }
    }

    pub fn n1(&self) -> usize {
        self.adj1.len()
    }

    pub fn n2(&self) -> usize {
        self.adj2.len()
    }

    /// Cost of the edit path induced by `mapping` (node i of the first graph
    /// goes to `mapping[i]`, or is deleted when `None`).
    pub fn mapping_cost(&self, mapping: &[Option<usize>]) -> u32 {
        let (n1, n2) = (self.n1(), self.n2());
        let mut cost = 0;
        let mut image = vec![false; n2];
        for (i, t) in mapping.iter().enumerate() {
            match *t {
                Some(j) => {
                    cost += self.sub[i][j];
                    image[j] = true;
                }
                None => cost += 1,
            }
        }
        cost += image.iter().filter(|&&used| !used).count() as u32;
        for u in 0..n1 {
            for v in 0..n1 {
                if self.adj1[u][v] {
                    let kept = matches!((mapping[u], mapping[v]), (Some(a), Some(b)) if self.adj2[a][b]);
                    if !kept {
                        cost += 1;
                    }
                }
            }
        }
        let mut preimage = vec![None; n2];
        for (i, t) in mapping.iter().enumerate() {
            if let Some(j) = t {
                preimage[*j] = Some(i);
            }
        }
        for a in 0..n2 {
            for b in 0..n2 {
                if self.adj2[a][b] {
                    let kept = matches!((preimage[a], preimage[b]), (Some(u), Some(v)) if self.adj1[u][v]);
                    if !kept {
                        cost += 1;
                    }
                }
            }
        }
        cost
    }

    /// Exact minimum by depth-first branch and bound, starting from an upper
    /// bound `initial`.
    pub fn exact(&self, initial: u32) -> u32 {
        let n1 = self.n1();
        let degree = |u: usize| (0..n1).filter(|&v| self.adj1[u][v] || self.adj1[v][u]).count();
        let mut order: Vec<usize> = (0..n1).collect();
        order.sort_by_key(|&u| std::cmp::Reverse(degree(u)));
        let mut search = Search {
            p: self,
            order,
            assigned: vec![None; n1],
            is_assigned: vec![false; n1],
            used: vec![false; self.n2()],
            best: initial,
        };
        search.go(0, 0);
        search.best
    }
}

fn adjacency(g: &TaskGraph) -> Vec<Vec<bool>> {
    let index: std::collections::HashMap<&str, usize> =
        g.nodes().iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut adj = vec![vec![false; g.node_count()]; g.node_count()];
    for e in g.edges() {
        adj[index[e.from.as_str()]][index[e.to.as_str()]] = true;
    }
    adj
}

struct Search<'a> {
    p: &'a EditProblem,
    order: Vec<usize>,
    assigned: Vec<Option<usize>>,
    is_assigned: Vec<bool>,
    used: Vec<bool>,
    best: u32,
}

impl Search<'_> {
    /// Cost added by assigning `u` to `target`, counting the node operation
    /// and edges between `u` and already assigned nodes.
    fn step_cost(&self, u: usize, target: Option<usize>) -> u32 {
        let p = self.p;
        let mut cost = match target {
            Some(j) => p.sub[u][j],
            None => 1,
        };
        for &w in &self.order {
            if !self.is_assigned[w] {
                continue;
            }
            let tw = self.assigned[w];
            for (a, b, ta, tb) in [(u, w, target, tw), (w, u, tw, target)] {
                let e1 = p.adj1[a][b];
                let e2 = matches!((ta, tb), (Some(x), Some(y)) if p.adj2[x][y]);
                cost += u32::from(e1 != e2);
            }
        }
        cost
    }

    fn lower_bound(&self, depth: usize) -> u32 {
        let p = self.p;
        let r1 = self.order.len() - depth;
        let r2 = self.used.iter().filter(|&&u| !u).count();
        let mut e1 = 0u32;
        for u in 0..p.n1() {
            for v in 0..p.n1() {
                if p.adj1[u][v] && !(self.is_assigned[u] && self.is_assigned[v]) {
                    e1 += 1;
                }
            }
        }
        let mut e2 = 0u32;
        for a in 0..p.n2() {
            for b in 0..p.n2() {
                if p.adj2[a][b] && !(self.used[a] && self.used[b]) {
                    e2 += 1;
                }
            }
        }
        r1.abs_diff(r2) as u32 + e1.abs_diff(e2)
    }

    /// Cost of inserting the unused nodes of the second graph and every edge
    /// touching them.
    fn completion_cost(&self) -> u32 {
        let p = self.p;
        let mut cost = self.used.iter().filter(|&&u| !u).count() as u32;
        for a in 0..p.n2() {
            for b in 0..p.n2() {
                if p.adj2[a][b] && !(self.used[a] && self.used[b]) {
                    cost += 1;
                }
            }
        }
        cost
    }

    fn go(&mut self, depth: usize, acc: u32) {
        if depth == self.order.len() {
            let total = acc + self.completion_cost();
            if total < self.best {
                self.best = total;
            }
            return;
        }
        if acc + self.lower_bound(depth) >= self.best {
            return;
        }
        let u = self.order[depth];
        let mut targets: Vec<Option<usize>> = (0..self.p.n2()).filter(|&j| !self.used[j]).map(Some).collect();
        targets.push(None);
        for target in targets {
            let step = self.step_cost(u, target);
            if acc + step >= self.best {
                continue;
            }
            self.assigned[u] = target;
            self.is_assigned[u] = true;
            if let Some(j) = target {
                self.used[j] = true;
            }
            self.go(depth + 1, acc + step);
            if let Some(j) = target {
                self.used[j] = false;
            }
            self.is_assigned[u] = false;
            self.assigned[u] = None;
        }
    }
}

/// Edit distance with the exact search when the graphs are small enough
/// (`|V1| + |V2| <= exact_limit`), else an upper bound: the cheaper of the
/// greedy node matching and that matching with leftover nodes paired in order.
pub fn graph_edit_distance_from(
    expected: &TaskGraph,
    actual: &TaskGraph,
    sim: &SimilarityMatrix,
    theta: f64,
    exact_limit: usize,
) -> GedResult {
    let problem = EditProblem::new(expected, actual, sim, theta);
    let matching = match_nodes_greedy(sim, theta);
    let col: std::collections::HashMap<&str, usize> =
        sim.actual_ids.iter().enumerate().map(|(j, id)| (id.as_str(), j)).collect();
    let forward = matching.forward();
    let mapping: Vec<Option<usize>> = sim
        .expected_ids
        .iter()
        .map(|id| forward.get(id.as_str()).map(|a| col[a]))
        .collect();
    let mut padded = mapping.clone();
    let mut free = (0..problem.n2()).filter(|j| !mapping.contains(&Some(*j)));
    for slot in padded.iter_mut().filter(|t| t.is_none()) {
        *slot = free.next();
    }
    let upper = problem.mapping_cost(&mapping).min(problem.mapping_cost(&padded));
    if problem.n1() + problem.n2() <= exact_limit {
        GedResult {
            cost: problem.exact(upper + 1),
            exact: true,
        }
    } else {
        GedResult { cost: upper, exact: false }
    }
}

pub fn graph_edit_distance(
    expected: &TaskGraph,
    actual: &TaskGraph,
    provider: &dyn EmbeddingProvider,
    theta: f64,
    exact_limit: usize,
) -> Result<GedResult, EmbeddingError> {
    let sim = SimilarityMatrix::compute(expected, actual, provider)?;
    Ok(graph_edit_distance_from(expected, actual, &sim, theta, exact_limit))
}
