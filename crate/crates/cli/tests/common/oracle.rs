//! Straightforward reference implementations of the evaluation metrics,
//! written against the raw JSON files rather than the library types.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;

use serde_json::Value;

pub struct Graph {
    pub ids: Vec<String>,
    pub labels: Vec<String>,
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn from_doc(doc: &Value) -> Self {
        let g = &doc["task_graph"];
        let ids: Vec<String> = g["nodes"]
            .as_array()
            .unwrap()
            .iter()
            .map(|n| id_text(&n["id"]))
            .collect();
        let labels = g["nodes"]
            .as_array()
            .unwrap()
            .iter()
            .map(|n| n["label"].as_str().unwrap().to_string())
            .collect();
        let at = |v: &Value| ids.iter().position(|i| *i == id_text(v)).unwrap();
        let edges = g["edges"]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| (at(&e["from"]), at(&e["to"])))
            .collect();
        Self { ids, labels, edges }
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    fn adjacent(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u, v))
    }

    fn hops(&self, from: usize) -> HashMap<usize, usize> {
        let mut dist = HashMap::from([(from, 0)]);
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            for &(a, b) in &self.edges {
                if a == u && !dist.contains_key(&b) {
                    dist.insert(b, dist[&u] + 1);
                    queue.push_back(b);
                }
            }
        }
        dist
    }
}

fn id_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn words(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect();
    cleaned.split_whitespace().map(String::from).collect()
}

fn buckets(text: &str) -> BTreeMap<u64, i64> {
    let mut b = BTreeMap::new();
    for w in words(text) {
        *b.entry(fnv1a(w.as_bytes()) % 256).or_insert(0) += 1;
    }
    b
}

/// Cosine of the 256-bucket token-count vectors, from exact integer sums.
pub fn cosine(a: &str, b: &str) -> f64 {
    let (x, y) = (buckets(a), buckets(b));
    let dot: i64 = x.iter().map(|(k, v)| v * y.get(k).copied().unwrap_or(0)).sum();
    let nx: i64 = x.values().map(|v| v * v).sum();
    let ny: i64 = y.values().map(|v| v * v).sum();
    dot as f64 / ((nx * ny) as f64).sqrt()
}

fn natural(a: &str, b: &str) -> Ordering {
    fn chunks(s: &str) -> Vec<(bool, String)> {
        let mut out: Vec<(bool, String)> = Vec::new();
        for c in s.chars() {
            let d = c.is_ascii_digit();
            match out.last_mut() {
                Some((kind, text)) if *kind == d => text.push(c),
                _ => out.push((d, c.to_string())),
            }
        }
        out
    }
    let (ca, cb) = (chunks(a), chunks(b));
    for (x, y) in ca.iter().zip(&cb) {
        let o = match (x.0, y.0) {
            (true, true) => x.1.parse::<u128>().unwrap().cmp(&y.1.parse::<u128>().unwrap()),
            _ => x.1.cmp(&y.1),
        };
        if o != Ordering::Equal {
            return o;
        }
    }
    ca.len().cmp(&cb.len())
}

pub fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    if tp + fp + fn_ == 0 {
        return (1.0, 1.0, 1.0);
    }
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Greedy one-to-one matching on descending similarity.
pub fn greedy(e: &Graph, a: &Graph, sim: &[Vec<f64>], theta: f64) -> Vec<(usize, usize)> {
    let mut cand = Vec::new();
    for i in 0..e.n() {
        for j in 0..a.n() {
            if sim[i][j] >= theta {
                cand.push((i, j));
            }
        }
    }
    cand.sort_by(|&(i1, j1), &(i2, j2)| {
        sim[i2][j2]
            .partial_cmp(&sim[i1][j1])
            .unwrap()
            .then(natural(&e.ids[i1], &e.ids[i2]))
            .then(natural(&a.ids[j1], &a.ids[j2]))
    });
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (i, j) in cand {
        if out.iter().all(|&(x, y)| x != i && y != j) {
            out.push((i, j));
        }
    }
    out
}

/// Minimum edit cost over every partial injective node mapping.
pub fn brute_ged(e: &Graph, a: &Graph, sim: &[Vec<f64>], theta: f64) -> u32 {
    fn go(i: usize, map: &mut Vec<Option<usize>>, used: &mut Vec<bool>, f: &dyn Fn(&[Option<usize>]) -> u32, best: &mut u32) {
        if i == map.len() {
            *best = (*best).min(f(map));
            return;
        }
        map[i] = None;
        go(i + 1, map, used, f, best);
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                map[i] = Some(j);
                go(i + 1, map, used, f, best);
                used[j] = false;
            }
        }
        map[i] = None;
    }
    let cost = |m: &[Option<usize>]| -> u32 {
        let mut c = 0;
        for (i, t) in m.iter().enumerate() {
            c += match t {
                Some(j) => u32::from(sim[i][*j] < theta),
                None => 1,
            };
        }
        c += (0..a.n()).filter(|j| !m.contains(&Some(*j))).count() as u32;
        for &(u, v) in &e.edges {
            match (m[u], m[v]) {
                (Some(x), Some(y)) if a.adjacent(x, y) => {}
                _ => c += 1,
            }
        }
        for &(x, y) in &a.edges {
            let pu = m.iter().position(|t| *t == Some(x));
            let pv = m.iter().position(|t| *t == Some(y));
            match (pu, pv) {
                (Some(u), Some(v)) if e.adjacent(u, v) => {}
                _ => c += 1,
            }
        }
        c
    };
    let mut best = u32::MAX;
    go(0, &mut vec![None; e.n()], &mut vec![false; a.n()], &cost, &mut best);
    best
}

pub fn token_f1(gold: &str, actual: &str) -> f64 {
    let (g, a) = (words(gold), words(actual));
    if a.is_empty() {
        return 0.0;
    }
    let mut pool: Vec<&String> = g.iter().collect();
    let mut common = 0;
    for w in &a {
        if let Some(k) = pool.iter().position(|x| *x == w) {
            pool.remove(k);
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / a.len() as f64;
    let r = common as f64 / g.len() as f64;
    2.0 * p * r / (p + r)
}

/// One row of metrics keyed by CSV column name.
pub fn scenario_row(scenario_dir: &Path, trace_path: &Path, theta: f64, alpha: f64) -> BTreeMap<String, f64> {
    let read = |p: &Path| -> Value { serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap() };
    let e = Graph::from_doc(&read(&scenario_dir.join("graph.json")));
    let trace = read(trace_path);
    let a = Graph::from_doc(&trace["content"]["graph"]);
    let sim: Vec<Vec<f64>> = e
        .labels
        .iter()
        .map(|x| a.labels.iter().map(|y| cosine(x, y)).collect())
        .collect();

    let mut row = BTreeMap::new();
    let mut put3 = |prefix: &str, (p, r, f): (f64, f64, f64)| {
        row.insert(format!("{prefix}_precision"), p);
        row.insert(format!("{prefix}_recall"), r);
        row.insert(format!("{prefix}_f1"), f);
    };
    let m = greedy(&e, &a, &sim, theta);
    put3("node", prf(m.len(), a.n() - m.len(), e.n() - m.len()));
    let fwd: HashMap<usize, usize> = m.iter().copied().collect();
    let kept = e
        .edges
        .iter()
        .filter(|(u, v)| matches!((fwd.get(u), fwd.get(v)), (Some(x), Some(y)) if a.adjacent(*x, *y)))
        .count();
    let edge = prf(kept, a.edges.len() - kept, e.edges.len() - kept);
    put3("edge", edge);

    let expected_calls: Vec<String> = serde_json::from_value(read(&scenario_dir.join("expected_calls.json"))).unwrap();
    let mut actual_calls: Vec<String> = Vec::new();
    for r in trace["content"]["results"].as_array().unwrap() {
        for c in r["tool_calls"].as_array().unwrap() {
            actual_calls.push(c["tool_name"].as_str().unwrap().to_string());
        }
    }
    let mut pool = actual_calls.clone();
    let mut tp = 0;
    for c in &expected_calls {
        if let Some(k) = pool.iter().position(|x| x == c) {
            pool.remove(k);
            tp += 1;
        }
    }
    put3("tool", prf(tp, actual_calls.len() - tp, expected_calls.len() - tp));

    let nls = sim.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).sum::<f64>() / e.n() as f64;
    row.insert("node_label_similarity".into(), nls);
    row.insert("ssi".into(), (nls + edge.2) / 2.0);

    let spl = if m.is_empty() {
        0.0
    } else {
        let mut total = 0.0;
        for &(i, j) in &m {
            let (de, da) = (e.hops(i), a.hops(j));
            for &(k, l) in &m {
                total += match (de.get(&k), da.get(&l)) {
                    (None, None) => 1.0,
                    (Some(&x), Some(&y)) => (-alpha * (x as f64 - y as f64).abs()).exp(),
                    _ => 0.0,
                };
            }
        }
        total / (m.len() * m.len()) as f64
    };
    row.insert("path_length_similarity".into(), spl);
    row.insert("ged".into(), brute_ged(&e, &a, &sim, theta) as f64);
    row.insert("expected_complexity".into(), (e.n() + e.edges.len()) as f64);
    row.insert("actual_complexity".into(), (a.n() + a.edges.len()) as f64);
    let gold = std::fs::read_to_string(scenario_dir.join("gold_response.txt")).unwrap();
    row.insert(
        "answer_score".into(),
        token_f1(gold.trim_end_matches('\n'), trace["content"]["final_answer"].as_str().unwrap()),
    );
    row
}
