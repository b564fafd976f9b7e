//! Browser demo: per-cluster normalization, local clustering of a small
//! similarity graph, and PageRank of an edge list.
//!
//! The plain functions return JSON and are what the tests exercise; the
//! `wasm_bindgen` exports wrap them for `www/index.html`.

// `!(x > 0.0)` is how NaN gets rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use originality::citation::{pagerank, CitationGraph, PageRankParams};
use originality::cluster::{greedy_local_cluster, per_cluster_weights, LocalParams, Subgraph};
use originality::score::{normalize_group, p_original};

/// Similarity graph the page starts with: a four-article story, a two-article
/// story, and two weak links between them.
pub const EXAMPLE_SIMILARITIES: &str = "A B 0.7
A D 0.8
B C 0.8
B D 0.9
C D 0.95
E F 0.8
A E 0.1
C F 0.1
";

pub const EXAMPLE_CITATIONS: &str = "b a
c a
d a
d b
e d
";

#[derive(Debug, Serialize)]
pub struct NormalizedRow {
    pub pagerank: f64,
    pub originality: f64,
    pub p_original: f64,
}

/// Normalizes the PageRank values of one cluster; `values` is a list of
/// numbers separated by commas or whitespace.
pub fn normalize_json(values: &str, p: f64, theta: f64) -> Result<String, String> {
    let ranks = parse_numbers(values)?;
    if ranks.is_empty() {
        return Err("enter at least one PageRank value".into());
    }
    if ranks.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
        return Err("PageRank values must be positive".into());
    }
    if !(p > 0.0) {
        return Err("p must be positive".into());
    }
    let s = normalize_group(&ranks, p);
    let rows = ranks
        .iter()
        .zip(&s)
        .map(|(&pagerank, &originality)| {
            Ok(NormalizedRow {
                pagerank,
                originality,
                p_original: p_original(originality.min(1.0), theta).map_err(|e| e.to_string())?,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(serde_json::to_string(&rows).expect("serializable"))
}

fn parse_numbers(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect()
}

#[derive(Debug, Serialize)]
pub struct ClusterView {
    /// Cluster of each article, by name.
    pub clusters: BTreeMap<String, usize>,
    pub weights: Vec<f64>,
    pub objective: f64,
}

/// Greedy local clustering of `a b weight` lines under the missing-pair
/// penalty `omega`.
pub fn cluster_json(edges: &str, omega: f64, passes: usize, seed: u64) -> Result<String, String> {
    let mut names: Vec<String> = Vec::new();
    let mut index = BTreeMap::new();
    let mut id = |name: &str, names: &mut Vec<String>| {
        *index.entry(name.to_string()).or_insert_with(|| {
            names.push(name.to_string());
            names.len() - 1
        })
    };
    let mut list = Vec::new();
    for (i, line) in edges.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split_whitespace().collect();
        let [a, b, w] = cols[..] else {
            return Err(format!("line {}: expected `a b weight`", i + 1));
        };
        let w: f64 = w.parse().map_err(|_| format!("line {}: bad weight `{w}`", i + 1))?;
        if a == b {
            return Err(format!("line {}: self pair", i + 1));
        }
        list.push((id(a, &mut names), id(b, &mut names), w));
    }
    let sub = Subgraph::from_edges(names.len(), &list);
    let params = LocalParams { omega, passes, seed };
    let result = greedy_local_cluster(&sub, &params).map_err(|e| e.to_string())?;
    let view = ClusterView {
        clusters: names.iter().cloned().zip(result.labels.iter().copied()).collect(),
        weights: per_cluster_weights(&sub, &result.labels, omega),
        objective: result.objective,
    };
    Ok(serde_json::to_string(&view).expect("serializable"))
}

#[derive(Debug, Serialize)]
pub struct RankRow {
    pub id: String,
    pub pagerank: f64,
    pub in_degree: usize,
}

/// PageRank of `citing cited` lines, highest first.
pub fn pagerank_json(edges: &str, damping: f64) -> Result<String, String> {
    let mut pairs = Vec::new();
    for (i, line) in edges.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split_whitespace().collect();
        let [a, b] = cols[..] else {
            return Err(format!("line {}: expected `citing cited`", i + 1));
        };
        pairs.push((a, b));
    }
    let graph = CitationGraph::from_id_pairs(pairs);
    if graph.is_empty() {
        return Ok("[]".into());
    }
    let params = PageRankParams {
        damping,
        ..PageRankParams::default()
    };
    let scores = pagerank(&graph, &params).map_err(|e| e.to_string())?;
    let mut rows: Vec<RankRow> = scores
        .iter()
        .enumerate()
        .map(|(v, (id, pagerank))| RankRow {
            id: id.to_string(),
            pagerank,
            in_degree: graph.in_degree(v),
        })
        .collect();
    rows.sort_by(|a, b| b.pagerank.total_cmp(&a.pagerank).then_with(|| a.id.cmp(&b.id)));
    Ok(serde_json::to_string(&rows).expect("serializable"))
}

#[wasm_bindgen]
pub fn normalize(values: &str, p: f64, theta: f64) -> Result<String, JsError> {
    normalize_json(values, p, theta).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn cluster(edges: &str, omega: f64, passes: usize, seed: u32) -> Result<String, JsError> {
    cluster_json(edges, omega, passes, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn rank(edges: &str, damping: f64) -> Result<String, JsError> {
    pagerank_json(edges, damping).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn example_similarities() -> String {
    EXAMPLE_SIMILARITIES.to_string()
}

#[wasm_bindgen]
pub fn example_citations() -> String {
    EXAMPLE_CITATIONS.to_string()
}
