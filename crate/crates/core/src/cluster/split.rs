//! Balanced partition of the similarity graph by thresholding edge weights.

use serde::{Deserialize, Serialize};

use super::union_find::UnionFind;
use super::SimilarityGraph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitParams {
    /// Largest subgraph (in vertices) that should reach a single worker.
    pub target_size: usize,
    /// Binary search stops once the threshold bracket is this narrow.
    pub epsilon: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams {
            target_size: 2000,
            epsilon: 0.01,
            lower: 0.0,
            upper: 1.0,
        }
    }
}

impl SplitParams {
    pub fn validate(&self) -> Result<()> {
        if self.target_size == 0 {
            return Err(Error::param("target_size", "must be positive"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::param("epsilon", "must be positive"));
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.lower) || !unit.contains(&self.upper) || self.lower >= self.upper {
            return Err(Error::param(
                "lower/upper",
                format!("need 0 <= lower < upper <= 1, got [{}, {}]", self.lower, self.upper),
            ));
        }
        Ok(())
    }
}

struct Splitter<'a> {
    edges: &'a [(usize, usize, f64)],
    params: SplitParams,
    /// Global vertex -> position in the vertex list currently being split.
    pos: Vec<usize>,
    out: Vec<Vec<usize>>,
}

impl Splitter<'_> {
    /// Connected components of `vertices` using the edges (indices into
    /// `self.edges`) whose weight is at least `threshold`.
    fn components(&mut self, vertices: &[usize], edges: &[usize], threshold: f64) -> Vec<Vec<usize>> {
        for (p, &v) in vertices.iter().enumerate() {
            self.pos[v] = p;
        }
        let mut uf = UnionFind::new(vertices.len());
        for &e in edges {
            let (a, b, w) = self.edges[e];
            if w >= threshold {
                uf.union(self.pos[a], self.pos[b]);
            }
        }
        uf.groups()
            .into_iter()
            .map(|g| g.into_iter().map(|p| vertices[p]).collect())
            .collect()
    }

    /// Splits the subgraph induced by `vertices`; `edges` holds every edge of
    /// that subgraph that can still matter (weight at least `lower`).
    fn split(&mut self, vertices: Vec<usize>, edges: Vec<usize>, lower: f64, upper: f64) {
        if vertices.len() <= self.params.target_size {
            self.out.push(vertices);
            return;
        }
        if upper - lower <= self.params.epsilon {
            // Tightest threshold tried; anything still too large is emitted as is.
            let comps = self.components(&vertices, &edges, upper);
            self.out.extend(comps);
            return;
        }

        let t = self.params.target_size;
        let mut vertices = vertices;
        let mut edges = edges;
        let mut high = upper;
        let mut last = upper;
        while high - lower > self.params.epsilon && !vertices.is_empty() {
            let mid = 0.5 * (lower + high);
            last = mid;
            let comps = self.components(&vertices, &edges, mid);
            let oversized: Vec<Vec<usize>> = comps.into_iter().filter(|c| c.len() > t).collect();
            if !oversized.is_empty() {
                let mut label = vec![usize::MAX; vertices.len()];
                for p in 0..vertices.len() {
                    self.pos[vertices[p]] = p;
                }
                for (ci, c) in oversized.iter().enumerate() {
                    for &v in c {
                        label[self.pos[v]] = ci;
                    }
                }
                let mut inner: Vec<Vec<usize>> = vec![Vec::new(); oversized.len()];
                let mut keep_edges = Vec::with_capacity(edges.len());
                for &e in &edges {
                    let (a, b, w) = self.edges[e];
                    let (la, lb) = (label[self.pos[a]], label[self.pos[b]]);
                    if la == usize::MAX && lb == usize::MAX {
                        keep_edges.push(e);
                    } else if la == lb && w >= mid {
                        inner[la].push(e);
                    }
                }
                let keep_vertices: Vec<usize> = vertices
                    .iter()
                    .enumerate()
                    .filter(|&(p, _)| label[p] == usize::MAX)
                    .map(|(_, &v)| v)
                    .collect();
                for (c, inner_edges) in oversized.into_iter().zip(inner) {
                    self.split(c, inner_edges, mid, high);
                }
                vertices = keep_vertices;
                edges = keep_edges;
            }
            high = mid;
        }
        if !vertices.is_empty() {
            let comps = self.components(&vertices, &edges, last);
            self.out.extend(comps);
        }
    }
}

/// Partitions the vertices into subgraphs of at most `target_size` vertices
/// where edge weights allow it.
///
/// A threshold `m` is binary searched between `lower` and `upper`. Edges
/// lighter than `m` are ignored and connected components that are still too
/// large are split again with the bracket `[m, upper]`. Once a bracket is
/// narrower than `epsilon` the remaining components are emitted whatever
/// their size. The result is a partition: every vertex appears exactly once.
/// Subgraphs are ordered by their smallest vertex and sorted internally.
pub fn find_subgraphs(graph: &SimilarityGraph, params: &SplitParams) -> Result<Vec<Vec<usize>>> {
    params.validate()?;
    let n = graph.vertex_count();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut splitter = Splitter {
        edges: graph.edges(),
        params: *params,
        pos: vec![0; n],
        out: Vec::new(),
    };
    let edges: Vec<usize> = (0..graph.edge_count())
        .filter(|&e| graph.edges()[e].2 >= params.lower)
        .collect();
    splitter.split((0..n).collect(), edges, params.lower, params.upper);
    let mut out = splitter.out;
    for s in &mut out {
        s.sort_unstable();
    }
    out.sort_unstable_by_key(|s| s[0]);
    Ok(out)
}
