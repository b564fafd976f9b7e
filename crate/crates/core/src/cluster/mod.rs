//! News-event clustering in three steps: title-hash mini-clusters, a balanced
//! split of the KNN similarity graph, and greedy local clustering inside each
//! piece.

mod knn;
mod local;
mod split;
mod union_find;

pub use knn::build_knn_graph;
pub use local::{
    clustering_objective, greedy_local_cluster, per_cluster_weights, LocalClusters, LocalParams, Subgraph,
};
pub use split::{find_subgraphs, SplitParams};
pub use union_find::UnionFind;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusSnapshot;
use crate::embed::{hash_dedup_titles, EmbeddingProvider};
use crate::error::{Error, Result};

/// Undirected weighted graph; weights are cosine similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    n: usize,
    k: usize,
    /// `(a, b, w)` with `a < b`, sorted, one entry per pair.
    edges: Vec<(usize, usize, f64)>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl SimilarityGraph {
    /// Normalizes pairs to `a < b`, drops self-edges and keeps the first
    /// weight seen for a repeated pair.
    pub fn from_edges(n: usize, edges: Vec<(usize, usize, f64)>, k: usize) -> Self {
        let mut edges: Vec<(usize, usize, f64)> = edges
            .into_iter()
            .filter(|&(a, b, _)| a != b && a < n && b < n)
            .map(|(a, b, w)| (a.min(b), a.max(b), w))
            .collect();
        edges.sort_by_key(|e| (e.0, e.1));
        edges.dedup_by(|later, first| (later.0, later.1) == (first.0, first.1));
        let mut adj = vec![Vec::new(); n];
        for &(a, b, w) in &edges {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        for list in &mut adj {
            list.sort_by_key(|&(u, _)| u);
        }
        SimilarityGraph { n, k, edges, adj }
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    /// Edge list of the subgraph on `vertices`, one `a<TAB>b<TAB>w` line per
    /// edge, with vertex labels taken from `labels`.
    pub fn subgraph_tsv(&self, vertices: &[usize], labels: &[String]) -> String {
        let inside: std::collections::HashSet<usize> = vertices.iter().copied().collect();
        let mut out = String::new();
        for &(a, b, w) in &self.edges {
            if inside.contains(&a) && inside.contains(&b) {
                let _ = writeln!(out, "{}\t{}\t{}", labels[a], labels[b], w);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    pub k: usize,
    pub min_similarity: f64,
    pub split: SplitParams,
    pub local: LocalParams,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            k: 20,
            min_similarity: 0.4,
            split: SplitParams::default(),
            local: LocalParams::default(),
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        if !(-1.0..=1.0).contains(&self.min_similarity) {
            return Err(Error::param("min_similarity", "must lie in [-1, 1]"));
        }
        self.split.validate()?;
        self.local.validate()
    }
}

/// News-event cluster of every article, aligned with the corpus order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterAssignment {
    pub ids: Vec<String>,
    pub clusters: Vec<usize>,
    /// Sum of internal cluster weights over all subgraphs.
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLine<'a> {
    pub id: &'a str,
    pub cluster: usize,
}

impl ClusterAssignment {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.iter().max().map_or(0, |m| m + 1)
    }

    pub fn to_map(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.clusters.iter().copied())
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.ids.iter().map(String::as_str).zip(self.clusters.iter().copied())
    }

    /// `{"id": ..., "cluster": ...}` lines.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (id, cluster) in self.iter() {
            out.push_str(&serde_json::to_string(&ClusterLine { id, cluster }).expect("serializable"));
            out.push('\n');
        }
        out
    }

    /// Parses [`to_jsonl`](Self::to_jsonl) output; `path` is only used in errors.
    pub fn from_jsonl(text: &str, path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Line {
            id: String,
            cluster: usize,
        }
        let mut out = ClusterAssignment::default();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: Line = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            out.ids.push(rec.id);
            out.clusters.push(rec.cluster);
        }
        Ok(out)
    }
}

/// Intermediate products of a three-step run, for inspection and debugging.
#[derive(Debug, Clone)]
pub struct ThreeStepRun {
    pub assignment: ClusterAssignment,
    /// Representative article id of each unique title (KNN vertex).
    pub representatives: Vec<String>,
    pub graph: SimilarityGraph,
    pub subgraphs: Vec<Vec<usize>>,
    pub timings: ClusterTimings,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClusterTimings {
    pub dedup: Duration,
    pub embed: Duration,
    pub knn: Duration,
    pub split: Duration,
    pub local: Duration,
}

pub fn three_step_cluster(
    corpus: &CorpusSnapshot,
    provider: &dyn EmbeddingProvider,
    params: &ClusterParams,
) -> Result<ClusterAssignment> {
    Ok(three_step_cluster_detailed(corpus, provider, params)?.assignment)
}

/// Mini-clusters, embedding of each unique title, KNN graph, balanced split,
/// greedy local clustering per subgraph, then expansion back to articles.
/// Cluster ids are numbered by the corpus position of their first article.
pub fn three_step_cluster_detailed(
    corpus: &CorpusSnapshot,
    provider: &dyn EmbeddingProvider,
    params: &ClusterParams,
) -> Result<ThreeStepRun> {
    params.validate()?;
    let mut timings = ClusterTimings::default();

    let clock = Instant::now();
    let minis = hash_dedup_titles(corpus);
    timings.dedup = clock.elapsed();

    let clock = Instant::now();
    let titles: Vec<&str> = minis.iter().map(|m| m.normalized_title.as_str()).collect();
    let vectors = provider.embed_all(&titles)?;
    timings.embed = clock.elapsed();

    let clock = Instant::now();
    let graph = build_knn_graph(&vectors, params.k, params.min_similarity)?;
    timings.knn = clock.elapsed();

    let clock = Instant::now();
    let subgraphs = find_subgraphs(&graph, &params.split)?;
    timings.split = clock.elapsed();

    // Each subgraph is an independent unit of work with its own seed stream.
    let clock = Instant::now();
    let local: Vec<LocalClusters> = subgraphs
        .par_iter()
        .enumerate()
        .map(|(i, vertices)| {
            let sub = Subgraph::induced(&graph, vertices);
            let p = LocalParams {
                seed: params.local.seed.wrapping_add(i as u64),
                ..params.local
            };
            greedy_local_cluster(&sub, &p)
        })
        .collect::<Result<_>>()?;
    timings.local = clock.elapsed();

    // (subgraph, local label) for each unique title
    let mut title_cluster = vec![(0usize, 0usize); minis.len()];
    for (s, (vertices, lc)) in subgraphs.iter().zip(&local).enumerate() {
        for (&v, &l) in vertices.iter().zip(&lc.labels) {
            title_cluster[v] = (s, l);
        }
    }
    let mut article_cluster = vec![(0usize, 0usize); corpus.len()];
    for (k, mc) in minis.iter().enumerate() {
        for &i in &mc.members {
            article_cluster[i] = title_cluster[k];
        }
    }
    let mut renumber: HashMap<(usize, usize), usize> = HashMap::new();
    let clusters = article_cluster
        .iter()
        .map(|key| {
            let next = renumber.len();
            *renumber.entry(*key).or_insert(next)
        })
        .collect();

    Ok(ThreeStepRun {
        assignment: ClusterAssignment {
            ids: corpus.articles.iter().map(|a| a.id.clone()).collect(),
            clusters,
            objective: local.iter().map(|l| l.objective).sum(),
        },
        representatives: minis.iter().map(|m| m.representative_id.clone()).collect(),
        graph,
        subgraphs,
        timings,
    })
}
