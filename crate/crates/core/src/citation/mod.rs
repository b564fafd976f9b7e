//! The integrity-filtered news citation graph.
//!
//! An edge `v -> u` means article `v` links to article `u`. Links between two
//! articles of the same publisher, links touching a blocklisted publisher and
//! links leaving the window are discarded before any ranking happens; vertices
//! left without any citation are removed.

mod pagerank;

pub use pagerank::{pagerank, PageRankParams, PageRankScores};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusSnapshot;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexMeta {
    pub publisher: String,
    pub published_at: DateTime<Utc>,
}

/// Links discarded while building a graph, kept for observability.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCounts {
    /// Links to the citing article itself or to the same publisher.
    pub self_links: usize,
    /// Links where either side is a blocklisted publisher.
    pub blocklisted: usize,
    /// Links whose target is not an article in the window.
    pub external: usize,
    /// Windowed articles dropped because no citation touches them.
    pub isolated: usize,
}

/// Directed citation graph over article ids in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CitationGraph {
    ids: Vec<String>,
    meta: Vec<Option<VertexMeta>>,
    /// Sorted, duplicate-free `(citing, cited)` pairs.
    edges: Vec<(usize, usize)>,
    out_offsets: Vec<usize>,
    in_offsets: Vec<usize>,
    in_sources: Vec<usize>,
    filtered: FilterCounts,
}

impl CitationGraph {
    /// Builds a graph from vertex ids and index pairs. Self-loops and
    /// duplicate pairs are dropped; vertices without edges are kept only if
    /// they appear in `ids`, so callers wanting the isolated-vertex invariant
    /// should use [`build_graph`] or [`CitationGraph::from_id_pairs`].
    pub fn from_edges(ids: Vec<String>, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let meta = vec![None; ids.len()];
        Self::assemble(ids, meta, edges.into_iter().collect(), FilterCounts::default())
    }

    /// Builds a graph from `(citing_id, cited_id)` pairs; vertices are ordered
    /// by first appearance.
    pub fn from_id_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut ids = Vec::new();
        let mut edges = Vec::new();
        for (a, b) in pairs {
            if a == b {
                continue;
            }
            let mut idx = |s: &'a str| {
                *index.entry(s).or_insert_with(|| {
                    ids.push(s.to_string());
                    ids.len() - 1
                })
            };
            let (ia, ib) = (idx(a), idx(b));
            edges.push((ia, ib));
        }
        Self::from_edges(ids, edges)
    }

    fn assemble(
        ids: Vec<String>,
        meta: Vec<Option<VertexMeta>>,
        mut edges: Vec<(usize, usize)>,
        filtered: FilterCounts,
    ) -> Self {
        let n = ids.len();
        edges.retain(|&(a, b)| a != b && a < n && b < n);
        edges.sort_unstable();
        edges.dedup();

        let mut out_offsets = vec![0usize; n + 1];
        let mut in_counts = vec![0usize; n + 1];
        for &(a, b) in &edges {
            out_offsets[a + 1] += 1;
            in_counts[b + 1] += 1;
        }
        for i in 0..n {
            out_offsets[i + 1] += out_offsets[i];
            in_counts[i + 1] += in_counts[i];
        }
        let in_offsets = in_counts.clone();
        let mut cursor = in_counts;
        let mut in_sources = vec![0usize; edges.len()];
        // Edges are sorted by source, so every in-list ends up sorted too.
        for &(a, b) in &edges {
            in_sources[cursor[b]] = a;
            cursor[b] += 1;
        }
        CitationGraph {
            ids,
            meta,
            edges,
            out_offsets,
            in_offsets,
            in_sources,
            filtered,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn meta(&self, v: usize) -> Option<&VertexMeta> {
        self.meta[v].as_ref()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.out_offsets[v + 1] - self.out_offsets[v]
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.in_offsets[v + 1] - self.in_offsets[v]
    }

    /// Citing vertices of `v`, ascending.
    pub fn in_neighbors(&self, v: usize) -> &[usize] {
        &self.in_sources[self.in_offsets[v]..self.in_offsets[v + 1]]
    }

    /// Cited vertices of `v`, ascending.
    pub fn out_neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges[self.out_offsets[v]..self.out_offsets[v + 1]]
            .iter()
            .map(|&(_, b)| b)
    }

    pub fn filtered(&self) -> FilterCounts {
        self.filtered
    }

    pub fn index_of(&self) -> HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }

    /// In-degree keyed by article id.
    pub fn in_degrees(&self) -> HashMap<String, usize> {
        (0..self.vertex_count())
            .map(|v| (self.ids[v].clone(), self.in_degree(v)))
            .collect()
    }

    /// `citing_id<TAB>cited_id` lines in edge order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(self.edges.len() * 24);
        for &(a, b) in &self.edges {
            let _ = writeln!(out, "{}\t{}", self.ids[a], self.ids[b]);
        }
        out
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            match (cols.next(), cols.next(), cols.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => pairs.push((a, b)),
                _ => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        reason: "expected `citing_id<TAB>cited_id`".into(),
                    })
                }
            }
        }
        Ok(Self::from_id_pairs(pairs))
    }
}

/// Reads a blocklist file: one publisher per line, blank lines and `#`
/// comments ignored.
pub fn read_blocklist(path: &Path) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

/// Builds the filtered citation graph of a windowed corpus.
pub fn build_graph(corpus: &CorpusSnapshot, blocklist: &HashSet<String>) -> CitationGraph {
    let articles = &corpus.articles;
    let by_url: HashMap<&str, usize> = articles
        .iter()
        .enumerate()
        .map(|(i, a)| (a.canonical_url.as_str(), i))
        .collect();

    let mut filtered = FilterCounts::default();
    let mut edges = Vec::new();
    for (v, article) in articles.iter().enumerate() {
        for link in &article.links {
            let Some(&u) = by_url.get(link.as_str()) else {
                filtered.external += 1;
                continue;
            };
            let cited = &articles[u];
            if u == v || cited.publisher == article.publisher {
                filtered.self_links += 1;
            } else if blocklist.contains(&article.publisher) || blocklist.contains(&cited.publisher) {
                filtered.blocklisted += 1;
            } else {
                edges.push((v, u));
            }
        }
    }

    let mut touched = vec![false; articles.len()];
    for &(a, b) in &edges {
        touched[a] = true;
        touched[b] = true;
    }
    let mut remap = vec![usize::MAX; articles.len()];
    let mut ids = Vec::new();
    let mut meta = Vec::new();
    for (i, article) in articles.iter().enumerate() {
        if touched[i] {
            remap[i] = ids.len();
            ids.push(article.id.clone());
            meta.push(Some(VertexMeta {
                publisher: article.publisher.clone(),
                published_at: article.published_at,
            }));
        }
    }
    filtered.isolated = articles.len() - ids.len();
    let edges = edges.into_iter().map(|(a, b)| (remap[a], remap[b])).collect();
    CitationGraph::assemble(ids, meta, edges, filtered)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeBucket {
    pub degree: usize,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub vertices: usize,
    pub edges: usize,
    pub dangling: usize,
    pub in_degree_histogram: Vec<DegreeBucket>,
    pub out_degree_histogram: Vec<DegreeBucket>,
    pub removed: FilterCounts,
}

fn histogram(degrees: impl Iterator<Item = usize>) -> Vec<DegreeBucket> {
    let mut counts = BTreeMap::new();
    for d in degrees {
        *counts.entry(d).or_insert(0usize) += 1;
    }
    counts
        .into_iter()
        .map(|(degree, count)| DegreeBucket { degree, count })
        .collect()
}

pub fn graph_stats(graph: &CitationGraph) -> GraphStats {
    let n = graph.vertex_count();
    GraphStats {
        vertices: n,
        edges: graph.edge_count(),
        dangling: (0..n).filter(|&v| graph.out_degree(v) == 0).count(),
        in_degree_histogram: histogram((0..n).map(|v| graph.in_degree(v))),
        out_degree_histogram: histogram((0..n).map(|v| graph.out_degree(v))),
        removed: graph.filtered(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Article;
    use chrono::TimeZone;

    fn article(id: &str, publisher: &str, day: u32, links: &[&str]) -> Article {
        Article {
            id: id.into(),
            url: format!("https://{publisher}.example/{id}"),
            canonical_url: format!("https://{publisher}.example/{id}"),
            title: id.into(),
            publisher: publisher.into(),
            published_at: Utc.with_ymd_and_hms(2024, 1, day, 0, 0, 0).unwrap(),
            links: links.iter().map(|s| s.to_string()).collect(),
            raw_html: None,
        }
    }

    fn corpus(articles: Vec<Article>) -> CorpusSnapshot {
        let now = Utc.with_ymd_and_hms(2024, 1, 8, 0, 0, 0).unwrap();
        CorpusSnapshot::from_articles(articles, now, 7).unwrap()
    }

    fn edge_ids(g: &CitationGraph) -> Vec<(String, String)> {
        g.edges()
            .iter()
            .map(|&(a, b)| (g.ids()[a].clone(), g.ids()[b].clone()))
            .collect()
    }

    #[test]
    fn same_publisher_links_are_dropped() {
        let g = build_graph(
            &corpus(vec![
                article("a1", "a", 2, &["https://a.example/a2"]),
                article("a2", "a", 2, &[]),
            ]),
            &HashSet::new(),
        );
        assert!(g.is_empty());
        assert_eq!(g.filtered().self_links, 1);
        assert_eq!(g.filtered().isolated, 2);
    }

    #[test]
    fn mutual_citation_across_publishers() {
        let g = build_graph(
            &corpus(vec![
                article("a1", "a", 2, &["https://b.example/b1"]),
                article("b1", "b", 2, &["https://a.example/a1"]),
            ]),
            &HashSet::new(),
        );
        assert_eq!((g.vertex_count(), g.edge_count()), (2, 2));
    }

    /// Five articles: `spam` is blocklisted, `old` is outside the window.
    pub(crate) fn five_article_fixture() -> (CorpusSnapshot, HashSet<String>) {
        let mut stale = article("old", "c", 1, &[]);
        stale.published_at = Utc.with_ymd_and_hms(2023, 12, 1, 0, 0, 0).unwrap();
        let articles = vec![
            article("orig", "a", 2, &["https://a.example/orig"]),
            article(
                "f1",
                "b",
                3,
                &[
                    "https://a.example/orig",
                    "https://c.example/old",
                    "https://s.example/spam",
                ],
            ),
            article("f2", "c", 3, &["https://a.example/orig", "https://b.example/f1"]),
            article("spam", "s", 4, &["https://a.example/orig", "https://b.example/f1"]),
            article("f3", "a", 5, &["https://a.example/orig", "https://c.example/f2"]),
            stale,
        ];
        let blocklist = HashSet::from(["s".to_string()]);
        (corpus(articles), blocklist)
    }

    #[test]
    fn five_article_fixture_edges_match_hand_enumeration() {
        let (c, blocklist) = five_article_fixture();
        assert_eq!(c.len(), 5);

        // Brute force: test the edge predicate on every ordered pair.
        let mut expected = Vec::new();
        for v in &c.articles {
            for u in &c.articles {
                if v.id != u.id
                    && v.links.contains(&u.canonical_url)
                    && v.publisher != u.publisher
                    && !blocklist.contains(&v.publisher)
                    && !blocklist.contains(&u.publisher)
                {
                    expected.push((v.id.clone(), u.id.clone()));
                }
            }
        }
        let g = build_graph(&c, &blocklist);
        let mut got = edge_ids(&g);
        got.sort();
        expected.sort();
        assert_eq!(got, expected);
        assert_eq!(
            expected,
            [("f1", "orig"), ("f2", "f1"), ("f2", "orig"), ("f3", "f2")].map(|(a, b)| (a.to_string(), b.to_string()))
        );

        let stats = graph_stats(&g);
        assert_eq!(stats.vertices, 4);
        assert_eq!(stats.edges, 4);
        assert_eq!(
            stats.removed,
            FilterCounts {
                self_links: 2,
                blocklisted: 3,
                external: 1,
                isolated: 1,
            }
        );
        assert_eq!(stats.dangling, 1);
    }

    #[test]
    fn empty_graph_stats_are_zero() {
        let g = CitationGraph::from_edges(Vec::new(), Vec::new());
        assert_eq!(graph_stats(&g), GraphStats::default());
    }

    #[test]
    fn two_cycle_stats() {
        let g = CitationGraph::from_id_pairs([("a", "b"), ("b", "a")]);
        let s = graph_stats(&g);
        assert_eq!((s.vertices, s.edges, s.dangling), (2, 2, 0));
        assert_eq!(s.in_degree_histogram, vec![DegreeBucket { degree: 1, count: 2 }]);
    }

    #[test]
    fn id_pairs_drop_loops_and_duplicates() {
        let g = CitationGraph::from_id_pairs([("a", "b"), ("a", "b"), ("c", "c"), ("b", "c")]);
        assert_eq!(g.ids(), ["a", "b", "c"]);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.in_neighbors(1), &[0]);
        assert_eq!(g.out_neighbors(0).collect::<Vec<_>>(), [1]);
    }

    #[test]
    fn tsv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (c, blocklist) = five_article_fixture();
        let g = build_graph(&c, &blocklist);
        let path = dir.path().join("graph.tsv");
        fs::write(&path, g.to_tsv()).unwrap();
        let back = CitationGraph::read_tsv(&path).unwrap();
        let sorted = |g: &CitationGraph| {
            let mut e = edge_ids(g);
            e.sort();
            e
        };
        assert_eq!(sorted(&back), sorted(&g));

        fs::write(&path, "a\tb\tc\n").unwrap();
        assert!(matches!(
            CitationGraph::read_tsv(&path),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
