//! End-to-end snapshot runs and the hourly refresh simulation.
//!
//! A run writes one immutable directory per snapshot time:
//!
//! ```text
//! <out>/<YYYYMMDDTHHMMSSZ>/graph.tsv
//!                          pagerank.jsonl
//!                          clusters.jsonl
//!                          scores.jsonl
//!                          stats.json
//! ```
//!
//! Files are written to a hidden sibling directory first and renamed into
//! place, so a failed run leaves nothing behind. Wall-clock timings are kept
//! in memory only; everything on disk depends on the inputs alone.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::citation::{
    build_graph, graph_stats, pagerank, read_blocklist, CitationGraph, GraphStats, PageRankParams, PageRankScores,
};
use crate::cluster::{three_step_cluster_detailed, ClusterAssignment, ClusterParams, ClusterTimings};
use crate::corpus::{
    ingest_file, Canonicalizer, CorpusSnapshot, Ingested, DEFAULT_TRACKING_PARAMS, DEFAULT_WINDOW_DAYS,
};
use crate::embed::{EmbeddingProvider, FeatureHashEmbedder, PrecomputedEmbeddings};
use crate::error::{Error, Result, Stage, StageExt};
use crate::score::{records_to_jsonl, score_records, OriginalityRecord, DEFAULT_P, DEFAULT_THETA};

/// Snapshot directory name format.
pub const TIMESTAMP_FORMAT: &str = "%Y%m%dT%H%M%SZ";

pub const ARTIFACTS: [&str; 5] = [
    "graph.tsv",
    "pagerank.jsonl",
    "clusters.jsonl",
    "scores.jsonl",
    "stats.json",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    FeatureHash,
    Precomputed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub provider: ProviderKind,
    pub dimension: usize,
    /// Vectors file for the precomputed provider.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            provider: ProviderKind::FeatureHash,
            dimension: 128,
            path: None,
        }
    }
}

impl EmbeddingConfig {
    pub fn provider(&self) -> Result<Box<dyn EmbeddingProvider>> {
        match self.provider {
            ProviderKind::FeatureHash => Ok(Box::new(FeatureHashEmbedder::new(self.dimension)?)),
            ProviderKind::Precomputed => {
                let path = self
                    .path
                    .as_deref()
                    .ok_or_else(|| Error::Config("embedding.path is required for the precomputed provider".into()))?;
                Ok(Box::new(PrecomputedEmbeddings::read_jsonl(path, self.dimension)?))
            }
        }
    }
}

/// All tunables of a run. Stored as JSON; every field is optional in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub window_days: u32,
    pub pagerank: PageRankParams,
    pub embedding: EmbeddingConfig,
    pub cluster: ClusterParams,
    pub p: f64,
    pub theta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocklist: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub canonical_map: Option<PathBuf>,
    pub strip_params: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window_days: DEFAULT_WINDOW_DAYS,
            pagerank: PageRankParams::default(),
            embedding: EmbeddingConfig::default(),
            cluster: ClusterParams::default(),
            p: DEFAULT_P,
            theta: DEFAULT_THETA,
            blocklist: None,
            canonical_map: None,
            strip_params: DEFAULT_TRACKING_PARAMS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_days == 0 {
            return Err(Error::param("window_days", "must be positive"));
        }
        if self.embedding.dimension == 0 {
            return Err(Error::param("embedding.dimension", "must be positive"));
        }
        self.pagerank.validate()?;
        self.cluster.validate()?;
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::param("p", format!("{} is not a positive number", self.p)));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::param("theta", format!("{} not in (0, 1)", self.theta)));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            e => e,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.blocklist, &mut cfg.canonical_map, &mut cfg.embedding.path]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn canonicalizer(&self) -> Result<Canonicalizer> {
        let map = match &self.canonical_map {
            Some(path) => Canonicalizer::load_map(path)?,
            None => Default::default(),
        };
        Ok(Canonicalizer::new(map, self.strip_params.clone()))
    }

    pub fn blocklist(&self) -> Result<HashSet<String>> {
        match &self.blocklist {
            Some(path) => read_blocklist(path),
            None => Ok(HashSet::new()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTimings {
    pub load: Duration,
    pub graph: Duration,
    pub pagerank: Duration,
    pub cluster: Duration,
    pub cluster_detail: ClusterTimings,
    pub score: Duration,
    pub write: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.load + self.graph + self.pagerank + self.cluster + self.score + self.write
    }

    pub fn rows(&self) -> Vec<(&'static str, Duration)> {
        let c = &self.cluster_detail;
        vec![
            ("load", self.load),
            ("graph", self.graph),
            ("pagerank", self.pagerank),
            ("cluster", self.cluster),
            ("  dedup", c.dedup),
            ("  embed", c.embed),
            ("  knn", c.knn),
            ("  split", c.split),
            ("  local", c.local),
            ("score", self.score),
            ("write", self.write),
            ("total", self.total()),
        ]
    }
}

impl std::fmt::Display for StageTimings {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (name, d) in self.rows() {
            writeln!(f, "{name:<10} {:>10.3} ms", d.as_secs_f64() * 1e3)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageRankSummary {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub clusters: usize,
    pub unique_titles: usize,
    pub knn_edges: usize,
    pub subgraphs: usize,
    pub largest_subgraph: usize,
    pub objective: f64,
}

/// Contents of `stats.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotStats {
    pub snapshot_time: DateTime<Utc>,
    pub window_days: u32,
    pub articles: usize,
    pub rejected: usize,
    pub outside_window: usize,
    pub graph: GraphStats,
    pub pagerank: Option<PageRankSummary>,
    pub cluster: ClusterSummary,
}

/// Everything one snapshot produced.
#[derive(Debug, Clone)]
pub struct SnapshotOutput {
    pub graph: CitationGraph,
    pub pagerank: Option<PageRankScores>,
    pub clusters: ClusterAssignment,
    pub records: Vec<OriginalityRecord>,
    pub stats: SnapshotStats,
    pub timings: StageTimings,
    /// Per-subgraph edge lists, present when requested.
    pub subgraph_dumps: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SnapshotResult {
    pub snapshot_time: DateTime<Utc>,
    pub records: Vec<OriginalityRecord>,
    pub graph_stats: GraphStats,
    pub timings: StageTimings,
    pub stats: SnapshotStats,
    /// Directory the artifacts were written to.
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replace an existing snapshot directory.
    pub force: bool,
    /// Also write `subgraphs/NNNNN.tsv` edge lists.
    pub dump_subgraphs: bool,
}

/// Runs every stage on an already windowed corpus without touching the disk.
pub fn compute_snapshot(
    corpus: &CorpusSnapshot,
    config: &PipelineConfig,
    blocklist: &HashSet<String>,
    provider: &dyn EmbeddingProvider,
    dump_subgraphs: bool,
) -> Result<SnapshotOutput> {
    config.validate()?;
    let mut timings = StageTimings::default();

    let clock = Instant::now();
    let graph = build_graph(corpus, blocklist);
    let gstats = graph_stats(&graph);
    timings.graph = clock.elapsed();

    let clock = Instant::now();
    let ranks = if graph.is_empty() {
        None
    } else {
        Some(pagerank(&graph, &config.pagerank).stage(Stage::PageRank)?)
    };
    if let Some(r) = ranks.as_ref().filter(|r| !r.converged) {
        log::warn!(
            "pagerank stopped after {} iterations with residual {:e}",
            r.iterations,
            r.residual
        );
    }
    timings.pagerank = clock.elapsed();

    let clock = Instant::now();
    let run = three_step_cluster_detailed(corpus, provider, &config.cluster).stage(Stage::Cluster)?;
    timings.cluster = clock.elapsed();
    timings.cluster_detail = run.timings;

    let clock = Instant::now();
    let empty = PageRankScores::empty();
    let records = score_records(
        ranks.as_ref().unwrap_or(&empty),
        &run.assignment,
        config.p,
        config.theta,
    )
    .stage(Stage::Score)?;
    timings.score = clock.elapsed();

    let subgraph_dumps = if dump_subgraphs {
        run.subgraphs
            .iter()
            .map(|s| run.graph.subgraph_tsv(s, &run.representatives))
            .collect()
    } else {
        Vec::new()
    };

    let stats = SnapshotStats {
        snapshot_time: corpus.snapshot_time,
        window_days: corpus.window_days,
        articles: corpus.len(),
        rejected: 0,
        outside_window: 0,
        graph: gstats,
        pagerank: ranks.as_ref().map(|r| PageRankSummary {
            iterations: r.iterations,
            residual: r.residual,
            converged: r.converged,
        }),
        cluster: ClusterSummary {
            clusters: run.assignment.cluster_count(),
            unique_titles: run.representatives.len(),
            knn_edges: run.graph.edge_count(),
            subgraphs: run.subgraphs.len(),
            largest_subgraph: run.subgraphs.iter().map(Vec::len).max().unwrap_or(0),
            objective: run.assignment.objective,
        },
    };
    Ok(SnapshotOutput {
        graph,
        pagerank: ranks,
        clusters: run.assignment,
        records,
        stats,
        timings,
        subgraph_dumps,
    })
}

pub fn pagerank_to_jsonl(scores: &PageRankScores) -> String {
    #[derive(Serialize)]
    struct Line<'a> {
        id: &'a str,
        pagerank: f64,
    }
    let mut out = String::new();
    for (id, pagerank) in scores.iter() {
        out.push_str(&serde_json::to_string(&Line { id, pagerank }).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn pagerank_from_jsonl(text: &str, path: &Path) -> Result<PageRankScores> {
    #[derive(Deserialize)]
    struct Line {
        id: String,
        pagerank: f64,
    }
    let mut out = PageRankScores {
        ids: Vec::new(),
        scores: Vec::new(),
        iterations: 0,
        residual: 0.0,
        converged: true,
    };
    for (i, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line: Line = serde_json::from_str(raw).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.ids.push(line.id);
        out.scores.push(line.pagerank);
    }
    Ok(out)
}

pub fn snapshot_dir_name(t: DateTime<Utc>) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the artifacts into `out_root/<ts>` through a temporary directory.
pub fn write_snapshot(output: &SnapshotOutput, out_root: &Path, force: bool) -> Result<PathBuf> {
    let name = snapshot_dir_name(output.stats.snapshot_time);
    let final_dir = out_root.join(&name);
    if final_dir.exists() && !force {
        return Err(Error::AlreadyExists { path: final_dir });
    }
    fs::create_dir_all(out_root).map_err(|e| Error::io(out_root, e))?;
    let tmp = out_root.join(format!(".{name}.tmp-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir(&tmp).map_err(|e| Error::io(&tmp, e))?;

    let result = (|| {
        write_file(&tmp.join("graph.tsv"), &output.graph.to_tsv())?;
        let ranks = output.pagerank.as_ref().map(pagerank_to_jsonl).unwrap_or_default();
        write_file(&tmp.join("pagerank.jsonl"), &ranks)?;
        write_file(&tmp.join("clusters.jsonl"), &output.clusters.to_jsonl())?;
        write_file(&tmp.join("scores.jsonl"), &records_to_jsonl(&output.records))?;
        let stats = serde_json::to_string_pretty(&output.stats).expect("serializable") + "\n";
        write_file(&tmp.join("stats.json"), &stats)?;
        if !output.subgraph_dumps.is_empty() {
            let dir = tmp.join("subgraphs");
            fs::create_dir(&dir).map_err(|e| Error::io(&dir, e))?;
            for (i, dump) in output.subgraph_dumps.iter().enumerate() {
                write_file(&dir.join(format!("{i:05}.tsv")), dump)?;
            }
        }
        if final_dir.exists() {
            fs::remove_dir_all(&final_dir).map_err(|e| Error::io(&final_dir, e))?;
        }
        fs::rename(&tmp, &final_dir).map_err(|e| Error::io(&final_dir, e))
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(&tmp);
    }
    result.map(|()| final_dir)
}

/// Shared inputs of one or more snapshot runs over the same corpus file.
pub struct Prepared {
    pub ingested: Ingested,
    pub blocklist: HashSet<String>,
    pub provider: Box<dyn EmbeddingProvider>,
}

impl Prepared {
    pub fn load(corpus_path: &Path, config: &PipelineConfig) -> Result<Self> {
        config.validate()?;
        let canonicalizer = config.canonicalizer().stage(Stage::Load)?;
        let ingested = ingest_file(corpus_path, &canonicalizer).stage(Stage::Load)?;
        for r in &ingested.rejects {
            log::warn!("{}:{}: {}", corpus_path.display(), r.line, r.reason);
        }
        Ok(Prepared {
            ingested,
            blocklist: config.blocklist().stage(Stage::Load)?,
            provider: config.embedding.provider().stage(Stage::Load)?,
        })
    }

    /// Latest publication time, the natural snapshot time of a static corpus.
    pub fn latest(&self) -> Option<DateTime<Utc>> {
        self.ingested.articles.iter().map(|a| a.published_at).max()
    }

    pub fn snapshot(
        &self,
        config: &PipelineConfig,
        snapshot_time: DateTime<Utc>,
        out_root: &Path,
        options: &RunOptions,
    ) -> Result<SnapshotResult> {
        let clock = Instant::now();
        let corpus = self
            .ingested
            .snapshot(snapshot_time, config.window_days)
            .stage(Stage::Load)?;
        let load = clock.elapsed();

        let mut output = compute_snapshot(
            &corpus,
            config,
            &self.blocklist,
            self.provider.as_ref(),
            options.dump_subgraphs,
        )?;
        output.stats.rejected = self.ingested.rejects.len();
        output.stats.outside_window = self.ingested.articles.len() - corpus.len();
        output.timings.load = load;

        let clock = Instant::now();
        let dir = write_snapshot(&output, out_root, options.force).stage(Stage::Write)?;
        output.timings.write = clock.elapsed();

        Ok(SnapshotResult {
            snapshot_time,
            records: output.records,
            graph_stats: output.stats.graph.clone(),
            timings: output.timings,
            stats: output.stats,
            dir,
        })
    }
}

/// Loads the corpus, runs all stages for one snapshot time and writes
/// `out_root/<ts>/`. Without `snapshot_time` the latest publication time
/// in the corpus is used.
pub fn run_snapshot(
    corpus_path: &Path,
    config: &PipelineConfig,
    snapshot_time: Option<DateTime<Utc>>,
    out_root: &Path,
    options: &RunOptions,
) -> Result<SnapshotResult> {
    let clock = Instant::now();
    let prepared = Prepared::load(corpus_path, config)?;
    let load = clock.elapsed();
    let t = snapshot_time
        .or_else(|| prepared.latest())
        .unwrap_or_else(default_epoch);
    let mut result = prepared.snapshot(config, t, out_root, options)?;
    result.timings.load += load;
    Ok(result)
}

fn default_epoch() -> DateTime<Utc> {
    DateTime::<Utc>::UNIX_EPOCH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub time: DateTime<Utc>,
    pub p_original: f64,
    pub originality: Option<f64>,
}

#[derive(Debug)]
pub struct Tick {
    pub time: DateTime<Utc>,
    pub result: Result<SnapshotResult>,
}

#[derive(Debug)]
pub struct SeriesResult {
    pub ticks: Vec<Tick>,
    /// Per article, one point per successful tick that includes it.
    pub series: BTreeMap<String, Vec<SeriesPoint>>,
}

impl SeriesResult {
    pub fn failures(&self) -> usize {
        self.ticks.iter().filter(|t| t.result.is_err()).count()
    }

    /// `{"id": ..., "series": [{"time", "p_original", "originality"}, ...]}` lines.
    pub fn series_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            id: &'a str,
            series: &'a [SeriesPoint],
        }
        let mut out = String::new();
        for (id, series) in &self.series {
            out.push_str(&serde_json::to_string(&Line { id, series }).expect("serializable"));
            out.push('\n');
        }
        out
    }
}

/// Tick times `start, start + interval, ...` up to and including `end`.
pub fn series_ticks(
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    interval: chrono::Duration,
) -> Result<Vec<DateTime<Utc>>> {
    if interval <= chrono::Duration::zero() {
        return Err(Error::param("interval", "must be positive"));
    }
    if start > end {
        return Err(Error::param("start", format!("{start} is after {end}")));
    }
    let mut out = Vec::new();
    let mut t = start;
    while t <= end {
        out.push(t);
        t += interval;
    }
    Ok(out)
}

/// One snapshot per tick, each with its own window, sequentially. Failed
/// ticks are recorded and skipped. Writes `out_root/series.jsonl` with the
/// p_original history of every article.
pub fn run_series(
    corpus_path: &Path,
    config: &PipelineConfig,
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    interval: chrono::Duration,
    out_root: &Path,
    options: &RunOptions,
) -> Result<SeriesResult> {
    let ticks = series_ticks(start, end, interval)?;
    let prepared = Prepared::load(corpus_path, config)?;
    let mut out = SeriesResult {
        ticks: Vec::with_capacity(ticks.len()),
        series: BTreeMap::new(),
    };
    for time in ticks {
        let result = prepared.snapshot(config, time, out_root, options);
        match &result {
            Ok(r) => {
                for rec in &r.records {
                    out.series.entry(rec.id.clone()).or_default().push(SeriesPoint {
                        time,
                        p_original: rec.p_original,
                        originality: rec.originality,
                    });
                }
            }
            Err(e) => log::error!("tick {time}: {e}"),
        }
        out.ticks.push(Tick { time, result });
    }
    let path = out_root.join("series.jsonl");
    fs::create_dir_all(out_root).map_err(|e| Error::io(out_root, e))?;
    write_file(&path, &out.series_jsonl())?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn default_config_round_trips() {
        let cfg = PipelineConfig::default();
        let json = cfg.to_json();
        assert_eq!(PipelineConfig::from_json(&json).unwrap(), cfg);
        assert_eq!(PipelineConfig::from_json("{}").unwrap(), cfg);
    }

    #[test]
    fn config_rejects_unknown_and_invalid_fields() {
        assert!(matches!(
            PipelineConfig::from_json(r#"{"windw_days": 3}"#),
            Err(Error::Config(_))
        ));
        assert!(PipelineConfig::from_json(r#"{"theta": 1.5}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"cluster": {"local": {"omega": 0.2}}}"#).is_err());
        let cfg = PipelineConfig::from_json(r#"{"cluster": {"k": 7, "split": {"target_size": 50}}}"#).unwrap();
        assert_eq!(cfg.cluster.k, 7);
        assert_eq!(cfg.cluster.split.target_size, 50);
        assert_eq!(cfg.cluster.split.epsilon, 0.01);
    }

    #[test]
    fn config_paths_resolve_next_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        fs::write(&path, r#"{"blocklist": "block.txt"}"#).unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.blocklist.unwrap(), dir.path().join("block.txt"));
    }

    #[test]
    fn ticks_are_inclusive() {
        let t0 = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let hour = chrono::Duration::hours(1);
        assert_eq!(series_ticks(t0, t0 + hour * 2, hour).unwrap().len(), 3);
        assert_eq!(series_ticks(t0, t0, hour).unwrap(), vec![t0]);
        assert!(series_ticks(t0, t0, chrono::Duration::zero()).is_err());
        assert!(series_ticks(t0 + hour, t0, hour).is_err());
    }

    #[test]
    fn snapshot_dir_names_sort_by_time() {
        let t = Utc.with_ymd_and_hms(2024, 3, 9, 7, 5, 3).unwrap();
        assert_eq!(snapshot_dir_name(t), "20240309T070503Z");
    }

    #[test]
    fn pagerank_lines_round_trip() {
        let scores = PageRankScores {
            ids: vec!["a".into(), "b".into()],
            scores: vec![0.1 + 0.2, 0.7],
            iterations: 3,
            residual: 0.0,
            converged: true,
        };
        let text = pagerank_to_jsonl(&scores);
        let back = pagerank_from_jsonl(&text, Path::new("p")).unwrap();
        assert_eq!(back.scores, scores.scores);
        assert_eq!(back.ids, scores.ids);
    }
}
