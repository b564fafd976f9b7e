//! `originality` command line: one subcommand per pipeline stage plus
//! full snapshot and series runs.
//!
//! Exit status: 0 on success, 1 on usage or validation errors, 2 on runtime
//! failures (I/O, existing output, failed series ticks).

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use chrono::{DateTime, Utc};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use originality::citation::{build_graph, graph_stats, pagerank, CitationGraph, PageRankScores};
use originality::cluster::{three_step_cluster_detailed, ClusterAssignment};
use originality::corpus::{ingest_file, normalize_title, CorpusSnapshot};
use originality::eval::{
    evaluate, generate_synthetic_corpus, in_degree_views, labels_to_tsv, pair_similarities, pairs_to_tsv, read_labels,
    read_pairs, EvalInputs, SynthParams, LIFT_THRESHOLDS,
};
use originality::pipeline::{
    pagerank_from_jsonl, pagerank_to_jsonl, run_series, run_snapshot, PipelineConfig, Prepared, RunOptions,
};
use originality::score::{records_from_jsonl, records_to_jsonl, score_records, WeightsConfig};

#[derive(Parser)]
#[command(
    name = "originality",
    version,
    about = "News originality scoring over citation graphs"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline config (JSON). Missing fields take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides the clustering seed (and the generator seed of `synth`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// RFC 3339 snapshot time; defaults to the latest publication time.
    #[arg(long, global = true, value_name = "TIME")]
    snapshot_time: Option<DateTime<Utc>>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and canonicalize an articles file.
    Ingest {
        input: PathBuf,
        /// Canonical articles JSONL (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Rejected lines as JSONL (default: stderr summary only).
        #[arg(long)]
        rejects: Option<PathBuf>,
    },
    /// Build the filtered citation graph of one snapshot.
    Graph {
        input: PathBuf,
        /// Edge list TSV (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Graph statistics JSON.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// PageRank over an edge list.
    Pagerank {
        graph: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Three-step title clustering of one snapshot.
    Cluster {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write one edge list per subgraph into this directory.
        #[arg(long, value_name = "DIR")]
        dump_subgraphs: Option<PathBuf>,
    },
    /// Per-cluster normalization and promotion probabilities.
    Score {
        #[arg(long)]
        pagerank: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        /// Weights config; its `p` and `theta` replace the pipeline config's.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full snapshot into OUT_DIR/<timestamp>/.
    Run {
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Replace an existing snapshot directory.
        #[arg(long)]
        force: bool,
        /// Also write subgraphs/NNNNN.tsv.
        #[arg(long)]
        dump_subgraphs: bool,
    },
    /// One snapshot per tick from START to END inclusive.
    Series {
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        start: DateTime<Utc>,
        #[arg(long)]
        end: DateTime<Utc>,
        /// Tick spacing, e.g. `1h`, `30m`, `1day`.
        #[arg(long, default_value = "1h", value_parser = humantime::parse_duration)]
        interval: std::time::Duration,
        #[arg(long)]
        force: bool,
    },
    /// Metrics of a snapshot directory against labeled data.
    Eval {
        /// Snapshot directory written by `run`.
        #[arg(long)]
        run_dir: PathBuf,
        /// Articles file, needed for embedding AUC over `--pairs`.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// `id_a<TAB>id_b<TAB>label` similarity ratings.
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// `id<TAB>rating` originality ratings.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Report JSON (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic corpus with ground truth.
    Synth {
        #[arg(long, default_value_t = 50)]
        events: usize,
        #[arg(long, default_value_t = 5)]
        followers: usize,
        #[arg(long, default_value_t = 0)]
        noise: usize,
        /// Writes corpus.jsonl, truth.tsv, pairs.tsv and labels.tsv here.
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Failure that maps to exit status 2 regardless of its cause.
#[derive(Debug)]
struct RuntimeFailure(String);

impl std::fmt::Display for RuntimeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for RuntimeFailure {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_status(&e))
        }
    }
}

fn exit_status(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<RuntimeFailure>() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<originality::Error>() {
            return if err.is_validation() { 1 } else { 2 };
        }
    }
    2
}

fn load_config(global: &Global) -> anyhow::Result<PipelineConfig> {
    let mut config = match &global.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.cluster.local.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

/// Writes to `path`, or stdout without one.
fn emit(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| RuntimeFailure(format!("{}: {e}", dir.display())))?;
            }
            fs::write(p, text).map_err(|e| RuntimeFailure(format!("{}: {e}", p.display())))?;
        }
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| RuntimeFailure(format!("stdout: {e}")))?,
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Windowed corpus at the requested (or latest) time, with the loaded
/// blocklist and embedding provider.
fn snapshot(input: &Path, config: &PipelineConfig, global: &Global) -> anyhow::Result<(CorpusSnapshot, Prepared)> {
    let prepared = Prepared::load(input, config)?;
    let time = global
        .snapshot_time
        .or_else(|| prepared.latest())
        .unwrap_or(DateTime::<Utc>::UNIX_EPOCH);
    Ok((prepared.ingested.snapshot(time, config.window_days)?, prepared))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let global = &cli.global;
    match cli.command {
        Command::Ingest { input, out, rejects } => {
            let config = load_config(global)?;
            let ingested = ingest_file(&input, &config.canonicalizer()?)?;
            let mut text = String::new();
            for a in &ingested.articles {
                text.push_str(&serde_json::to_string(&a.to_record())?);
                text.push('\n');
            }
            emit(out.as_deref(), &text)?;
            let mut lines = String::new();
            for r in &ingested.rejects {
                lines.push_str(&serde_json::to_string(r)?);
                lines.push('\n');
            }
            if let Some(path) = rejects {
                emit(Some(&path), &lines)?;
            }
            eprintln!(
                "{} articles, {} rejected",
                ingested.articles.len(),
                ingested.rejects.len()
            );
        }
        Command::Graph { input, out, stats } => {
            let config = load_config(global)?;
            let (corpus, prepared) = snapshot(&input, &config, global)?;
            let graph = build_graph(&corpus, &prepared.blocklist);
            emit(out.as_deref(), &graph.to_tsv())?;
            if let Some(path) = stats {
                emit(Some(&path), &to_json(&graph_stats(&graph)))?;
            }
            eprintln!("{} vertices, {} edges", graph.vertex_count(), graph.edge_count());
        }
        Command::Pagerank { graph, out } => {
            let config = load_config(global)?;
            let graph = CitationGraph::read_tsv(&graph)?;
            let scores = if graph.is_empty() {
                PageRankScores::empty()
            } else {
                pagerank(&graph, &config.pagerank)?
            };
            if !scores.converged {
                log::warn!(
                    "pagerank stopped after {} iterations, residual {:e}",
                    scores.iterations,
                    scores.residual
                );
            }
            emit(out.as_deref(), &pagerank_to_jsonl(&scores))?;
        }
        Command::Cluster {
            input,
            out,
            dump_subgraphs,
        } => {
            let config = load_config(global)?;
            let (corpus, prepared) = snapshot(&input, &config, global)?;
            let run = three_step_cluster_detailed(&corpus, prepared.provider.as_ref(), &config.cluster)?;
            emit(out.as_deref(), &run.assignment.to_jsonl())?;
            if let Some(dir) = dump_subgraphs {
                for (i, s) in run.subgraphs.iter().enumerate() {
                    let path = dir.join(format!("{i:05}.tsv"));
                    emit(Some(&path), &run.graph.subgraph_tsv(s, &run.representatives))?;
                }
            }
            let t = run.timings;
            eprintln!(
                "{} clusters from {} unique titles; knn {:.3}s, local {:.3}s",
                run.assignment.cluster_count(),
                run.representatives.len(),
                t.knn.as_secs_f64(),
                t.local.as_secs_f64()
            );
        }
        Command::Score {
            pagerank,
            clusters,
            weights,
            out,
        } => {
            let config = load_config(global)?;
            let (p, theta) = match weights {
                Some(path) => {
                    let w = WeightsConfig::load(&path)?;
                    (w.p, w.theta)
                }
                None => (config.p, config.theta),
            };
            let scores = pagerank_from_jsonl(&read(&pagerank)?, &pagerank)?;
            let clusters = ClusterAssignment::from_jsonl(&read(&clusters)?, &clusters)?;
            let records = score_records(&scores, &clusters, p, theta)?;
            emit(out.as_deref(), &records_to_jsonl(&records))?;
        }
        Command::Run {
            input,
            out_dir,
            force,
            dump_subgraphs,
        } => {
            let config = load_config(global)?;
            let options = RunOptions { force, dump_subgraphs };
            let result = run_snapshot(&input, &config, global.snapshot_time, &out_dir, &options)?;
            eprint!("{}", result.timings);
            println!("{}", result.dir.display());
        }
        Command::Series {
            input,
            out_dir,
            start,
            end,
            interval,
            force,
        } => {
            let config = load_config(global)?;
            let interval = chrono::Duration::from_std(interval).context("interval out of range")?;
            let options = RunOptions {
                force,
                dump_subgraphs: false,
            };
            let result = run_series(&input, &config, start, end, interval, &out_dir, &options)?;
            for tick in &result.ticks {
                match &tick.result {
                    Ok(r) => println!("{}", r.dir.display()),
                    Err(e) => eprintln!("tick {}: {e}", tick.time.to_rfc3339()),
                }
            }
            let failed = result.failures();
            if failed > 0 {
                return Err(RuntimeFailure(format!("{failed} of {} ticks failed", result.ticks.len())).into());
            }
        }
        Command::Eval {
            run_dir,
            corpus,
            pairs,
            labels,
            out,
        } => {
            let config = load_config(global)?;
            let scores_path = run_dir.join("scores.jsonl");
            let records = records_from_jsonl(&read(&scores_path)?, &scores_path)?;
            let clusters_path = run_dir.join("clusters.jsonl");
            let clusters = ClusterAssignment::from_jsonl(&read(&clusters_path)?, &clusters_path)?;
            let graph = CitationGraph::read_tsv(&run_dir.join("graph.tsv"))?;
            let views = in_degree_views(&graph.in_degrees());

            let pairs = match &pairs {
                Some(path) => read_pairs(path)?,
                None => Vec::new(),
            };
            let scored_pairs = if pairs.is_empty() {
                Vec::new()
            } else {
                let Some(corpus) = &corpus else {
                    bail!(originality::Error::Config(
                        "--pairs needs --corpus for the titles".into()
                    ));
                };
                let ingested = ingest_file(corpus, &config.canonicalizer()?)?;
                let titles: HashMap<String, String> = ingested
                    .articles
                    .iter()
                    .map(|a| (a.id.clone(), normalize_title(&a.title)))
                    .collect();
                pair_similarities(&pairs, &titles, config.embedding.provider()?.as_ref())?
            };
            let labels = match &labels {
                Some(path) => read_labels(path)?,
                None => Vec::new(),
            };
            let report = evaluate(&EvalInputs {
                scored_pairs: &scored_pairs,
                clusters: Some(&clusters),
                records: &records,
                labels: &labels,
                views: &views,
                thresholds: &LIFT_THRESHOLDS,
                theta: config.theta,
            })?;
            emit(out.as_deref(), &to_json(&report))?;
        }
        Command::Synth {
            events,
            followers,
            noise,
            out_dir,
        } => {
            let params = SynthParams::new(events, followers, noise, global.seed.unwrap_or(0));
            let synth = generate_synthetic_corpus(&params)?;
            emit(Some(&out_dir.join("corpus.jsonl")), &synth.to_jsonl())?;
            emit(Some(&out_dir.join("truth.tsv")), &synth.truth.to_tsv())?;
            emit(Some(&out_dir.join("pairs.tsv")), &pairs_to_tsv(&synth.pairs))?;
            emit(Some(&out_dir.join("labels.tsv")), &labels_to_tsv(&synth.labels))?;
            eprintln!("{} articles in {} events", synth.articles.len(), events);
        }
    }
    Ok(())
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).map_err(|e| RuntimeFailure(format!("{}: {e}", path.display())).into())
}
