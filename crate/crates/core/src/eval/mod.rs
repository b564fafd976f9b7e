//! Evaluation metrics: pairwise ROC AUC, pair-based clustering precision and
//! recall, the promotion lift table, and the synthetic corpus generator.

mod synth;

pub use synth::{generate_synthetic_corpus, GroundTruth, SynthParams, SyntheticCorpus, TruthRow};

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::embed::{cosine_similarity, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::score::OriginalityRecord;

/// Binarization points allowed for the four-level similarity scale.
pub const BINARIZE_POINTS: [f64; 3] = [0.5, 1.5, 2.5];

/// Two articles and a rater's similarity label in {0, 1, 2, 3}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub id_a: String,
    pub id_b: String,
    pub label: f64,
}

/// Originality rating in {1, 2, 3}; 3 is fully original.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginalityLabel {
    pub id: String,
    pub rating: f64,
}

fn tsv_fields<'a>(path: &Path, line: usize, raw: &'a str, want: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = raw.split('\t').collect();
    if fields.len() != want {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: format!("expected {want} tab-separated fields, got {}", fields.len()),
        });
    }
    Ok(fields)
}

fn parse_level(path: &Path, line: usize, raw: &str, allowed: &[f64]) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: format!("`{raw}` is not a number"),
    })?;
    if !allowed.contains(&v) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: format!("{v} is not one of {allowed:?}"),
        });
    }
    Ok(v)
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

/// `id_a<TAB>id_b<TAB>label` per line.
pub fn read_pairs(path: &Path) -> Result<Vec<LabeledPair>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    data_lines(&text)
        .map(|(line, raw)| {
            let f = tsv_fields(path, line, raw, 3)?;
            Ok(LabeledPair {
                id_a: f[0].to_string(),
                id_b: f[1].to_string(),
                label: parse_level(path, line, f[2], &[0.0, 1.0, 2.0, 3.0])?,
            })
        })
        .collect()
}

pub fn pairs_to_tsv(pairs: &[LabeledPair]) -> String {
    pairs
        .iter()
        .map(|p| format!("{}\t{}\t{:.1}\n", p.id_a, p.id_b, p.label))
        .collect()
}

/// `id<TAB>rating` per line.
pub fn read_labels(path: &Path) -> Result<Vec<OriginalityLabel>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    data_lines(&text)
        .map(|(line, raw)| {
            let f = tsv_fields(path, line, raw, 2)?;
            Ok(OriginalityLabel {
                id: f[0].to_string(),
                rating: parse_level(path, line, f[1], &[1.0, 2.0, 3.0])?,
            })
        })
        .collect()
}

pub fn labels_to_tsv(labels: &[OriginalityLabel]) -> String {
    labels.iter().map(|l| format!("{}\t{:.1}\n", l.id, l.rating)).collect()
}

/// ROC AUC of `scores` for the binary `positive` labels, by the rank-sum
/// formula with midranks for tied scores.
pub fn binary_auc(scored: &[(f64, bool)]) -> Result<f64> {
    let positives = scored.iter().filter(|s| s.1).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }
    if let Some(bad) = scored.iter().find(|s| s.0.is_nan()) {
        return Err(Error::param("score", format!("{} is not a number", bad.0)));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));
    let mut positive_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        positive_rank_sum += midrank * order[i..=j].iter().filter(|&&k| scored[k].1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (positives as f64, negatives as f64);
    Ok((positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// ROC AUC of model scores for labeled pairs; a pair is positive when its
/// label exceeds `binarize_at`.
pub fn pairwise_auc(pairs: &[(LabeledPair, f64)], binarize_at: f64) -> Result<f64> {
    if !BINARIZE_POINTS.contains(&binarize_at) {
        return Err(Error::param(
            "binarize_at",
            format!("{binarize_at} is not one of {BINARIZE_POINTS:?}"),
        ));
    }
    let scored: Vec<(f64, bool)> = pairs.iter().map(|(p, s)| (*s, p.label > binarize_at)).collect();
    binary_auc(&scored)
}

/// Confusion counts over labeled pairs, where "predicted positive" means the
/// two articles share a cluster. Undefined ratios are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

pub fn clustering_precision_recall(
    assignment: &ClusterAssignment,
    pairs: &[LabeledPair],
    positive_at: f64,
) -> Result<PrecisionRecall> {
    let cluster = assignment.to_map();
    let lookup = |id: &str| cluster.get(id).copied().ok_or_else(|| Error::UnknownId(id.to_string()));
    let mut pr = PrecisionRecall::default();
    for pair in pairs {
        let same = lookup(&pair.id_a)? == lookup(&pair.id_b)?;
        match (same, pair.label > positive_at) {
            (true, true) => pr.true_positives += 1,
            (true, false) => pr.false_positives += 1,
            (false, true) => pr.false_negatives += 1,
            (false, false) => pr.true_negatives += 1,
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    pr.precision = ratio(pr.true_positives, pr.true_positives + pr.false_positives);
    pr.recall = ratio(pr.true_positives, pr.true_positives + pr.false_negatives);
    Ok(pr)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftRow {
    pub threshold: f64,
    /// Share of all views landing on articles with originality above the
    /// threshold; `None` when there are no views at all.
    pub promoted_view_share: Option<f64>,
}

/// Share of views going to articles with `s_v > theta`, per threshold.
/// Articles without an originality score count as 0; articles missing from
/// `views` have no views.
pub fn lift_table(records: &[OriginalityRecord], views: &HashMap<String, f64>, thresholds: &[f64]) -> Vec<LiftRow> {
    let scored: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.originality.unwrap_or(0.0), views.get(&r.id).copied().unwrap_or(0.0)))
        .collect();
    let total: f64 = scored.iter().map(|s| s.1).sum();
    thresholds
        .iter()
        .map(|&threshold| {
            // fold from +0.0; `sum` of nothing is -0.0
            let promoted = scored.iter().filter(|s| s.0 > threshold).fold(0.0, |a, s| a + s.1);
            LiftRow {
                threshold,
                promoted_view_share: (total > 0.0).then(|| promoted / total),
            }
        })
        .collect()
}

/// Default view model: views proportional to citation in-degree.
pub fn in_degree_views(in_degrees: &HashMap<String, usize>) -> HashMap<String, f64> {
    in_degrees.iter().map(|(id, &d)| (id.clone(), d as f64)).collect()
}

/// How often the top-scoring article of each cluster is the labeled original,
/// and how well "promoted" (`s_v > theta`) agrees with a rating of 3.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OriginalityAgreement {
    pub rated: usize,
    /// Rated articles where `s_v > theta` coincides with rating 3.
    pub agreement: Option<f64>,
    /// Clusters that contain a rating-3 article.
    pub clusters: usize,
    /// Fraction of those clusters whose highest `s_v` has rating 3.
    pub top_is_original: Option<f64>,
}

pub fn originality_agreement(
    records: &[OriginalityRecord],
    labels: &[OriginalityLabel],
    theta: f64,
) -> OriginalityAgreement {
    let rating: HashMap<&str, f64> = labels.iter().map(|l| (l.id.as_str(), l.rating)).collect();
    let mut out = OriginalityAgreement::default();
    let mut agree = 0usize;
    // cluster -> (best s, best is original, has original)
    let mut clusters: BTreeMap<usize, (f64, bool, bool)> = BTreeMap::new();
    for r in records {
        let s = r.originality.unwrap_or(0.0);
        let original = rating.get(r.id.as_str()) == Some(&3.0);
        if rating.contains_key(r.id.as_str()) {
            out.rated += 1;
            if (s > theta) == original {
                agree += 1;
            }
        }
        let entry = clusters.entry(r.cluster).or_insert((f64::NEG_INFINITY, false, false));
        if s > entry.0 {
            entry.0 = s;
            entry.1 = original;
        }
        entry.2 |= original;
    }
    out.agreement = (out.rated > 0).then(|| agree as f64 / out.rated as f64);
    let with_original: Vec<_> = clusters.values().filter(|c| c.2).collect();
    out.clusters = with_original.len();
    out.top_is_original = (!with_original.is_empty())
        .then(|| with_original.iter().filter(|c| c.1).count() as f64 / with_original.len() as f64);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub binarize_at: f64,
    pub auc: Option<f64>,
}

/// Everything `eval` reports, serialized as one JSON document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub pairs: usize,
    pub embedding_auc: Vec<AucRow>,
    pub clustering: Option<PrecisionRecall>,
    pub originality: Option<OriginalityAgreement>,
    pub lift: Vec<LiftRow>,
}

/// Promotion thresholds reported by default.
pub const LIFT_THRESHOLDS: [f64; 5] = [0.4, 0.5, 0.6, 0.7, 0.8];

/// Pairs rated above this count as "same event" for clustering precision/recall.
pub const SAME_EVENT_AT: f64 = 1.5;

/// Cosine similarity of each labeled pair, from normalized titles keyed by id.
pub fn pair_similarities(
    pairs: &[LabeledPair],
    titles: &HashMap<String, String>,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<(LabeledPair, f64)>> {
    let title = |id: &str| titles.get(id).ok_or_else(|| Error::UnknownId(id.to_string()));
    pairs
        .iter()
        .map(|p| {
            let a = provider.embed(title(&p.id_a)?)?;
            let b = provider.embed(title(&p.id_b)?)?;
            Ok((p.clone(), cosine_similarity(&a, &b)?))
        })
        .collect()
}

/// Inputs of [`evaluate`]; parts that are empty are left out of the report.
pub struct EvalInputs<'a> {
    pub scored_pairs: &'a [(LabeledPair, f64)],
    pub clusters: Option<&'a ClusterAssignment>,
    pub records: &'a [OriginalityRecord],
    pub labels: &'a [OriginalityLabel],
    pub views: &'a HashMap<String, f64>,
    pub thresholds: &'a [f64],
    pub theta: f64,
}

pub fn evaluate(inputs: &EvalInputs) -> Result<EvalReport> {
    let pairs: Vec<LabeledPair> = inputs.scored_pairs.iter().map(|p| p.0.clone()).collect();
    let mut report = EvalReport {
        pairs: pairs.len(),
        ..EvalReport::default()
    };
    if !pairs.is_empty() {
        for at in BINARIZE_POINTS {
            let auc = match pairwise_auc(inputs.scored_pairs, at) {
                Ok(v) => Some(v),
                Err(Error::SingleClass) => None,
                Err(e) => return Err(e),
            };
            report.embedding_auc.push(AucRow { binarize_at: at, auc });
        }
        if let Some(c) = inputs.clusters {
            report.clustering = Some(clustering_precision_recall(c, &pairs, SAME_EVENT_AT)?);
        }
    }
    if !inputs.labels.is_empty() {
        report.originality = Some(originality_agreement(inputs.records, inputs.labels, inputs.theta));
    }
    if !inputs.records.is_empty() {
        report.lift = lift_table(inputs.records, inputs.views, inputs.thresholds);
    }
    Ok(report)
}
