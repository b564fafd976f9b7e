//! Title embeddings, title-hash mini-clusters and similarity primitives.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_title, CorpusSnapshot};
use crate::error::{Error, Result};

pub const DEFAULT_DIMENSION: usize = 128;

/// Unit-norm embedding of a normalized title.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Scales `values` to unit length. Returns `None` for a zero vector.
    pub fn normalized(mut values: Vec<f32>) -> Option<Self> {
        let norm = values.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return None;
        }
        for x in &mut values {
            *x = (f64::from(*x) / norm) as f32;
        }
        Some(EmbeddingVector(values))
    }

    /// The vector reserved for titles without any token.
    pub fn empty_title(dimension: usize) -> Self {
        let mut v = vec![0.0; dimension];
        v[0] = 1.0;
        EmbeddingVector(v)
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
    }
}

/// Dot product with eight independent lanes so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    let (ca, ra) = a.split_at(a.len() - a.len() % 8);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(8).zip(cb.chunks_exact(8)) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dimension() != b.dimension() {
        return Err(Error::DimensionMismatch {
            expected: a.dimension(),
            actual: b.dimension(),
        });
    }
    Ok(f64::from(dot(&a.0, &b.0)).clamp(-1.0, 1.0))
}

/// Cosine embedding loss for a labelled pair: `y = 1` for the same news event,
/// `y = -1` for different events.
pub fn cosine_embedding_loss(x1: &EmbeddingVector, x2: &EmbeddingVector, y: i8, margin: f64) -> Result<f64> {
    let cos = cosine_similarity(x1, x2)?;
    match y {
        1 => Ok(1.0 - cos),
        -1 => Ok((cos - margin).max(0.0)),
        _ => Err(Error::param("y", format!("{y} is not +1 or -1"))),
    }
}

/// Source of title embeddings. Implementations are immutable once built.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed(&self, normalized_title: &str) -> Result<EmbeddingVector>;

    /// Embeds a batch, reporting every title the provider cannot serve.
    fn embed_all(&self, titles: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let mut out = Vec::with_capacity(titles.len());
        let mut missing = Vec::new();
        for t in titles {
            match self.embed(t) {
                Ok(v) => out.push(v),
                Err(Error::MissingEmbeddings(keys)) => missing.extend(keys),
                Err(e) => return Err(e),
            }
        }
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(Error::MissingEmbeddings(missing))
        }
    }
}

/// Signed feature hashing of token unigrams and bigrams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureHashEmbedder {
    dimension: usize,
}

impl Default for FeatureHashEmbedder {
    fn default() -> Self {
        FeatureHashEmbedder {
            dimension: DEFAULT_DIMENSION,
        }
    }
}

// FNV-1a, 64 bit
fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

impl FeatureHashEmbedder {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::param("dimension", "must be at least 2"));
        }
        Ok(FeatureHashEmbedder { dimension })
    }

    fn add_feature(&self, acc: &mut [f32], parts: &[&[u8]]) {
        let h = fnv1a(parts);
        // Low bits choose the bucket, the top bit the sign.
        let bucket = (h % self.dimension as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        acc[bucket] += sign;
    }
}

impl EmbeddingProvider for FeatureHashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, normalized_title: &str) -> Result<EmbeddingVector> {
        let tokens: Vec<&str> = normalized_title.split_whitespace().collect();
        let mut acc = vec![0f32; self.dimension];
        for t in &tokens {
            self.add_feature(&mut acc, &[b"u:", t.as_bytes()]);
        }
        for pair in tokens.windows(2) {
            self.add_feature(&mut acc, &[b"b:", pair[0].as_bytes(), b" ", pair[1].as_bytes()]);
        }
        // Signed buckets can cancel out completely; treat that like no tokens.
        Ok(EmbeddingVector::normalized(acc).unwrap_or_else(|| EmbeddingVector::empty_title(self.dimension)))
    }
}

#[derive(Debug, Deserialize)]
struct VectorLine {
    title: String,
    vector: Vec<f32>,
}

/// Looks titles up in a table of externally computed vectors.
#[derive(Debug, Clone)]
pub struct PrecomputedEmbeddings {
    dimension: usize,
    vectors: HashMap<String, EmbeddingVector>,
}

impl PrecomputedEmbeddings {
    pub fn new(dimension: usize, vectors: HashMap<String, EmbeddingVector>) -> Result<Self> {
        if let Some(bad) = vectors.values().find(|v| v.dimension() != dimension) {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                actual: bad.dimension(),
            });
        }
        Ok(PrecomputedEmbeddings { dimension, vectors })
    }

    /// Reads `{"title": ..., "vector": [...]}` lines. Vectors are rescaled to
    /// unit norm; zero vectors and dimension mismatches are errors.
    pub fn read_jsonl(path: &Path, dimension: usize) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut vectors = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |reason: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            };
            let rec: VectorLine = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
            if rec.vector.len() != dimension {
                return Err(parse_err(format!(
                    "vector has dimension {}, expected {dimension}",
                    rec.vector.len()
                )));
            }
            let v = EmbeddingVector::normalized(rec.vector).ok_or_else(|| parse_err("zero vector".into()))?;
            vectors.insert(rec.title, v);
        }
        Ok(PrecomputedEmbeddings { dimension, vectors })
    }
}

impl EmbeddingProvider for PrecomputedEmbeddings {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, normalized_title: &str) -> Result<EmbeddingVector> {
        if normalized_title.is_empty() {
            if let Some(v) = self.vectors.get("") {
                return Ok(v.clone());
            }
            return Ok(EmbeddingVector::empty_title(self.dimension));
        }
        self.vectors
            .get(normalized_title)
            .cloned()
            .ok_or_else(|| Error::MissingEmbeddings(vec![normalized_title.to_string()]))
    }
}

/// Articles sharing one normalized title.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiniCluster {
    pub normalized_title: String,
    /// Corpus indices of member articles, ascending.
    pub members: Vec<usize>,
    pub article_ids: Vec<String>,
    /// Lexicographically smallest member id.
    pub representative_id: String,
}

/// Groups articles by normalized title. Mini-clusters are ordered by the
/// corpus position of their first member.
pub fn hash_dedup_titles(corpus: &CorpusSnapshot) -> Vec<MiniCluster> {
    let mut slot: HashMap<String, usize> = HashMap::new();
    let mut clusters: Vec<MiniCluster> = Vec::new();
    for (i, article) in corpus.articles.iter().enumerate() {
        let title = normalize_title(&article.title);
        let k = *slot.entry(title.clone()).or_insert_with(|| {
            clusters.push(MiniCluster {
                normalized_title: title,
                members: Vec::new(),
                article_ids: Vec::new(),
                representative_id: article.id.clone(),
            });
            clusters.len() - 1
        });
        let mc = &mut clusters[k];
        mc.members.push(i);
        mc.article_ids.push(article.id.clone());
        if article.id < mc.representative_id {
            mc.representative_id = article.id.clone();
        }
    }
    clusters
}

/// Mini-cluster id per article id.
pub fn mini_cluster_index(clusters: &[MiniCluster]) -> BTreeMap<&str, usize> {
    clusters
        .iter()
        .enumerate()
        .flat_map(|(k, mc)| mc.article_ids.iter().map(move |id| (id.as_str(), k)))
        .collect()
}
