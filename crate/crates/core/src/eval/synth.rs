//! Seeded synthetic news corpus with planted events and originals.
//!
//! Every event has one original article. Followers are published after it,
//! all cite it, and some also cite an earlier follower. Follower titles are
//! word-level rewrites of the event's title, or verbatim copies (syndication).
//! Each event draws its words from its own slice of a generated vocabulary,
//! so title groups are well separated.

use std::collections::HashSet;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabeledPair, OriginalityLabel};
use crate::corpus::{Article, CorpusSnapshot};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub events: usize,
    pub followers: usize,
    /// Extra citation edges between random articles of different publishers.
    pub noise: usize,
    pub seed: u64,
    /// Probability that a follower copies an earlier title verbatim.
    pub duplicate_rate: f64,
    /// Probability that a follower also cites an earlier follower.
    pub chain_rate: f64,
    /// Words per event title.
    pub title_words: usize,
    pub start: DateTime<Utc>,
    /// Originals are spread evenly over this many hours after `start`.
    pub span_hours: i64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            events: 100,
            followers: 5,
            noise: 0,
            seed: 0,
            duplicate_rate: 0.2,
            chain_rate: 0.3,
            title_words: 8,
            start: Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap(),
            span_hours: 72,
        }
    }
}

impl SynthParams {
    pub fn new(events: usize, followers: usize, noise: usize, seed: u64) -> Self {
        SynthParams {
            events,
            followers,
            noise,
            seed,
            ..SynthParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.events == 0 {
            return Err(Error::param("events", "must be positive"));
        }
        if self.title_words < 3 {
            return Err(Error::param("title_words", "need at least 3 words"));
        }
        for (name, p) in [("duplicate_rate", self.duplicate_rate), ("chain_rate", self.chain_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(name, format!("{p} not in [0, 1]")));
            }
        }
        if self.span_hours < 0 {
            return Err(Error::param("span_hours", "must not be negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRow {
    pub id: String,
    pub event: usize,
    pub original: bool,
}

/// Event and original flag per article, in corpus order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub rows: Vec<TruthRow>,
}

impl GroundTruth {
    pub fn to_tsv(&self) -> String {
        self.rows
            .iter()
            .map(|r| format!("{}\t{}\t{}\n", r.id, r.event, u8::from(r.original)))
            .collect()
    }

    /// Ids of the originals, indexed by event.
    pub fn originals(&self) -> Vec<&str> {
        let mut out = vec![""; self.rows.iter().map(|r| r.event + 1).max().unwrap_or(0)];
        for r in self.rows.iter().filter(|r| r.original) {
            out[r.event] = &r.id;
        }
        out
    }

    pub fn events(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.event).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub articles: Vec<Article>,
    pub truth: GroundTruth,
    /// Same-event pairs (labels 2 or 3) and as many cross-event pairs (label 0).
    pub pairs: Vec<LabeledPair>,
    /// 3 for originals, 2 for rewritten followers, 1 for verbatim copies.
    pub labels: Vec<OriginalityLabel>,
}

impl SyntheticCorpus {
    /// Latest publication time; a snapshot here with a window longer than
    /// `span_hours` plus the follower spread sees everything.
    pub fn latest(&self) -> Option<DateTime<Utc>> {
        self.articles.iter().map(|a| a.published_at).max()
    }

    pub fn snapshot(&self, window_days: u32) -> Result<CorpusSnapshot> {
        let now = self.latest().unwrap_or_else(|| SynthParams::default().start);
        CorpusSnapshot::from_articles(self.articles.iter().cloned(), now, window_days)
    }

    /// Articles as ingestion input, one JSON record per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for a in &self.articles {
            out.push_str(&serde_json::to_string(&a.to_record()).expect("serializable"));
            out.push('\n');
        }
        out
    }
}

const ONSETS: [&str; 20] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "st", "tr", "pl", "gr",
];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// `count` distinct pronounceable three-syllable words in random order.
fn vocabulary(rng: &mut ChaCha8Rng, count: usize) -> Vec<String> {
    let max = (ONSETS.len() * VOWELS.len()).pow(3);
    assert!(count <= max, "vocabulary of {count} words exceeds {max}");
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let word: String = (0..3)
            .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
            .collect();
        if seen.insert(word.clone()) {
            out.push(word);
        }
    }
    out
}

/// One word-level rewrite: substitute, drop, swap neighbors or insert.
fn perturb(rng: &mut ChaCha8Rng, words: &[String], spare: &[String]) -> Vec<String> {
    let mut w = words.to_vec();
    let i = rng.gen_range(0..w.len());
    match rng.gen_range(0..4) {
        0 => w[i] = spare.choose(rng).unwrap().clone(),
        1 if w.len() > 3 => {
            w.remove(i);
        }
        2 if i + 1 < w.len() => w.swap(i, i + 1),
        _ => w.insert(i, spare.choose(rng).unwrap().clone()),
    }
    w
}

/// Builds the corpus. The same parameters always give the same articles.
pub fn generate_synthetic_corpus(params: &SynthParams) -> Result<SyntheticCorpus> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let per_event_words = params.title_words + 4;
    let vocab = vocabulary(&mut rng, params.events * per_event_words);
    let publishers = params.followers + 51;
    let per_event = params.followers + 1;

    let mut articles: Vec<Article> = Vec::with_capacity(params.events * per_event);
    let mut truth = GroundTruth::default();
    let mut pairs = Vec::new();
    let mut labels = Vec::new();
    let gap_minutes = if params.events > 1 {
        params.span_hours * 60 / (params.events as i64 - 1).max(1)
    } else {
        0
    };

    for e in 0..params.events {
        let words = &vocab[e * per_event_words..(e + 1) * per_event_words];
        let (base, spare) = words.split_at(params.title_words);
        let t0 = params.start + Duration::minutes(gap_minutes * e as i64);
        let mut titles: Vec<Vec<String>> = Vec::with_capacity(per_event);
        let first = articles.len();
        for j in 0..per_event {
            let (title, rating) = if j == 0 {
                (base.to_vec(), 3.0)
            } else if rng.gen_bool(params.duplicate_rate) {
                (titles.choose(&mut rng).unwrap().clone(), 1.0)
            } else {
                let mut t = perturb(&mut rng, base, spare);
                if rng.gen_bool(0.5) {
                    t = perturb(&mut rng, &t, spare);
                }
                (t, 2.0)
            };
            let publisher = format!("pub{:03}", (e * 7 + j) % publishers);
            let id = format!("e{e:05}-{j:03}");
            let url = format!("https://{publisher}.example/news/{id}");
            let mut links = Vec::new();
            if j > 0 {
                links.push(articles[first].canonical_url.clone());
                if j > 1 && rng.gen_bool(params.chain_rate) {
                    let k = rng.gen_range(1..j);
                    links.push(articles[first + k].canonical_url.clone());
                }
            }
            let mut text = title.join(" ");
            if let Some(c) = text.get_mut(0..1) {
                c.make_ascii_uppercase();
            }
            articles.push(Article {
                id: id.clone(),
                url: url.clone(),
                canonical_url: url,
                title: text,
                publisher,
                published_at: t0 + Duration::minutes(10 * j as i64),
                links,
                raw_html: None,
            });
            labels.push(OriginalityLabel { id: id.clone(), rating });
            truth.rows.push(TruthRow {
                id,
                event: e,
                original: j == 0,
            });
            titles.push(title);
        }
        for j in 1..per_event {
            let same_title = titles[j] == titles[0];
            pairs.push(LabeledPair {
                id_a: articles[first].id.clone(),
                id_b: articles[first + j].id.clone(),
                label: if same_title { 3.0 } else { 2.0 },
            });
        }
    }

    let n = articles.len();
    if params.events > 1 {
        let positives = pairs.len();
        for _ in 0..positives {
            let (a, b) = loop {
                let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
                if truth.rows[a].event != truth.rows[b].event {
                    break (a, b);
                }
            };
            pairs.push(LabeledPair {
                id_a: articles[a].id.clone(),
                id_b: articles[b].id.clone(),
                label: 0.0,
            });
        }
    }

    let mut added = 0;
    let mut attempts = 0;
    while added < params.noise && attempts < 100 * params.noise.max(1) && n > 1 {
        attempts += 1;
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a == b || articles[a].publisher == articles[b].publisher {
            continue;
        }
        let target = articles[b].canonical_url.clone();
        if articles[a].links.contains(&target) {
            continue;
        }
        articles[a].links.push(target);
        added += 1;
    }

    Ok(SyntheticCorpus {
        articles,
        truth,
        pairs,
        labels,
    })
}
