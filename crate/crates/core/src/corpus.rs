//! Article ingestion: record parsing, link extraction, URL canonicalization,
//! title normalization and the moving time window.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, SubsecRound, Utc};
use rayon::prelude::*;
use scraper::{Html, Selector};
use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};
use url::Url;

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW_DAYS: u32 = 7;

/// Query parameters removed by the default canonicalizer.
pub const DEFAULT_TRACKING_PARAMS: [&str; 4] = ["utm_source", "utm_medium", "utm_campaign", "fbclid"];

/// One line of the articles JSONL file, as written by publishers or a crawler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArticleRecord {
    pub id: String,
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical_url: Option<String>,
    pub title: String,
    pub publisher: String,
    pub published_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub links: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub html: Option<String>,
}

/// An ingested article. URLs are canonical and `links` is duplicate-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub url: String,
    pub canonical_url: String,
    pub title: String,
    pub publisher: String,
    pub published_at: DateTime<Utc>,
    pub links: Vec<String>,
    #[serde(default, rename = "html", skip_serializing_if = "Option::is_none")]
    pub raw_html: Option<String>,
}

impl Article {
    pub fn to_record(&self) -> ArticleRecord {
        ArticleRecord {
            id: self.id.clone(),
            url: self.url.clone(),
            canonical_url: Some(self.canonical_url.clone()),
            title: self.title.clone(),
            publisher: self.publisher.clone(),
            published_at: self.published_at,
            links: Some(self.links.clone()),
            html: self.raw_html.clone(),
        }
    }
}

/// Articles inside the half-open window `(snapshot_time - window_days, snapshot_time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSnapshot {
    pub articles: Vec<Article>,
    pub snapshot_time: DateTime<Utc>,
    pub window_days: u32,
}

impl CorpusSnapshot {
    pub fn empty(snapshot_time: DateTime<Utc>, window_days: u32) -> Self {
        CorpusSnapshot {
            articles: Vec::new(),
            snapshot_time,
            window_days,
        }
    }

    /// Keeps the articles that fall inside the window, preserving order.
    pub fn from_articles(
        articles: impl IntoIterator<Item = Article>,
        snapshot_time: DateTime<Utc>,
        window_days: u32,
    ) -> Result<Self> {
        if window_days == 0 {
            return Err(Error::param("window_days", "must be positive"));
        }
        let articles = articles
            .into_iter()
            .filter(|a| in_window(a.published_at, snapshot_time, window_days))
            .collect();
        Ok(CorpusSnapshot {
            articles,
            snapshot_time,
            window_days,
        })
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }
}

pub fn in_window(published_at: DateTime<Utc>, snapshot_time: DateTime<Utc>, window_days: u32) -> bool {
    let lower = snapshot_time - Duration::days(i64::from(window_days));
    lower < published_at && published_at <= snapshot_time
}

/// A record-level ingestion failure. Serialized as one rejects-report line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
}

/// Output of [`ingest_file`]: every valid article in file order, plus rejects.
#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub articles: Vec<Article>,
    pub rejects: Vec<Reject>,
}

impl Ingested {
    pub fn snapshot(&self, snapshot_time: DateTime<Utc>, window_days: u32) -> Result<CorpusSnapshot> {
        CorpusSnapshot::from_articles(self.articles.iter().cloned(), snapshot_time, window_days)
    }
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub snapshot: CorpusSnapshot,
    pub rejects: Vec<Reject>,
    /// Valid records that fell outside the window.
    pub outside_window: usize,
}

/// Reads a JSONL article file and returns the articles inside the window.
///
/// Malformed lines are collected as rejects; only an unreadable file is fatal.
pub fn load_corpus(
    path: &Path,
    snapshot_time: DateTime<Utc>,
    window_days: u32,
    canonicalizer: &Canonicalizer,
) -> Result<LoadedCorpus> {
    let ingested = ingest_file(path, canonicalizer)?;
    let total = ingested.articles.len();
    let snapshot = ingested.snapshot(snapshot_time, window_days)?;
    Ok(LoadedCorpus {
        outside_window: total - snapshot.len(),
        snapshot,
        rejects: ingested.rejects,
    })
}

pub fn ingest_file(path: &Path, canonicalizer: &Canonicalizer) -> Result<Ingested> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(ingest_str(&text, canonicalizer))
}

/// Parses and canonicalizes JSONL text. Line numbers in rejects are 1-based.
pub fn ingest_str(text: &str, canonicalizer: &Canonicalizer) -> Ingested {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();

    // Parsing is independent per line; collect() keeps input order.
    let parsed: Vec<(usize, std::result::Result<Article, String>)> = lines
        .par_iter()
        .map(|&(line, raw)| {
            let article = serde_json::from_str::<ArticleRecord>(raw)
                .map_err(|e| format!("malformed record: {e}"))
                .and_then(|rec| ingest_record(rec, canonicalizer));
            (line, article)
        })
        .collect();

    let mut out = Ingested::default();
    let mut seen_ids = HashSet::new();
    let mut seen_urls = HashSet::new();
    for (line, result) in parsed {
        match result {
            Ok(article) => {
                if !seen_ids.insert(article.id.clone()) {
                    out.rejects.push(Reject {
                        line,
                        reason: format!("duplicate id `{}`", article.id),
                    });
                } else if !seen_urls.insert(article.canonical_url.clone()) {
                    out.rejects.push(Reject {
                        line,
                        reason: format!("duplicate canonical_url `{}`", article.canonical_url),
                    });
                } else {
                    out.articles.push(article);
                }
            }
            Err(reason) => out.rejects.push(Reject { line, reason }),
        }
    }
    out
}

/// Validates one record and canonicalizes all of its URLs.
pub fn ingest_record(rec: ArticleRecord, canonicalizer: &Canonicalizer) -> std::result::Result<Article, String> {
    if rec.id.trim().is_empty() {
        return Err("empty id".into());
    }
    if rec.publisher.trim().is_empty() {
        return Err("empty publisher".into());
    }
    let base = Url::parse(rec.url.trim()).map_err(|e| format!("invalid url `{}`: {e}", rec.url))?;
    let canonical_source = rec.canonical_url.as_deref().unwrap_or(&rec.url);
    let canonical_url = canonicalizer
        .canonicalize(canonical_source)
        .map_err(|e| e.to_string())?;

    let raw_links = match (&rec.links, &rec.html) {
        (Some(links), _) => links.clone(),
        (None, Some(html)) => extract_links(html, &base),
        (None, None) => Vec::new(),
    };
    let mut seen = HashSet::new();
    let links = raw_links
        .iter()
        .filter_map(|l| canonicalizer.canonicalize(l).ok())
        .filter(|l| seen.insert(l.clone()))
        .collect();

    Ok(Article {
        id: rec.id,
        url: rec.url,
        canonical_url,
        title: rec.title,
        publisher: rec.publisher,
        published_at: rec.published_at.trunc_subsecs(0),
        links,
        raw_html: rec.html,
    })
}

/// Returns the `href` targets of all `<a>` tags, resolved against `base_url`.
///
/// Only http(s) targets are kept. Duplicates are dropped, first occurrence wins.
pub fn extract_links(html: &str, base_url: &Url) -> Vec<String> {
    let document = Html::parse_fragment(html);
    let selector = Selector::parse("a[href]").expect("static selector");
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for anchor in document.select(&selector) {
        let Some(href) = anchor.value().attr("href") else {
            continue;
        };
        let Ok(resolved) = base_url.join(href.trim()) else {
            continue;
        };
        if !matches!(resolved.scheme(), "http" | "https") {
            continue;
        }
        let s = resolved.to_string();
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

/// Deterministic URL canonicalization with an optional explicit mapping.
#[derive(Debug, Clone)]
pub struct Canonicalizer {
    map: HashMap<String, String>,
    strip_params: Vec<String>,
}

impl Default for Canonicalizer {
    fn default() -> Self {
        Canonicalizer::new(
            HashMap::new(),
            DEFAULT_TRACKING_PARAMS.iter().map(|s| s.to_string()).collect(),
        )
    }
}

impl Canonicalizer {
    /// `strip_params` entries ending in `*` match by prefix (`utm_*`).
    pub fn new(map: HashMap<String, String>, strip_params: Vec<String>) -> Self {
        Canonicalizer { map, strip_params }
    }

    pub fn with_map(map: HashMap<String, String>) -> Self {
        Canonicalizer {
            map,
            ..Canonicalizer::default()
        }
    }

    /// Loads a `url<TAB>canonical_url` file.
    pub fn load_map(path: &Path) -> Result<HashMap<String, String>> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let Some((from, to)) = line.split_once('\t') else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: "expected `url<TAB>canonical_url`".into(),
                });
            };
            map.insert(from.trim().to_string(), to.trim().to_string());
        }
        Ok(map)
    }

    fn strips(&self, key: &str) -> bool {
        self.strip_params.iter().any(|p| match p.strip_suffix('*') {
            Some(prefix) => key.starts_with(prefix),
            None => key == p,
        })
    }

    pub fn canonicalize(&self, url: &str) -> Result<String> {
        let url = url.trim();
        if let Some(mapped) = self.map.get(url) {
            return Ok(mapped.clone());
        }
        let normalized = self.normalize(url)?;
        if let Some(mapped) = self.map.get(&normalized) {
            return Ok(mapped.clone());
        }
        Ok(normalized)
    }

    /// Lowercases scheme and host, drops the fragment and tracking parameters,
    /// and removes the trailing slash of an empty path.
    pub fn normalize(&self, url: &str) -> Result<String> {
        let mut parsed = Url::parse(url).map_err(|e| Error::InvalidUrl {
            url: url.to_string(),
            reason: e.to_string(),
        })?;
        parsed.set_fragment(None);
        if let Some(query) = parsed.query() {
            let kept: Vec<&str> = query
                .split('&')
                .filter(|seg| !seg.is_empty())
                .filter(|seg| {
                    let key = seg.split_once('=').map_or(*seg, |(k, _)| k);
                    !self.strips(key)
                })
                .collect();
            let kept = kept.join("&");
            parsed.set_query(if kept.is_empty() { None } else { Some(&kept) });
        }
        let mut out = parsed.to_string();
        if parsed.path() == "/" && parsed.has_host() {
            // "https://host/?q" -> "https://host?q"
            let slash = out
                .find("://")
                .map(|i| i + 3)
                .and_then(|s| out[s..].find('/').map(|j| s + j));
            if let Some(pos) = slash {
                out.remove(pos);
            }
        }
        Ok(out)
    }
}

fn is_punctuation_or_symbol(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
            | MathSymbol
            | CurrencySymbol
            | ModifierSymbol
            | OtherSymbol
    )
}

/// Lowercases, replaces every punctuation or symbol character (Unicode
/// categories `P*` and `S*`) by a space, and collapses whitespace.
pub fn normalize_title(title: &str) -> String {
    let stripped: String = title
        .to_lowercase()
        .chars()
        .map(|c| if is_punctuation_or_symbol(c) { ' ' } else { c })
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}
