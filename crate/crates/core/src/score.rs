//! Originality scores: PageRank normalized within each news-event cluster,
//! the promotion curve derived from it, and the ranking adjustment.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::citation::PageRankScores;
use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};

pub const DEFAULT_THETA: f64 = 0.5;
pub const DEFAULT_P: f64 = 1.0;

/// One line of `scores.jsonl`. `originality` is `null` for articles without
/// any citation edge and for members of clusters nobody in the graph belongs
/// to; their `p_original` is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginalityRecord {
    pub id: String,
    pub cluster: usize,
    pub pagerank: f64,
    pub originality: Option<f64>,
    pub p_original: f64,
}

/// `s_v = (n_v^p / sum_{u in C_v} n_u^p)^(1/p)` for every article that has a
/// PageRank. Articles absent from `scores` are left out of the map and do not
/// enter their cluster's sum.
pub fn normalize_pagerank(
    scores: &PageRankScores,
    clusters: &ClusterAssignment,
    p: f64,
) -> Result<HashMap<String, f64>> {
    check_p(p)?;
    let cluster_of = clusters.to_map();
    let mut members: BTreeMap<usize, Vec<(&str, f64)>> = BTreeMap::new();
    for (id, n) in scores.iter() {
        let c = *cluster_of.get(id).ok_or_else(|| Error::UnknownId(id.to_string()))?;
        members.entry(c).or_default().push((id, n));
    }
    let mut out = HashMap::with_capacity(scores.ids.len());
    for group in members.values() {
        let values: Vec<f64> = group.iter().map(|&(_, n)| n).collect();
        for ((id, _), s) in group.iter().zip(normalize_group(&values, p)) {
            out.insert(id.to_string(), s);
        }
    }
    Ok(out)
}

/// Normalizes one cluster's PageRank values. Values are divided by the
/// largest first so that large `p` cannot overflow or underflow.
pub fn normalize_group(values: &[f64], p: f64) -> Vec<f64> {
    let max = values.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return vec![0.0; values.len()];
    }
    let powered: Vec<f64> = values.iter().map(|&n| (n / max).powf(p)).collect();
    let total: f64 = powered.iter().sum();
    powered.iter().map(|&x| (x / total).powf(1.0 / p)).collect()
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::param("p", format!("{p} is not a positive number")))
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(Error::param("theta", format!("{theta} not in (0, 1)")))
    }
}

/// Linear promotion above the threshold: 0 at or below `theta`, 1 at `s = 1`.
pub fn p_original(s: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::param("s", format!("{s} not in [0, 1]")));
    }
    Ok((s.max(theta) - theta) / (1.0 - theta))
}

/// Builds the score records in the order of `clusters`.
pub fn score_records(
    scores: &PageRankScores,
    clusters: &ClusterAssignment,
    p: f64,
    theta: f64,
) -> Result<Vec<OriginalityRecord>> {
    check_theta(theta)?;
    let originality = normalize_pagerank(scores, clusters, p)?;
    let pagerank: HashMap<&str, f64> = scores.iter().collect();
    clusters
        .iter()
        .map(|(id, cluster)| {
            let s = originality.get(id).copied();
            Ok(OriginalityRecord {
                id: id.to_string(),
                cluster,
                pagerank: pagerank.get(id).copied().unwrap_or(0.0),
                originality: s,
                p_original: match s {
                    Some(s) => p_original(s.min(1.0), theta)?,
                    None => 0.0,
                },
            })
        })
        .collect()
}

pub fn records_to_jsonl(records: &[OriginalityRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn records_from_jsonl(text: &str, path: &Path) -> Result<Vec<OriginalityRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Weight of each ranking signal. `click_original` multiplies
/// `P(click) * p_original`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Alpha {
    #[serde(default)]
    pub comment: f64,
    #[serde(default)]
    pub share: f64,
    #[serde(default)]
    pub like: f64,
    #[serde(default)]
    pub click_original: f64,
}

/// Contents of the weights file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    #[serde(default)]
    pub alpha: Alpha,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_p")]
    pub p: f64,
}

fn default_theta() -> f64 {
    DEFAULT_THETA
}

fn default_p() -> f64 {
    DEFAULT_P
}

impl Default for WeightsConfig {
    fn default() -> Self {
        WeightsConfig {
            alpha: Alpha::default(),
            theta: DEFAULT_THETA,
            p: DEFAULT_P,
        }
    }
}

impl WeightsConfig {
    pub fn validate(&self) -> Result<()> {
        check_theta(self.theta)?;
        check_p(self.p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: WeightsConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relevance inputs for one article from the predicted probabilities.
    pub fn inputs(&self, probabilities: &BTreeMap<String, f64>) -> RelevanceInputs {
        let a = &self.alpha;
        RelevanceInputs {
            probabilities: probabilities.clone(),
            weights: [("comment", a.comment), ("share", a.share), ("like", a.like)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            click_original: a.click_original,
        }
    }
}

/// Predicted engagement probabilities and their weights. The name `click`
/// is reserved for the originality term.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RelevanceInputs {
    pub probabilities: BTreeMap<String, f64>,
    pub weights: BTreeMap<String, f64>,
    pub click_original: f64,
}

pub const CLICK: &str = "click";

/// `sum_i alpha_i P_i + alpha_click_original * P(click) * p_original`.
pub fn relevance(inputs: &RelevanceInputs, p_original: f64) -> Result<f64> {
    for (name, &p) in &inputs.probabilities {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param("probability", format!("P({name}) = {p} not in [0, 1]")));
        }
    }
    if !(0.0..=1.0).contains(&p_original) {
        return Err(Error::param("p_original", format!("{p_original} not in [0, 1]")));
    }
    let mut total = 0.0;
    for (name, &alpha) in &inputs.weights {
        if alpha == 0.0 {
            continue;
        }
        let p = inputs
            .probabilities
            .get(name)
            .ok_or_else(|| Error::MissingProbability(name.clone()))?;
        total += alpha * p;
    }
    if inputs.click_original != 0.0 {
        let click = inputs
            .probabilities
            .get(CLICK)
            .ok_or_else(|| Error::MissingProbability(CLICK.to_string()))?;
        total += inputs.click_original * click * p_original;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scores(values: &[(&str, f64)]) -> PageRankScores {
        PageRankScores {
            ids: values.iter().map(|v| v.0.to_string()).collect(),
            scores: values.iter().map(|v| v.1).collect(),
            iterations: 1,
            residual: 0.0,
            converged: true,
        }
    }

    fn assignment(values: &[(&str, usize)]) -> ClusterAssignment {
        ClusterAssignment {
            ids: values.iter().map(|v| v.0.to_string()).collect(),
            clusters: values.iter().map(|v| v.1).collect(),
            objective: 0.0,
        }
    }

    #[test]
    #[allow(clippy::approx_constant)] // five printed digits
    fn normalization_examples() {
        let s = scores(&[("a", 2.0), ("b", 1.0), ("c", 1.0), ("solo", 0.3)]);
        let c = assignment(&[("a", 0), ("b", 0), ("c", 0), ("solo", 1)]);
        let n = normalize_pagerank(&s, &c, 1.0).unwrap();
        assert!((n["a"] - 0.5).abs() < 1e-15);
        assert!((n["b"] - 0.25).abs() < 1e-15);
        assert!((n["c"] - 0.25).abs() < 1e-15);
        assert_eq!(n["solo"], 1.0);

        let n = normalize_group(&[1.0, 1.0], 2.0);
        assert!((n[0] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((n[0] - 0.70711).abs() < 1e-5);
    }

    #[test]
    fn bad_p_is_rejected() {
        let s = scores(&[("a", 1.0)]);
        let c = assignment(&[("a", 0)]);
        for p in [0.0, -1.0, f64::NAN] {
            assert!(normalize_pagerank(&s, &c, p).is_err());
        }
    }

    #[test]
    fn unclustered_article_is_an_error() {
        let s = scores(&[("a", 1.0), ("ghost", 1.0)]);
        let c = assignment(&[("a", 0)]);
        assert!(matches!(normalize_pagerank(&s, &c, 1.0), Err(Error::UnknownId(id)) if id == "ghost"));
    }

    #[test]
    fn promotion_examples() {
        assert_eq!(p_original(0.5, 0.5).unwrap(), 0.0);
        assert_eq!(p_original(0.2, 0.5).unwrap(), 0.0);
        assert_eq!(p_original(1.0, 0.3).unwrap(), 1.0);
        assert_eq!(p_original(0.75, 0.5).unwrap(), 0.5);
        for theta in [0.0, 1.0, -0.2, 1.5] {
            assert!(p_original(0.5, theta).is_err());
        }
        assert!(p_original(1.2, 0.5).is_err());
    }

    #[test]
    fn relevance_examples() {
        let mut inputs = RelevanceInputs {
            probabilities: [("comment", 0.1), ("share", 0.2), ("like", 0.3), ("click", 0.4)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            weights: [("comment", 1.0), ("share", 1.0), ("like", 1.0)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            click_original: 1.0,
        };
        assert_eq!(relevance(&inputs, 1.0).unwrap(), 0.1 + 0.2 + 0.3 + 0.4);
        assert!((relevance(&inputs, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let base = 0.1 + 0.2 + 0.3;
        assert_eq!(relevance(&inputs, 0.0).unwrap(), base);

        let only_click = RelevanceInputs {
            probabilities: [("click".to_string(), 0.2)].into(),
            weights: BTreeMap::new(),
            click_original: 1.0,
        };
        assert_eq!(relevance(&only_click, 0.5).unwrap(), 0.1);

        inputs.probabilities.remove("click");
        assert!(matches!(relevance(&inputs, 0.5), Err(Error::MissingProbability(n)) if n == "click"));
        inputs.click_original = 0.0;
        assert!(relevance(&inputs, 0.5).is_ok());
    }

    #[test]
    fn records_cover_uncited_articles() {
        let s = scores(&[("a", 0.6), ("b", 0.2)]);
        let c = assignment(&[("a", 0), ("b", 0), ("lonely", 0), ("other", 1)]);
        let r = score_records(&s, &c, 1.0, 0.5).unwrap();
        assert_eq!(r.len(), 4);
        assert!((r[0].originality.unwrap() - 0.75).abs() < 1e-15);
        assert!((r[0].p_original - 0.5).abs() < 1e-15);
        assert_eq!(r[2].originality, None);
        assert_eq!(r[2].pagerank, 0.0);
        assert_eq!(r[3].p_original, 0.0);
        let text = records_to_jsonl(&r);
        assert!(text.starts_with(r#"{"id":"a","cluster":0,"pagerank":0.6,"originality":0.7"#));
        assert!(text.contains(r#""originality":null"#));
        assert_eq!(records_from_jsonl(&text, Path::new("x")).unwrap(), r);
    }

    #[test]
    fn weights_config_parses() {
        let cfg: WeightsConfig = serde_json::from_str(
            r#"{"alpha":{"comment":0.5,"share":1,"like":0.25,"click_original":2},"theta":0.6,"p":2}"#,
        )
        .unwrap();
        assert_eq!(cfg.alpha.click_original, 2.0);
        assert_eq!(cfg.theta, 0.6);
        cfg.validate().unwrap();
        let back: WeightsConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<WeightsConfig>(r#"{"gamma":1}"#).is_err());
        assert!(WeightsConfig {
            theta: 1.0,
            ..WeightsConfig::default()
        }
        .validate()
        .is_err());
    }

    fn cluster_values() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(1e-9f64..1.0, 1..40)
    }

    proptest! {
        #[test]
        fn powers_sum_to_one(values in cluster_values(), p in prop_oneof![Just(0.5), Just(1.0), Just(2.0), 0.1f64..8.0]) {
            let s = normalize_group(&values, p);
            let total: f64 = s.iter().map(|x| x.powf(p)).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(s.iter().all(|&x| x > 0.0 && x <= 1.0 + 1e-15));
        }

        #[test]
        fn scale_invariant(values in cluster_values(), p in 0.1f64..5.0, c in 1e-6f64..1e6) {
            let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
            for (a, b) in normalize_group(&values, p).iter().zip(normalize_group(&scaled, p)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn order_preserved(values in cluster_values(), p in 0.1f64..5.0) {
            let s = normalize_group(&values, p);
            for i in 0..values.len() {
                for j in 0..values.len() {
                    if values[i] > values[j] {
                        prop_assert!(s[i] > s[j]);
                    }
                }
            }
        }

        #[test]
        fn top_share_grows_with_p(values in cluster_values(), p in 0.1f64..4.0, dp in 0.0f64..4.0) {
            let top = |p: f64| normalize_group(&values, p).into_iter().fold(0.0, f64::max);
            prop_assert!(top(p + dp) >= top(p) - 1e-12);
        }

        #[test]
        fn promotion_is_monotone(s1 in 0.0f64..=1.0, s2 in 0.0f64..=1.0, t1 in 0.01f64..0.99, t2 in 0.01f64..0.99) {
            let (lo, hi) = (s1.min(s2), s1.max(s2));
            prop_assert!(p_original(lo, t1).unwrap() <= p_original(hi, t1).unwrap());
            let (tl, th) = (t1.min(t2), t1.max(t2));
            prop_assert!(p_original(s1, th).unwrap() <= p_original(s1, tl).unwrap() + 1e-15);
            let v = p_original(s1, t1).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
