//! Greedy local clustering inside one subgraph.
//!
//! The objective is the total internal weight of all clusters, where every
//! pair of vertices inside a cluster that is not joined by a similarity edge
//! contributes the (negative) missing-edge weight `omega`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimilarityGraph;
use crate::error::{Error, Result};

/// Moves must improve the objective by more than this.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalParams {
    pub omega: f64,
    pub passes: usize,
    pub seed: u64,
}

impl Default for LocalParams {
    fn default() -> Self {
        LocalParams {
            omega: -0.1,
            passes: 8,
            seed: 0,
        }
    }
}

impl LocalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega < 0.0) {
            return Err(Error::param("omega", format!("{} is not negative", self.omega)));
        }
        if self.passes == 0 {
            return Err(Error::param("passes", "must be at least 1"));
        }
        Ok(())
    }
}

/// Cluster label per subgraph vertex (dense, numbered by first vertex) and the
/// objective of that labelling.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalClusters {
    pub labels: Vec<usize>,
    pub objective: f64,
    /// Index of the pass that produced this labelling.
    pub pass: usize,
}

impl LocalClusters {
    pub fn cluster_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

/// Adjacency of a vertex subset, relabelled to `0..len`.
#[derive(Debug, Clone)]
pub struct Subgraph {
    adj: Vec<Vec<(usize, f64)>>,
}

impl Subgraph {
    /// Restricts `graph` to `vertices` (local vertex `i` is `vertices[i]`).
    pub fn induced(graph: &SimilarityGraph, vertices: &[usize]) -> Self {
        let mut local = std::collections::HashMap::with_capacity(vertices.len());
        for (i, &v) in vertices.iter().enumerate() {
            local.insert(v, i);
        }
        let adj = vertices
            .iter()
            .map(|&v| {
                graph
                    .neighbors(v)
                    .iter()
                    .filter_map(|&(u, w)| local.get(&u).map(|&lu| (lu, w)))
                    .collect()
            })
            .collect();
        Subgraph { adj }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let g = SimilarityGraph::from_edges(n, edges.to_vec(), 0);
        Self::induced(&g, &(0..n).collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[v]
    }
}

/// Recomputes the objective of `labels` from scratch.
pub fn clustering_objective(sub: &Subgraph, labels: &[usize], omega: f64) -> f64 {
    per_cluster_weights(sub, labels, omega).iter().sum()
}

/// Internal weight of each cluster, indexed by label.
pub fn per_cluster_weights(sub: &Subgraph, labels: &[usize], omega: f64) -> Vec<f64> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut size = vec![0usize; k];
    for &l in labels {
        size[l] += 1;
    }
    let mut weight = vec![0.0; k];
    let mut present = vec![0usize; k];
    for v in 0..sub.len() {
        for &(u, w) in sub.neighbors(v) {
            if v < u && labels[u] == labels[v] {
                weight[labels[v]] += w;
                present[labels[v]] += 1;
            }
        }
    }
    (0..k)
        .map(|c| {
            let pairs = size[c] * size[c].saturating_sub(1) / 2;
            weight[c] + omega * (pairs - present[c]) as f64
        })
        .collect()
}

fn pass_seed(seed: u64, pass: usize) -> u64 {
    // splitmix64 step so neighbouring seeds give unrelated streams
    let mut z = seed ^ (pass as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One randomized pass from all-singletons. Returns labels (un-compacted) and
/// the objective. When `trace` is given, the objective after every accepted
/// move is appended to it.
///
/// Single-vertex moves alone stall once a good cluster has formed as two
/// halves, since no one vertex gains by switching sides. When the sweeps stop
/// improving, adjacent clusters whose union is heavier than the two parts are
/// merged and the sweeps resume.
fn run_pass(sub: &Subgraph, omega: f64, seed: u64, mut trace: Option<&mut Vec<f64>>) -> (Vec<usize>, f64) {
    let n = sub.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut label: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut objective = 0.0;

    // Scratch: weight and edge count from the current vertex into each cluster.
    let mut to_weight = vec![0.0; n];
    let mut to_count = vec![0usize; n];
    let mut touched: Vec<usize> = Vec::new();

    loop {
        let mut moved = false;
        for &v in &order {
            let own = label[v];
            touched.clear();
            for &(u, w) in sub.neighbors(v) {
                let c = label[u];
                if to_count[c] == 0 {
                    touched.push(c);
                }
                to_weight[c] += w;
                to_count[c] += 1;
            }
            // Value of v's membership in `c` given the other members.
            let join_value = |others: usize, wt: f64, cnt: usize| wt + omega * (others - cnt) as f64;
            let stay = join_value(size[own] - 1, to_weight[own], to_count[own]);

            let mut best: Option<(usize, f64)> = None;
            for &c in &touched {
                if c == own {
                    continue;
                }
                let gain = join_value(size[c], to_weight[c], to_count[c]) - stay;
                if gain > MIN_GAIN && best.is_none_or(|(_, g)| gain > g) {
                    best = Some((c, gain));
                }
            }
            for &c in &touched {
                to_weight[c] = 0.0;
                to_count[c] = 0;
            }
            if let Some((target, gain)) = best {
                size[own] -= 1;
                size[target] += 1;
                label[v] = target;
                objective += gain;
                moved = true;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(objective);
                }
            }
        }
        if moved {
            continue;
        }

        // Weight and edge count between each pair of adjacent clusters.
        let mut between: std::collections::BTreeMap<(usize, usize), (f64, usize)> = Default::default();
        for v in 0..n {
            for &(u, w) in sub.neighbors(v) {
                let (a, b) = (label[v], label[u]);
                if v < u && a != b {
                    let e = between.entry((a.min(b), a.max(b))).or_insert((0.0, 0));
                    e.0 += w;
                    e.1 += 1;
                }
            }
        }
        let mut merges: Vec<(f64, usize, usize)> = between
            .into_iter()
            .map(|((a, b), (w, cnt))| (w + omega * (size[a] * size[b] - cnt) as f64, a, b))
            .filter(|m| m.0 > MIN_GAIN)
            .collect();
        if merges.is_empty() {
            break;
        }
        merges.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
        // Disjoint merges only; gains of the others are stale after a merge.
        let mut used = vec![false; n];
        let mut into = vec![usize::MAX; n];
        for (gain, a, b) in merges {
            if used[a] || used[b] {
                continue;
            }
            used[a] = true;
            used[b] = true;
            into[b] = a;
            size[a] += size[b];
            size[b] = 0;
            objective += gain;
            if let Some(t) = trace.as_deref_mut() {
                t.push(objective);
            }
        }
        for l in &mut label {
            if into[*l] != usize::MAX {
                *l = into[*l];
            }
        }
    }
    (label, objective)
}

fn compact(labels: &[usize]) -> Vec<usize> {
    let mut map = vec![usize::MAX; labels.len()];
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
            map[l]
        })
        .collect()
}

/// Runs `passes` independent randomized passes and keeps the best; among
/// equal objectives the earliest pass wins.
pub fn greedy_local_cluster(sub: &Subgraph, params: &LocalParams) -> Result<LocalClusters> {
    params.validate()?;
    let mut best: Option<LocalClusters> = None;
    for pass in 0..params.passes {
        let (labels, _) = run_pass(sub, params.omega, pass_seed(params.seed, pass), None);
        let labels = compact(&labels);
        // Reported objective is recomputed, not the running total.
        let objective = clustering_objective(sub, &labels, params.omega);
        if best.as_ref().is_none_or(|b| objective > b.objective + MIN_GAIN) {
            best = Some(LocalClusters {
                labels,
                objective,
                pass,
            });
        }
    }
    Ok(best.unwrap_or(LocalClusters {
        labels: Vec::new(),
        objective: 0.0,
        pass: 0,
    }))
}
