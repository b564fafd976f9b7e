use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CitationGraph;
use crate::error::{Error, Result};

/// Below this size the per-iteration update runs on the calling thread.
const PARALLEL_MIN_VERTICES: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PageRankParams {
    pub damping: f64,
    /// Stop once the L1 distance between successive iterates is at most this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PageRankParams {
    fn default() -> Self {
        PageRankParams {
            damping: 0.85,
            tolerance: 1e-10,
            max_iterations: 100,
        }
    }
}

impl PageRankParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::param("damping", format!("{} not in (0, 1)", self.damping)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::param("tolerance", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be at least 1"));
        }
        Ok(())
    }
}

/// Stationary distribution of the damped walk. Scores sum to one and are
/// aligned with [`CitationGraph::ids`].
#[derive(Debug, Clone, PartialEq)]
pub struct PageRankScores {
    pub ids: Vec<String>,
    pub scores: Vec<f64>,
    pub iterations: usize,
    /// L1 change of the last iteration.
    pub residual: f64,
    pub converged: bool,
}

impl PageRankScores {
    /// Scores of the empty graph.
    pub fn empty() -> Self {
        PageRankScores {
            ids: Vec::new(),
            scores: Vec::new(),
            iterations: 0,
            residual: 0.0,
            converged: true,
        }
    }

    pub fn to_map(&self) -> HashMap<String, f64> {
        self.ids.iter().cloned().zip(self.scores.iter().copied()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.ids.iter().map(String::as_str).zip(self.scores.iter().copied())
    }
}

/// Power iteration on the citation graph.
///
/// Each citing article splits its mass evenly over its outbound citations; the
/// mass of articles that cite nothing is spread uniformly. The result is the
/// same bit for bit regardless of the rayon pool size: every vertex sums its
/// in-neighbors in CSR order and all global reductions run sequentially.
pub fn pagerank(graph: &CitationGraph, params: &PageRankParams) -> Result<PageRankScores> {
    params.validate()?;
    let n = graph.vertex_count();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let d = params.damping;
    let nf = n as f64;
    let inv_out: Vec<f64> = (0..n)
        .map(|v| match graph.out_degree(v) {
            0 => 0.0,
            k => 1.0 / k as f64,
        })
        .collect();
    let dangling: Vec<usize> = (0..n).filter(|&v| graph.out_degree(v) == 0).collect();

    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut share = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < params.max_iterations {
        iterations += 1;
        let dangling_mass: f64 = dangling.iter().map(|&v| rank[v]).sum();
        let base = (1.0 - d) / nf + d * dangling_mass / nf;
        for v in 0..n {
            share[v] = rank[v] * inv_out[v];
        }
        let update = |(v, slot): (usize, &mut f64)| {
            let incoming: f64 = graph.in_neighbors(v).iter().map(|&u| share[u]).sum();
            *slot = base + d * incoming;
        };
        if n >= PARALLEL_MIN_VERTICES {
            next.par_iter_mut().enumerate().for_each(update);
        } else {
            next.iter_mut().enumerate().for_each(update);
        }
        residual = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if residual <= params.tolerance {
            converged = true;
            break;
        }
    }

    Ok(PageRankScores {
        ids: graph.ids().to_vec(),
        scores: rank,
        iterations,
        residual,
        converged,
    })
}
