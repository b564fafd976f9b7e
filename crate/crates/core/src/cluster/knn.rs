//! Exact k-nearest-neighbor graph over unit vectors.

use rayon::prelude::*;

use super::SimilarityGraph;
use crate::embed::{dot, EmbeddingVector};
use crate::error::{Error, Result};

/// Vectors per cache tile on each side of the all-pairs scan.
const TILE: usize = 128;

/// Use the inverted-index scan when at most 1 in this many entries is nonzero.
const SPARSE_DENSITY_RECIPROCAL: usize = 4;

/// Best `k` candidates ordered by descending similarity, then ascending index.
#[derive(Debug, Clone)]
struct TopK {
    k: usize,
    items: Vec<(f32, usize)>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn better(a: (f32, usize), b: (f32, usize)) -> bool {
        a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
    }

    #[inline]
    fn offer(&mut self, sim: f32, j: usize) {
        if self.items.len() == self.k {
            let worst = self.items[self.k - 1];
            if !Self::better((sim, j), worst) {
                return;
            }
            self.items.pop();
        }
        let pos = self.items.partition_point(|&it| Self::better(it, (sim, j)));
        self.items.insert(pos, (sim, j));
    }
}

/// Tiled all-pairs dot products over the flattened vectors.
fn dense_scan(vectors: &[EmbeddingVector], dim: usize, k: usize, floor: f32) -> Vec<TopK> {
    let n = vectors.len();
    let flat: Vec<f32> = vectors.iter().flat_map(|v| v.as_slice().iter().copied()).collect();
    let row = |i: usize| &flat[i * dim..(i + 1) * dim];
    if rayon::current_num_threads() <= 1 {
        let mut lists = vec![TopK::new(k); n];
        for bi in (0..n).step_by(TILE) {
            let iend = (bi + TILE).min(n);
            for bj in (bi..n).step_by(TILE) {
                let jend = (bj + TILE).min(n);
                for i in bi..iend {
                    let a = row(i);
                    for j in bj.max(i + 1)..jend {
                        let s = dot(a, row(j));
                        if s >= floor {
                            lists[i].offer(s, j);
                            lists[j].offer(s, i);
                        }
                    }
                }
            }
        }
        lists
    } else {
        let blocks: Vec<usize> = (0..n).step_by(TILE).collect();
        blocks
            .par_iter()
            .flat_map_iter(|&bi| {
                let iend = (bi + TILE).min(n);
                let mut local = vec![TopK::new(k); iend - bi];
                for bj in (0..n).step_by(TILE) {
                    let jend = (bj + TILE).min(n);
                    for i in bi..iend {
                        let a = row(i);
                        let list = &mut local[i - bi];
                        for j in bj..jend {
                            if j == i {
                                continue;
                            }
                            let s = dot(a, row(j));
                            if s >= floor {
                                list.offer(s, j);
                            }
                        }
                    }
                }
                local
            })
            .collect()
    }
}

/// Inverted index over nonzero coordinates; only pairs sharing a coordinate
/// are scored, everything else has similarity exactly 0 and is below the
/// (positive) floor.
///
/// A pair's score is accumulated over the shared coordinates in ascending
/// order from whichever side is the query, which gives the same bits either
/// way, so the one-sided sequential scan and the two-sided parallel scan
/// agree.
fn sparse_scan(vectors: &[EmbeddingVector], k: usize, floor: f32) -> Vec<TopK> {
    let n = vectors.len();
    let dim = vectors[0].dimension();
    let rows: Vec<Vec<(u32, f32)>> = vectors
        .iter()
        .map(|v| {
            v.as_slice()
                .iter()
                .enumerate()
                .filter(|(_, &x)| x != 0.0)
                .map(|(b, &x)| (b as u32, x))
                .collect()
        })
        .collect();
    let mut postings: Vec<Vec<(u32, f32)>> = vec![Vec::new(); dim];
    for (j, row) in rows.iter().enumerate() {
        for &(b, x) in row {
            postings[b as usize].push((j as u32, x));
        }
    }
    struct Scratch {
        acc: Vec<f32>,
        mark: Vec<bool>,
        touched: Vec<u32>,
    }
    let scratch = || Scratch {
        acc: vec![0.0; n],
        mark: vec![false; n],
        touched: Vec::new(),
    };
    // Scores `i` against the candidates `j` with `j > i` (one-sided) or all `j != i`.
    let score = |i: usize, one_sided: bool, s: &mut Scratch| {
        for &(b, x) in &rows[i] {
            let list = &postings[b as usize];
            let from = if one_sided {
                list.partition_point(|&(j, _)| j as usize <= i)
            } else {
                0
            };
            for &(j, y) in &list[from..] {
                let j = j as usize;
                if j == i {
                    continue;
                }
                if !s.mark[j] {
                    s.mark[j] = true;
                    s.touched.push(j as u32);
                }
                s.acc[j] += x * y;
            }
        }
    };
    if rayon::current_num_threads() <= 1 {
        let mut lists = vec![TopK::new(k); n];
        let mut s = scratch();
        for i in 0..n {
            score(i, true, &mut s);
            for t in 0..s.touched.len() {
                let j = s.touched[t] as usize;
                let v = s.acc[j];
                if v >= floor {
                    lists[i].offer(v, j);
                    lists[j].offer(v, i);
                }
            }
            for &j in &s.touched {
                s.acc[j as usize] = 0.0;
                s.mark[j as usize] = false;
            }
            s.touched.clear();
        }
        lists
    } else {
        (0..n)
            .into_par_iter()
            .map_init(scratch, |s, i| {
                score(i, false, s);
                let mut list = TopK::new(k);
                for &j in &s.touched {
                    let v = s.acc[j as usize];
                    if v >= floor {
                        list.offer(v, j as usize);
                    }
                }
                for &j in &s.touched {
                    s.acc[j as usize] = 0.0;
                    s.mark[j as usize] = false;
                }
                s.touched.clear();
                list
            })
            .collect()
    }
}

/// Connects every vertex to its `k` most similar other vertices with
/// similarity at least `min_similarity`, then symmetrizes.
///
/// With a single rayon worker the scan visits each pair once; otherwise rows
/// are scanned independently in parallel. Both paths select identical
/// neighbors because the pair score is computed by the same commutative dot
/// product and the candidate order is total.
pub fn build_knn_graph(vectors: &[EmbeddingVector], k: usize, min_similarity: f64) -> Result<SimilarityGraph> {
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    let n = vectors.len();
    let Some(first) = vectors.first() else {
        return Ok(SimilarityGraph::from_edges(0, Vec::new(), k));
    };
    let dim = first.dimension();
    if let Some(bad) = vectors.iter().find(|v| v.dimension() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.dimension(),
        });
    }
    // f32 compare; the cast keeps cos >= floor semantics for f32 scores.
    let floor = min_similarity as f32;
    let floor = if f64::from(floor) < min_similarity {
        floor.next_up()
    } else {
        floor
    };

    let nonzeros: usize = vectors
        .iter()
        .map(|v| v.as_slice().iter().filter(|&&x| x != 0.0).count())
        .sum();
    let lists = if floor > 0.0 && nonzeros * SPARSE_DENSITY_RECIPROCAL <= n * dim {
        sparse_scan(vectors, k, floor)
    } else {
        dense_scan(vectors, dim, k, floor)
    };

    let mut edges = Vec::with_capacity(n * k);
    for (i, list) in lists.iter().enumerate() {
        for &(s, j) in &list.items {
            edges.push((i.min(j), i.max(j), f64::from(s)));
        }
    }
    Ok(SimilarityGraph::from_edges(n, edges, k))
}
