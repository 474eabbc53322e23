//! Hierarchical navigable small world graph.
//!
//! Construction follows the layered scheme of Malkov & Yashunin: geometric
//! level assignment, greedy descent through the upper layers, an
//! `ef_construction` beam on each layer the node joins, and the neighbor
//! selection heuristic for both new links and pruning. Layer 0 keeps up to
//! `2·m` links, upper layers `m`.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Index, Scored};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HnswParams {
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
    /// Level multiplier; `None` means `1 / ln(m)`.
    pub level_lambda: Option<f64>,
}

impl Default for HnswParams {
    fn default() -> Self {
        HnswParams {
            m: 16,
            ef_construction: 200,
            ef_search: 64,
            seed: 0,
            level_lambda: None,
        }
    }
}

impl HnswParams {
    pub fn level_lambda(&self) -> f64 {
        self.level_lambda.unwrap_or(1.0 / (self.m as f64).ln())
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidParams("hnsw m must be ≥ 2".into()));
        }
        if self.ef_search == 0 {
            return Err(Error::InvalidParams("ef_search must be ≥ 1".into()));
        }
        if self.ef_construction < self.m {
            return Err(Error::InvalidParams(format!(
                "ef_construction {} must be ≥ m {}",
                self.ef_construction, self.m
            )));
        }
        let lambda = self.level_lambda();
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParams(format!("level_lambda {lambda} must be positive")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HnswGraph {
    params: HnswParams,
    /// node → layer → neighbor ids.
    links: Vec<Vec<Vec<u32>>>,
    entry: u32,
    top_level: usize,
}

impl HnswGraph {
    pub(super) fn build(index: &Index, params: HnswParams) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let lambda = params.level_lambda();
        let mut graph = HnswGraph {
            params,
            links: Vec::with_capacity(index.len()),
            entry: 0,
            top_level: 0,
        };
        for id in 0..index.len() as u32 {
            // 1 - U lies in (0, 1], so the log is finite.
            let u: f64 = 1.0 - rng.random::<f64>();
            let level = (-u.ln() * lambda).floor() as usize;
            graph.insert(index, id, level);
        }
        Ok(graph)
    }

    pub fn adjacency(&self) -> &[Vec<Vec<u32>>] {
        &self.links
    }

    fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.params.m
        } else {
            self.params.m
        }
    }

    fn insert(&mut self, index: &Index, id: u32, level: usize) {
        self.links.push(vec![Vec::new(); level + 1]);
        if id == 0 {
            self.entry = 0;
            self.top_level = level;
            return;
        }
        let query = index.vector(id);
        let mut eps = vec![Scored {
            dist: index.dist_to(query, self.entry),
            id: self.entry,
        }];
        for layer in (level + 1..=self.top_level).rev() {
            eps = self.search_layer(index, query, &eps, 1, layer, None);
        }
        for layer in (0..=level.min(self.top_level)).rev() {
            let found = self.search_layer(
                index,
                query,
                &eps,
                self.params.ef_construction,
                layer,
                None,
            );
            let chosen = select_neighbors(index, &found, self.params.m);
            self.links[id as usize][layer] = chosen.iter().map(|s| s.id).collect();
            let cap = self.max_links(layer);
            for s in &chosen {
                let nb = s.id as usize;
                self.links[nb][layer].push(id);
                if self.links[nb][layer].len() > cap {
                    let base = index.vector(s.id);
                    let mut cands: Vec<Scored> = self.links[nb][layer]
                        .iter()
                        .map(|&c| Scored {
                            dist: index.dist_to(base, c),
                            id: c,
                        })
                        .collect();
                    cands.sort();
                    self.links[nb][layer] =
                        select_neighbors(index, &cands, cap).into_iter().map(|s| s.id).collect();
                }
            }
            eps = found;
        }
        if level > self.top_level {
            self.top_level = level;
            self.entry = id;
        }
    }

    /// Beam search on one layer; returns up to `ef` nearest accepted nodes,
    /// ascending. Rejected nodes are traversed but never returned.
    fn search_layer(
        &self,
        index: &Index,
        query: &[f32],
        entry: &[Scored],
        ef: usize,
        layer: usize,
        keep: Option<&dyn Fn(u32) -> bool>,
    ) -> Vec<Scored> {
        let accepts = |id: u32| keep.is_none_or(|f| f(id));
        let mut visited: HashSet<u32> = entry.iter().map(|s| s.id).collect();
        let mut frontier: BinaryHeap<Reverse<Scored>> = entry.iter().copied().map(Reverse).collect();
        // Max-heap holding the best `ef` accepted nodes.
        let mut best: BinaryHeap<Scored> = BinaryHeap::with_capacity(ef + 1);
        for &e in entry {
            if accepts(e.id) {
                best.push(e);
                if best.len() > ef {
                    best.pop();
                }
            }
        }
        let mut bound = best.peek().map_or(f64::INFINITY, |w| w.dist);
        while let Some(Reverse(current)) = frontier.pop() {
            if current.dist > bound && (best.len() >= ef || keep.is_none()) {
                break;
            }
            for &nb in self.links[current.id as usize].get(layer).map_or(&[][..], |v| v) {
                if !visited.insert(nb) {
                    continue;
                }
                let cand = Scored {
                    dist: index.dist_to(query, nb),
                    id: nb,
                };
                if best.len() < ef || cand.dist < bound {
                    frontier.push(Reverse(cand));
                    if accepts(nb) {
                        best.push(cand);
                        if best.len() > ef {
                            best.pop();
                        }
                    }
                    bound = best.peek().map_or(f64::INFINITY, |w| w.dist);
                }
            }
        }
        best.into_sorted_vec()
    }

    /// Candidate ids for a k-NN query, or `None` when the filtered graph walk
    /// cannot supply `k` accepted nodes even with the full beam.
    pub(super) fn search(
        &self,
        index: &Index,
        query: &[f32],
        k: usize,
        keep: &dyn Fn(u32) -> bool,
    ) -> Option<Vec<u32>> {
        let mut ep = Scored {
            dist: index.dist_to(query, self.entry),
            id: self.entry,
        };
        for layer in (1..=self.top_level).rev() {
            ep = self.search_layer(index, query, &[ep], 1, layer, None)[0];
        }
        let mut ef = self.params.ef_search.max(k);
        loop {
            let found = self.search_layer(index, query, &[ep], ef, 0, Some(keep));
            if found.len() >= k {
                return Some(found.into_iter().map(|s| s.id).collect());
            }
            if ef >= index.len() {
                return None;
            }
            ef = (ef * 2).min(index.len());
        }
    }
}

/// Neighbor selection heuristic: take candidates nearest-first, keeping one
/// only if it is closer to the base than to every neighbor kept so far.
/// `candidates` must be sorted ascending.
fn select_neighbors(index: &Index, candidates: &[Scored], m: usize) -> Vec<Scored> {
    let mut kept: Vec<Scored> = Vec::with_capacity(m);
    for &c in candidates {
        if kept.len() >= m {
            break;
        }
        let v = index.vector(c.id);
        let diverse = kept
            .iter()
            .all(|k| super::squared_distance(v, index.vector(k.id)) > c.dist);
        if diverse {
            kept.push(c);
        }
    }
    kept
}
