//! Slice-embedding similarity index with three interchangeable backends:
//! exact scan, random-hyperplane LSH and HNSW.
//!
//! Every backend returns exact Euclidean distances for the items it reports,
//! ordered ascending with ties broken by `(case_id, slice_index)`. The ANN
//! backends only approximate *which* items are returned.

mod hnsw;
mod lsh;

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CaseId, EmbeddingSet};

pub use hnsw::{HnswGraph, HnswParams};
pub use lsh::{LshParams, LshTables};

/// One database slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedItem {
    pub case_id: CaseId,
    pub slice_index: usize,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceHit {
    pub case_id: CaseId,
    pub slice_index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    Exact,
    Lsh(LshParams),
    Hnsw(HnswParams),
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Exact => "exact",
            Backend::Lsh(_) => "lsh",
            Backend::Hnsw(_) => "hnsw",
        }
    }

    /// Backend with default parameters and the given seed.
    pub fn from_name(name: &str, seed: u64) -> Result<Self> {
        match name {
            "exact" => Ok(Backend::Exact),
            "lsh" => Ok(Backend::Lsh(LshParams {
                seed,
                ..LshParams::default()
            })),
            "hnsw" => Ok(Backend::Hnsw(HnswParams {
                seed,
                ..HnswParams::default()
            })),
            other => Err(Error::Config(format!(
                "unknown backend {other:?} (expected exact, lsh or hnsw)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ItemMeta {
    case_id: CaseId,
    slice_index: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Structure {
    Exact,
    Lsh(LshTables),
    Hnsw(HnswGraph),
}

/// Immutable nearest-neighbor index over slice embeddings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Index {
    dim: usize,
    backend: Backend,
    items: Vec<ItemMeta>,
    /// Row-major, `items.len() × dim`.
    vectors: Vec<f32>,
    structure: Structure,
}

pub(crate) fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

/// Search candidate: squared distance plus internal item id.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Scored {
    pub dist: f64,
    pub id: u32,
}

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scored {}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.id.cmp(&other.id))
    }
}

/// Flattens embedding sets into indexed items, one per slice.
pub fn items_from_sets<'a>(sets: impl IntoIterator<Item = &'a EmbeddingSet>) -> Vec<IndexedItem> {
    sets.into_iter()
        .flat_map(|es| {
            es.vectors.iter().enumerate().map(|(j, v)| IndexedItem {
                case_id: es.case_id.clone(),
                slice_index: j,
                vector: v.clone(),
            })
        })
        .collect()
}

const SNAPSHOT_FORMAT: &str = "voldup-index";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    index: Index,
}

impl Index {
    pub fn build(items: Vec<IndexedItem>, backend: Backend) -> Result<Index> {
        let first = items.first().ok_or(Error::EmptyDatabase)?;
        let dim = first.vector.len();
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        if u32::try_from(items.len()).is_err() {
            return Err(Error::InvalidParams("too many items for one index".into()));
        }
        let mut vectors = Vec::with_capacity(items.len() * dim);
        let mut meta = Vec::with_capacity(items.len());
        for item in items {
            if item.vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: item.vector.len(),
                });
            }
            if item.vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteValue {
                    location: format!("case {} slice {}", item.case_id, item.slice_index),
                });
            }
            vectors.extend_from_slice(&item.vector);
            meta.push(ItemMeta {
                case_id: item.case_id,
                slice_index: item.slice_index,
            });
        }
        let mut index = Index {
            dim,
            backend,
            items: meta,
            vectors,
            structure: Structure::Exact,
        };
        index.structure = match backend {
            Backend::Exact => Structure::Exact,
            Backend::Lsh(params) => Structure::Lsh(LshTables::build(&index, params)?),
            Backend::Hnsw(params) => Structure::Hnsw(HnswGraph::build(&index, params)?),
        };
        Ok(index)
    }

    /// Indexes every slice of every set; case ids must be unique.
    pub fn from_sets(sets: &[EmbeddingSet], backend: Backend) -> Result<Index> {
        let mut seen = std::collections::HashSet::new();
        for es in sets {
            if !seen.insert(&es.case_id) {
                return Err(Error::DuplicateCaseId(es.case_id.to_string()));
            }
        }
        Index::build(items_from_sets(sets), backend)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub(crate) fn vector(&self, id: u32) -> &[f32] {
        let i = id as usize * self.dim;
        &self.vectors[i..i + self.dim]
    }

    pub(crate) fn dist_to(&self, query: &[f32], id: u32) -> f64 {
        squared_distance(query, self.vector(id))
    }

    fn case_of(&self, id: u32) -> &CaseId {
        &self.items[id as usize].case_id
    }

    /// HNSW adjacency lists (node → layer → neighbors), if this is an HNSW index.
    pub fn hnsw_adjacency(&self) -> Option<&[Vec<Vec<u32>>]> {
        match &self.structure {
            Structure::Hnsw(g) => Some(g.adjacency()),
            _ => None,
        }
    }

    /// LSH signatures of `vector`, one per table, if this is an LSH index.
    pub fn lsh_signatures(&self, vector: &[f32]) -> Option<Vec<u64>> {
        match &self.structure {
            Structure::Lsh(t) => Some(t.signatures(vector)),
            _ => None,
        }
    }

    fn check_query(&self, query: &[f32], k: usize) -> Result<()> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        if k == 0 {
            return Err(Error::InvalidParams("k must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Up to `k` nearest items by Euclidean distance, ascending.
    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<SliceHit>> {
        self.search_filtered(query, k, None)
    }

    /// As [`Index::search`], skipping every slice of `excluded`.
    pub fn search_excluding(
        &self,
        query: &[f32],
        k: usize,
        excluded: &CaseId,
    ) -> Result<Vec<SliceHit>> {
        self.search_filtered(query, k, Some(excluded))
    }

    fn search_filtered(
        &self,
        query: &[f32],
        k: usize,
        excluded: Option<&CaseId>,
    ) -> Result<Vec<SliceHit>> {
        self.check_query(query, k)?;
        let keep = |id: u32| excluded != Some(self.case_of(id));
        let ids = match &self.structure {
            Structure::Exact => None,
            Structure::Lsh(tables) => tables.candidates(query, &keep),
            Structure::Hnsw(graph) => graph.search(self, query, k, &keep),
        };
        let candidates: Vec<u32> = match ids {
            Some(ids) => ids,
            None => (0..self.items.len() as u32).filter(|&id| keep(id)).collect(),
        };
        Ok(self.rank(query, candidates, k))
    }

    /// Exact re-rank of candidate ids with the content-based tie-break.
    fn rank(&self, query: &[f32], candidates: Vec<u32>, k: usize) -> Vec<SliceHit> {
        let mut scored: Vec<(f64, u32)> = candidates
            .into_iter()
            .map(|id| (self.dist_to(query, id), id))
            .collect();
        let cmp = |a: &(f64, u32), b: &(f64, u32)| {
            let (ma, mb) = (&self.items[a.1 as usize], &self.items[b.1 as usize]);
            a.0.total_cmp(&b.0)
                .then_with(|| ma.case_id.cmp(&mb.case_id))
                .then(ma.slice_index.cmp(&mb.slice_index))
                .then(a.1.cmp(&b.1))
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        scored
            .into_iter()
            .map(|(d2, id)| {
                let m = &self.items[id as usize];
                SliceHit {
                    case_id: m.case_id.clone(),
                    slice_index: m.slice_index,
                    distance: d2.sqrt(),
                }
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let snap = Snapshot {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            index: self.clone(),
        };
        let bytes = serde_json::to_vec(&snap)?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Index> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let snap: Snapshot = serde_json::from_slice(&bytes)?;
        if snap.format != SNAPSHOT_FORMAT {
            return Err(Error::Data(format!(
                "{} is not an index snapshot",
                path.display()
            )));
        }
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::UnsupportedVersion(snap.version as u16));
        }
        Ok(snap.index)
    }
}
