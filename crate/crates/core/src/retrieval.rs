//! Volume-level scoring by slice-wise rank-1 retrieval.
//!
//! Every query slice votes for the case of its nearest database slice; the
//! normalized count `c(k)` is the share of votes going to the `k` most-voted
//! cases, over all query slices.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::Index;
use crate::model::{CaseId, EmbeddingSet, QueryLabel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseHistogram {
    pub counts: BTreeMap<CaseId, usize>,
    pub total_slices: usize,
}

impl CaseHistogram {
    pub fn hits(&self) -> usize {
        self.counts.values().sum()
    }
}

/// Cases by descending count, ties ascending by case id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedCases(pub Vec<(CaseId, usize)>);

impl RankedCases {
    pub fn first(&self) -> Option<&CaseId> {
        self.0.first().map(|(c, _)| c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub query_case: CaseId,
    pub c_k: f64,
    pub k: usize,
    /// `None` only when no query slice produced a hit.
    pub top1_case: Option<CaseId>,
    pub label: QueryLabel,
}

/// Builds the per-case vote histogram for one query volume.
///
/// With `exclude_self`, hits on the query's own case id are skipped; a slice
/// with no other retrievable case still counts towards `total_slices`.
pub fn case_histogram(query: &EmbeddingSet, index: &Index, exclude_self: bool) -> Result<CaseHistogram> {
    if query.dim != index.dim() {
        return Err(Error::DimensionMismatch {
            expected: index.dim(),
            actual: query.dim,
        });
    }
    let mut counts: BTreeMap<CaseId, usize> = BTreeMap::new();
    for q in &query.vectors {
        let hits = if exclude_self {
            index.search_excluding(q, 1, &query.case_id)?
        } else {
            index.search(q, 1)?
        };
        if let Some(hit) = hits.into_iter().next() {
            *counts.entry(hit.case_id).or_default() += 1;
        }
    }
    Ok(CaseHistogram {
        counts,
        total_slices: query.slice_count(),
    })
}

pub fn rank_cases(h: &CaseHistogram) -> RankedCases {
    let mut ranked: Vec<(CaseId, usize)> = h.counts.iter().map(|(c, &n)| (c.clone(), n)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    RankedCases(ranked)
}

/// `c(k)`: sum of the `k` largest counts divided by the number of query slices.
pub fn normalized_count(h: &CaseHistogram, k: usize) -> Result<(f64, RankedCases)> {
    if k == 0 {
        return Err(Error::InvalidParams("k must be ≥ 1".into()));
    }
    if h.total_slices == 0 {
        return Err(Error::EmptySet("histogram".into()));
    }
    let ranked = rank_cases(h);
    let top: usize = ranked.0.iter().take(k).map(|(_, n)| n).sum();
    Ok((top as f64 / h.total_slices as f64, ranked))
}

/// Scores a histogram at several `k` at once.
pub fn scores_from_histogram(
    query_case: &CaseId,
    h: &CaseHistogram,
    ks: &[usize],
    label: &QueryLabel,
) -> Result<Vec<QueryScore>> {
    ks.iter()
        .map(|&k| {
            let (c_k, ranked) = normalized_count(h, k)?;
            Ok(QueryScore {
                query_case: query_case.clone(),
                c_k,
                k,
                top1_case: ranked.first().cloned(),
                label: label.clone(),
            })
        })
        .collect()
}

pub fn score_query(
    query: &EmbeddingSet,
    index: &Index,
    k: usize,
    label: QueryLabel,
    exclude_self: bool,
) -> Result<QueryScore> {
    let h = case_histogram(query, index, exclude_self)?;
    let (c_k, ranked) = normalized_count(&h, k)?;
    Ok(QueryScore {
        query_case: query.case_id.clone(),
        c_k,
        k,
        top1_case: ranked.first().cloned(),
        label,
    })
}
