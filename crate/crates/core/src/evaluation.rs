//! Two-stage classification metrics and the bucket split.
//!
//! Stage 1 thresholds `c(k)` only. Stage 2 additionally requires the
//! most-voted case to be the query's ground truth; a positive query above the
//! threshold with the wrong top-1 case becomes a false positive.
//!
//! Stage-2 specificity is reported two ways: `spec_stage2_strict` uses the
//! negative-labelled queries as denominator, `spec_stage2_folded` adds the
//! ID-mismatch false positives to that denominator.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{auc, confusion_at, predicts_duplicate, ratio, roc_curve, Confusion, ScoredItem, ScoredSet};
use crate::error::{Error, Result};
use crate::index::Index;
use crate::io::{Bucket, BucketRole, Manifest};
use crate::model::{CaseId, EmbeddingSet, QueryLabel};
use crate::retrieval::{score_query, QueryScore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage1Metrics {
    /// `None` when the scored queries hold a single class.
    pub auc: Option<f64>,
    pub sensitivity: f64,
    pub specificity: f64,
    pub counts: Confusion,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage2Counts {
    pub tp: usize,
    /// Positive queries above threshold whose top-1 case is wrong.
    pub fp_mismatch: usize,
    /// Negative queries above threshold.
    pub fp_negative: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage2Metrics {
    pub sensitivity: f64,
    pub spec_stage2_strict: f64,
    pub spec_stage2_folded: f64,
    pub counts: Stage2Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub name: String,
    pub threshold: f64,
    pub stage1: Stage1Metrics,
    pub stage2: Stage2Metrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    PredictedDuplicate,
    PredictedNonDuplicate,
}

pub fn stage1_classify(score: &QueryScore, t: f64) -> Prediction {
    if predicts_duplicate(score.c_k, t) {
        Prediction::PredictedDuplicate
    } else {
        Prediction::PredictedNonDuplicate
    }
}

pub fn scored_item(s: &QueryScore) -> ScoredItem {
    ScoredItem {
        score: s.c_k,
        is_positive: s.label.is_positive(),
        query_case: s.query_case.clone(),
        top1_case: s.top1_case.clone(),
        ground_truth: s.label.ground_truth().cloned(),
    }
}

pub fn to_scored_set(name: &str, scores: &[QueryScore]) -> ScoredSet {
    ScoredSet {
        name: name.to_string(),
        items: scores.iter().map(scored_item).collect(),
    }
}

/// Stage-1 and stage-2 metrics of a scored query list at threshold `t`.
pub fn stage2_confusion(name: &str, scores: &[QueryScore], t: f64) -> Result<StageMetrics> {
    let set = to_scored_set(name, scores);
    let stage1_counts = confusion_at(&set.items, t);
    let auc = match roc_curve(&set) {
        Ok(r) => Some(auc(&r)),
        Err(Error::DegenerateSet(_)) => None,
        Err(e) => return Err(e),
    };
    let mut c = Stage2Counts::default();
    for s in scores {
        let above = stage1_classify(s, t) == Prediction::PredictedDuplicate;
        if s.label.is_positive() {
            let gt = s
                .label
                .ground_truth()
                .ok_or_else(|| Error::MissingGroundTruth(s.query_case.to_string()))?;
            match (above, s.top1_case.as_ref() == Some(gt)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp_mismatch += 1,
                (false, _) => c.fn_ += 1,
            }
        } else if above {
            c.fp_negative += 1;
        } else {
            c.tn += 1;
        }
    }
    let positives = c.tp + c.fp_mismatch + c.fn_;
    let negatives = c.tn + c.fp_negative;
    let (sens1, spec1) = if negatives == 0 && positives == 0 {
        (0.0, 0.0)
    } else {
        (stage1_counts.sensitivity(), stage1_counts.specificity())
    };
    Ok(StageMetrics {
        name: name.to_string(),
        threshold: t,
        stage1: Stage1Metrics {
            auc,
            sensitivity: sens1,
            specificity: spec1,
            counts: stage1_counts,
        },
        stage2: Stage2Metrics {
            sensitivity: ratio(c.tp, positives),
            spec_stage2_strict: ratio(c.tn, negatives),
            spec_stage2_folded: ratio(c.tn, negatives + c.fp_mismatch),
            counts: c,
        },
    })
}

/// A query volume's embeddings together with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledQuery {
    pub embeddings: EmbeddingSet,
    pub label: QueryLabel,
}

/// Scores every query in parallel; output order follows input order.
pub fn score_queries(
    queries: &[LabelledQuery],
    index: &Index,
    k: usize,
    exclude_self: bool,
) -> Result<Vec<QueryScore>> {
    queries
        .par_iter()
        .map(|q| score_query(&q.embeddings, index, k, q.label.clone(), exclude_self))
        .collect()
}

/// Scores duplicate or near-duplicate `queries` together with the paired
/// non-duplicate set and reports stage-1/stage-2 metrics at `t`.
pub fn evaluate_query_set(
    name: &str,
    queries: &[LabelledQuery],
    non_duplicates: &[LabelledQuery],
    index: &Index,
    k: usize,
    t: f64,
) -> Result<StageMetrics> {
    let mut scores = score_queries(queries, index, k, false)?;
    scores.extend(score_queries(non_duplicates, index, k, false)?);
    stage2_confusion(name, &scores, t)
}

/// Per-task split: the first half of each task's cases go to A, the rest to C.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskBuckets {
    pub a: Vec<CaseId>,
    pub c: Vec<CaseId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketAssignment {
    pub tasks: BTreeMap<String, TaskBuckets>,
}

impl BucketAssignment {
    pub fn total_a(&self) -> usize {
        self.tasks.values().map(|t| t.a.len()).sum()
    }

    pub fn total_c(&self) -> usize {
        self.tasks.values().map(|t| t.c.len()).sum()
    }

    /// Rewrites `manifest` so that split cases land in the set's A and C
    /// buckets.
    pub fn apply(&self, manifest: &Manifest, set: u8) -> Manifest {
        let a_bucket = Bucket::for_set(set, BucketRole::Database);
        let c_bucket = Bucket::for_set(set, BucketRole::NonDuplicate);
        let mut out = manifest.clone();
        for e in &mut out.entries {
            if let Some(tb) = self.tasks.get(&e.task) {
                if tb.a.contains(&e.case_id) {
                    e.bucket = a_bucket;
                    e.label = Some(QueryLabel::duplicate(e.case_id.clone()));
                } else if tb.c.contains(&e.case_id) {
                    e.bucket = c_bucket;
                    e.label = Some(QueryLabel::non_duplicate());
                }
            }
        }
        out
    }
}

/// How cases are ordered within a task before splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseOrder {
    /// Order of appearance in the manifest.
    #[default]
    Manifest,
    /// Ascending case id.
    CaseId,
}

/// Splits every task's cases: the first `floor(count / 2)` go to A, the
/// remainder to C.
pub fn split_buckets(manifest: &Manifest, order: CaseOrder) -> Result<BucketAssignment> {
    if manifest.entries.is_empty() {
        return Err(Error::EmptyTask("<manifest>".into()));
    }
    let mut grouped: BTreeMap<String, Vec<CaseId>> = BTreeMap::new();
    for e in &manifest.entries {
        if e.task.is_empty() {
            return Err(Error::EmptyTask(format!("(unnamed task of case {})", e.case_id)));
        }
        let cases = grouped.entry(e.task.clone()).or_default();
        if !cases.contains(&e.case_id) {
            cases.push(e.case_id.clone());
        }
    }
    let tasks = grouped
        .into_iter()
        .map(|(task, mut cases)| {
            if order == CaseOrder::CaseId {
                cases.sort();
            }
            let c = cases.split_off(cases.len() / 2);
            (task, TaskBuckets { a: cases, c })
        })
        .collect();
    Ok(BucketAssignment { tasks })
}
