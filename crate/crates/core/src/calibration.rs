//! ROC construction, AUC, Youden thresholds and cross-set threshold
//! selection.
//!
//! The decision rule everywhere is `score >= threshold ⇒ duplicate`.
//! Operating points are taken at every distinct observed score plus one
//! threshold above the maximum, which is lossless for count-based scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CaseId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub score: f64,
    pub is_positive: bool,
    pub query_case: CaseId,
    pub top1_case: Option<CaseId>,
    pub ground_truth: Option<CaseId>,
}

impl ScoredItem {
    /// Item carrying only a score and a class, for ad-hoc sets.
    pub fn bare(score: f64, is_positive: bool) -> Self {
        ScoredItem {
            score,
            is_positive,
            query_case: CaseId::new("_").expect("non-empty"),
            top1_case: None,
            ground_truth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    pub name: String,
    pub items: Vec<ScoredItem>,
}

impl ScoredSet {
    pub fn from_scores(name: impl Into<String>, positives: &[f64], negatives: &[f64]) -> Self {
        let items = positives
            .iter()
            .map(|&s| ScoredItem::bare(s, true))
            .chain(negatives.iter().map(|&s| ScoredItem::bare(s, false)))
            .collect();
        ScoredSet {
            name: name.into(),
            items,
        }
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let p = self.items.iter().filter(|i| i.is_positive).count();
        (p, self.items.len() - p)
    }

    fn check(&self) -> Result<(usize, usize)> {
        let (p, n) = self.class_counts();
        if p == 0 || n == 0 {
            return Err(Error::DegenerateSet(self.name.clone()));
        }
        if let Some(bad) = self.items.iter().find(|i| !i.score.is_finite()) {
            return Err(Error::NonFiniteValue {
                location: format!("score of {} in set {}", bad.query_case, self.name),
            });
        }
        Ok((p, n))
    }
}

/// The single decision rule shared by calibration and evaluation.
pub fn predicts_duplicate(score: f64, threshold: f64) -> bool {
    score >= threshold
}

/// Stage-1 confusion counts at a threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn sensitivity(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }
}

pub(crate) fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion_at<'a>(items: impl IntoIterator<Item = &'a ScoredItem>, threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for it in items {
        match (it.is_positive, predicts_duplicate(it.score, threshold)) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub tp: usize,
    pub tn: usize,
}

/// Operating points in strictly decreasing threshold order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub positives: usize,
    pub negatives: usize,
}

pub fn roc_curve(s: &ScoredSet) -> Result<RocCurve> {
    let (p, n) = s.check()?;
    let mut sorted: Vec<(f64, bool)> = s.items.iter().map(|i| (i.score, i.is_positive)).collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let max = sorted[0].0;
    let mut points = vec![RocPoint {
        threshold: max + 1.0,
        sensitivity: 0.0,
        specificity: 1.0,
        tp: 0,
        tn: n,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            sensitivity: ratio(tp, p),
            specificity: ratio(n - fp, n),
            tp,
            tn: n - fp,
        });
    }
    Ok(RocCurve {
        points,
        positives: p,
        negatives: n,
    })
}

/// Trapezoidal area under sensitivity vs. (1 − specificity).
pub fn auc(r: &RocCurve) -> f64 {
    let (p, n) = (r.positives as u128, r.negatives as u128);
    if p == 0 || n == 0 {
        return 0.0;
    }
    // Twice the area in units of 1/(P·N), accumulated exactly.
    let mut twice_area: u128 = 0;
    for w in r.points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dfp = (r.negatives - b.tn) as u128 - (r.negatives - a.tn) as u128;
        twice_area += dfp * (a.tp as u128 + b.tp as u128);
    }
    twice_area as f64 / (2 * p * n) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YoudenPoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

impl YoudenPoint {
    pub fn index(&self) -> f64 {
        self.sensitivity + self.specificity - 1.0
    }
}

/// Operating point maximizing sensitivity + specificity; ties go to the
/// larger threshold.
pub fn youden_threshold(r: &RocCurve) -> YoudenPoint {
    // sens + spec = (tp·N + tn·P) / (P·N); compare numerators exactly.
    let (p, n) = (r.positives as u128, r.negatives as u128);
    let mut best = &r.points[0];
    let mut best_key = best.tp as u128 * n + best.tn as u128 * p;
    for pt in &r.points[1..] {
        let key = pt.tp as u128 * n + pt.tn as u128 * p;
        if key > best_key {
            best = pt;
            best_key = key;
        }
    }
    YoudenPoint {
        threshold: best.threshold,
        sensitivity: best.sensitivity,
        specificity: best.specificity,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub set_names: Vec<String>,
    pub candidate_thresholds: Vec<f64>,
    /// `se_matrix[u][v]`: sensitivity of set v at threshold `candidate_thresholds[u]`.
    pub se_matrix: Vec<Vec<f64>>,
    pub sp_matrix: Vec<Vec<f64>>,
    /// Mean over v of SE + SP for each candidate.
    pub mean_scores: Vec<f64>,
    pub t_opt: f64,
    pub chosen_set_index: usize,
}

/// Picks one threshold for all query sets: each set's Youden threshold is a
/// candidate, and the candidate with the highest mean sensitivity +
/// specificity across every set wins (ties go to the earlier set).
pub fn select_optimal_threshold(sets: &[ScoredSet]) -> Result<CalibrationResult> {
    if sets.is_empty() {
        return Err(Error::DegenerateSet("no calibration sets".into()));
    }
    let candidates: Vec<f64> = sets
        .iter()
        .map(|s| roc_curve(s).map(|r| youden_threshold(&r).threshold))
        .collect::<Result<_>>()?;
    let n = sets.len();
    let mut se = vec![vec![0.0; n]; n];
    let mut sp = vec![vec![0.0; n]; n];
    let mut means = Vec::with_capacity(n);
    for (u, &t) in candidates.iter().enumerate() {
        let mut total = 0.0;
        for (v, s) in sets.iter().enumerate() {
            let c = confusion_at(&s.items, t);
            se[u][v] = c.sensitivity();
            sp[u][v] = c.specificity();
            total += se[u][v] + sp[u][v];
        }
        means.push(total / n as f64);
    }
    let mut chosen = 0;
    for u in 1..n {
        if means[u] > means[chosen] {
            chosen = u;
        }
    }
    Ok(CalibrationResult {
        set_names: sets.iter().map(|s| s.name.clone()).collect(),
        t_opt: candidates[chosen],
        candidate_thresholds: candidates,
        se_matrix: se,
        sp_matrix: sp,
        mean_scores: means,
        chosen_set_index: chosen,
    })
}
