use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::calibration::{CalibrationResult, YoudenPoint};
use crate::error::{Error, Result};
use crate::evaluation::StageMetrics;
use crate::index::Backend;
use crate::model::{CaseId, TransformTag};

/// Bumped whenever a field is renamed, removed or changes meaning.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySetSize {
    pub name: String,
    pub queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub set: u8,
    pub database_cases: usize,
    pub database_slices: usize,
    pub non_duplicate_cases: usize,
    pub query_sets: Vec<QuerySetSize>,
}

/// ROC summary of one set-1 query set against the set-1 non-duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSetResult {
    pub name: String,
    pub tag: Option<TransformTag>,
    pub auc: f64,
    pub youden: YoudenPoint,
    /// Whether the set took part in threshold selection.
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSetResult {
    pub tag: Option<TransformTag>,
    pub metrics: StageMetrics,
}

/// Unweighted means over the evaluated query sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub query_sets: usize,
    pub mean_auc: Option<f64>,
    pub mean_stage1_sensitivity: f64,
    pub mean_stage1_specificity: f64,
    pub mean_stage2_sensitivity: f64,
    pub mean_spec_stage2_strict: f64,
    pub mean_spec_stage2_folded: f64,
}

impl Summary {
    pub fn of(sets: &[EvaluationSetResult]) -> Summary {
        let n = sets.len();
        let mean = |f: &dyn Fn(&StageMetrics) -> f64| {
            if n == 0 {
                0.0
            } else {
                sets.iter().map(|s| f(&s.metrics)).sum::<f64>() / n as f64
            }
        };
        let aucs: Option<Vec<f64>> = sets.iter().map(|s| s.metrics.stage1.auc).collect();
        Summary {
            query_sets: n,
            mean_auc: aucs.filter(|a| !a.is_empty()).map(|a| a.iter().sum::<f64>() / a.len() as f64),
            mean_stage1_sensitivity: mean(&|m| m.stage1.sensitivity),
            mean_stage1_specificity: mean(&|m| m.stage1.specificity),
            mean_stage2_sensitivity: mean(&|m| m.stage2.sensitivity),
            mean_spec_stage2_strict: mean(&|m| m.stage2.spec_stage2_strict),
            mean_spec_stage2_folded: mean(&|m| m.stage2.spec_stage2_folded),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    Calibrated,
    Override,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub backend: Backend,
    pub k: usize,
    pub calibration_sets: Vec<CalibrationSetResult>,
    /// Absent when the threshold was overridden.
    pub calibration: Option<CalibrationResult>,
    pub threshold: f64,
    pub threshold_source: ThresholdSource,
    pub evaluation: Vec<EvaluationSetResult>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicatePair {
    /// Lexicographically smaller case id of the pair.
    pub query_case: CaseId,
    pub matched_case: CaseId,
    pub c_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub backend: Backend,
    pub k: usize,
    pub threshold: f64,
    pub cases: usize,
    pub pairs: Vec<DuplicatePair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub dataset: Vec<SetSummary>,
    pub runs: Vec<RunResult>,
    pub scan: Option<ScanReport>,
    /// Only present with `include_timings`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Vec<PhaseTiming>>,
}

impl BenchmarkReport {
    /// Pretty JSON with a trailing newline; field order is fixed by the
    /// type definitions, so equal reports render to equal bytes.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: BenchmarkReport = serde_json::from_str(text)?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "report schema version {} (expected {REPORT_SCHEMA_VERSION})",
                r.schema_version
            )));
        }
        Ok(r)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn run(&self, backend: &str, k: usize) -> Option<&RunResult> {
        self.runs.iter().find(|r| r.backend.name() == backend && r.k == k)
    }
}
