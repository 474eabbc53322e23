//! Duplicate and near-duplicate detection for 3D image volumes.
//!
//! Volumes are compared through per-slice embeddings: every query slice
//! votes for the database case owning its nearest neighbor, and the share of
//! votes captured by the top-`k` cases is the duplicate score. Thresholds are
//! calibrated with Youden's index across several query sets and evaluated in
//! two stages (score only, then score plus matching case id).

pub mod benchmark;
pub mod calibration;
pub mod embed;
pub mod error;
pub mod evaluation;
pub mod index;
pub mod io;
pub mod model;
pub mod retrieval;
pub mod transforms;

pub use calibration::{CalibrationResult, RocCurve, RocPoint, ScoredSet};
pub use error::{Error, Result};
pub use evaluation::{BucketAssignment, StageMetrics};
pub use index::{Backend, Index, SliceHit};
pub use io::{Bucket, Manifest, ManifestEntry};
pub use model::{CaseId, EmbeddingSet, LabelKind, QueryLabel, TransformKind, TransformTag, Volume};
pub use retrieval::{CaseHistogram, QueryScore};
pub use transforms::TransformSpec;
pub use benchmark::{run_experiment, BenchmarkReport, ExperimentConfig};
