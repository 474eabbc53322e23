use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embed::ToyEmbedderConfig;
use crate::error::{Error, Result};
use crate::index::Backend;
use crate::model::TransformKind;
use crate::transforms::TransformSpec;

/// Where the experiment's cases come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Procedurally generated volumes, split into both sets in memory.
    Synthetic {
        #[serde(default = "default_cases")]
        cases: usize,
        #[serde(default = "default_tasks")]
        tasks: usize,
        /// (n_z, n_y, n_x)
        #[serde(default = "default_shape")]
        shape: [usize; 3],
    },
    /// A bucketed manifest; files are `.mvol` volumes for the toy embedder
    /// and `.medb` embeddings for external ones. Relative paths resolve
    /// against `data_root`.
    Directory {
        data_root: PathBuf,
        #[serde(default = "default_manifest")]
        manifest: PathBuf,
    },
}

fn default_cases() -> usize {
    40
}

fn default_tasks() -> usize {
    2
}

fn default_shape() -> [usize; 3] {
    [32, 40, 40]
}

fn default_manifest() -> PathBuf {
    PathBuf::from("manifest.csv")
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            cases: default_cases(),
            tasks: default_tasks(),
            shape: default_shape(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    Toy(ToyEmbedderConfig),
    /// Embeddings precomputed by an external extractor.
    External,
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::Toy(ToyEmbedderConfig::default())
    }
}

/// Which set-1 query sets enter threshold selection.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationRule {
    /// The mildest strength of every transform family plus the duplicate set.
    #[default]
    Mildest,
    All,
    /// Explicit query-set names (`duplicate`, `crop:0.05`, ...).
    Sets(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub backend: Backend,
    pub k: usize,
    pub threshold: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            backend: Backend::Exact,
            k: 1,
            threshold: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub embedder: EmbedderSpec,
    pub backends: Vec<Backend>,
    pub k_values: Vec<usize>,
    /// `None` means the default 6 × 4 grid seeded with `seed`.
    pub transforms: Option<Vec<TransformSpec>>,
    pub calibration: CalibrationRule,
    /// Skips calibration and evaluates at this threshold.
    pub threshold_override: Option<f64>,
    pub seed: u64,
    /// Wall-clock phase timings in the report; they make it irreproducible.
    pub include_timings: bool,
    pub scan: Option<ScanConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSource::default(),
            embedder: EmbedderSpec::default(),
            backends: vec![Backend::Exact],
            k_values: vec![1, 3],
            transforms: None,
            calibration: CalibrationRule::default(),
            threshold_override: None,
            seed: 0,
            include_timings: false,
            scan: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config; a relative `data_root` resolves against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let DataSource::Directory { data_root, .. } = &mut cfg.data {
            if data_root.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                *data_root = base.join(&*data_root);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn transforms(&self) -> Vec<TransformSpec> {
        self.transforms
            .clone()
            .unwrap_or_else(|| TransformSpec::default_grid(self.seed))
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(Error::Config("k_values must be non-empty and ≥ 1".into()));
        }
        if self.backends.is_empty() {
            return Err(Error::Config("at least one backend is required".into()));
        }
        for b in &self.backends {
            match b {
                Backend::Exact => {}
                Backend::Lsh(p) => p.validate()?,
                Backend::Hnsw(p) => p.validate()?,
            }
        }
        for t in self.transforms() {
            t.validate()?;
        }
        if let Some(t) = self.threshold_override {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("threshold_override {t} outside [0, 1]")));
            }
        }
        if let EmbedderSpec::Toy(c) = &self.embedder {
            c.validate()?;
        }
        if let DataSource::Synthetic { cases, tasks, shape } = &self.data {
            if *tasks == 0 || *cases < 4 * tasks {
                return Err(Error::Config(format!(
                    "synthetic data needs at least 4 cases per task, got {cases} for {tasks} tasks"
                )));
            }
            if shape.contains(&0) {
                return Err(Error::Config("synthetic shape must be positive".into()));
            }
            if matches!(self.embedder, EmbedderSpec::External) {
                return Err(Error::Config("synthetic data requires the toy embedder".into()));
            }
        }
        if let Some(s) = &self.scan {
            if s.k == 0 || !(0.0..=1.0).contains(&s.threshold) {
                return Err(Error::Config("scan needs k ≥ 1 and threshold in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Ordering of strengths within a family; larger is harsher.
pub fn severity(spec: &TransformSpec) -> f64 {
    match spec.kind {
        TransformKind::Jpeg => 100.0 - spec.strength,
        TransformKind::Rotate => spec.strength.abs(),
        _ => spec.strength,
    }
}
