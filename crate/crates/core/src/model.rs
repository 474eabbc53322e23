//! Shared domain types: case identity, voxel volumes, per-slice embedding
//! sets and query labels.
//!
//! Volumes use the axis order (z, y, x) with z the axial slice axis. Every
//! type here is immutable once validated.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque, non-empty case identifier (e.g. `BRATS_432`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CaseId(String);

impl CaseId {
    pub fn new(value: impl Into<String>) -> Result<Self> {
        let value = value.into();
        if value.is_empty() {
            return Err(Error::InvalidCaseId("case id must be non-empty".into()));
        }
        Ok(CaseId(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for CaseId {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        CaseId::new(value)
    }
}

impl From<CaseId> for String {
    fn from(id: CaseId) -> String {
        id.0
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CaseId::new(s)
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Extents of a volume as (n_z, n_y, n_x).
pub type Shape = (usize, usize, usize);

/// A 3D scalar voxel grid, row-major in (z, y, x).
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    case_id: CaseId,
    shape: Shape,
    voxels: Vec<f32>,
}

impl Volume {
    pub fn new(case_id: CaseId, shape: Shape, voxels: Vec<f32>) -> Result<Self> {
        let (nz, ny, nx) = shape;
        if nz == 0 || ny == 0 || nx == 0 {
            return Err(Error::InvalidVolume(format!(
                "extents must be positive, got {shape:?}"
            )));
        }
        if voxels.len() != nz * ny * nx {
            return Err(Error::InvalidVolume(format!(
                "shape {shape:?} needs {} voxels, got {}",
                nz * ny * nx,
                voxels.len()
            )));
        }
        if let Some(i) = voxels.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                location: format!("voxel {i} of case {case_id}"),
            });
        }
        Ok(Volume {
            case_id,
            shape,
            voxels,
        })
    }

    /// Builds a volume slice by slice; `f(z, y, x)` yields the intensity.
    pub fn from_fn(
        case_id: CaseId,
        shape: Shape,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let (nz, ny, nx) = shape;
        let mut voxels = Vec::with_capacity(nz * ny * nx);
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    voxels.push(f(z, y, x));
                }
            }
        }
        Volume::new(case_id, shape, voxels)
    }

    pub fn case_id(&self) -> &CaseId {
        &self.case_id
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn slice_count(&self) -> usize {
        self.shape.0
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> f32 {
        let (_, ny, nx) = self.shape;
        self.voxels[(z * ny + y) * nx + x]
    }

    /// Axial slice `z` as a row-major `ny × nx` array.
    pub fn slice(&self, z: usize) -> Slice<'_> {
        let (_, ny, nx) = self.shape;
        let len = ny * nx;
        Slice {
            rows: ny,
            cols: nx,
            data: &self.voxels[z * len..(z + 1) * len],
        }
    }

    pub fn slices(&self) -> impl Iterator<Item = Slice<'_>> {
        (0..self.shape.0).map(move |z| self.slice(z))
    }

    pub fn with_case_id(mut self, case_id: CaseId) -> Self {
        self.case_id = case_id;
        self
    }

    pub fn into_parts(self) -> (CaseId, Shape, Vec<f32>) {
        (self.case_id, self.shape, self.voxels)
    }
}

/// Borrowed view of one axial slice.
#[derive(Debug, Clone, Copy)]
pub struct Slice<'a> {
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f32],
}

impl Slice<'_> {
    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.cols + x]
    }

    pub fn to_image(&self) -> Image2d {
        Image2d {
            rows: self.rows,
            cols: self.cols,
            data: self.data.to_vec(),
        }
    }
}

/// Owned 2D array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2d {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Image2d {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        assert_eq!(rows * cols, data.len(), "image data length mismatch");
        Image2d { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<f32> = rows.iter().flatten().copied().collect();
        Image2d::new(rows.len(), cols, data)
    }

    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.cols + x]
    }

    pub fn view(&self) -> Slice<'_> {
        Slice {
            rows: self.rows,
            cols: self.cols,
            data: &self.data,
        }
    }
}

/// Ordered per-slice embedding vectors of one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub case_id: CaseId,
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

impl EmbeddingSet {
    /// Creates a set and checks it with [`validate_embedding_set`].
    pub fn new(case_id: CaseId, dim: usize, vectors: Vec<Vec<f32>>) -> Result<Self> {
        let es = EmbeddingSet {
            case_id,
            dim,
            vectors,
        };
        validate_embedding_set(&es)?;
        Ok(es)
    }

    pub fn slice_count(&self) -> usize {
        self.vectors.len()
    }

    pub fn with_case_id(mut self, case_id: CaseId) -> Self {
        self.case_id = case_id;
        self
    }
}

pub fn validate_embedding_set(es: &EmbeddingSet) -> Result<()> {
    if es.vectors.is_empty() {
        return Err(Error::EmptySet(es.case_id.to_string()));
    }
    if es.dim == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: 0,
        });
    }
    for (j, v) in es.vectors.iter().enumerate() {
        if v.len() != es.dim {
            return Err(Error::DimensionMismatch {
                expected: es.dim,
                actual: v.len(),
            });
        }
        if let Some(c) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteValue {
                location: format!("case {} slice {j} component {c}", es.case_id),
            });
        }
    }
    Ok(())
}

/// The six near-duplicate transform families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Crop,
    Rotate,
    Translate,
    Blur,
    Jpeg,
    Noise,
}

impl TransformKind {
    pub const ALL: [TransformKind; 6] = [
        TransformKind::Crop,
        TransformKind::Rotate,
        TransformKind::Translate,
        TransformKind::Blur,
        TransformKind::Jpeg,
        TransformKind::Noise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Crop => "crop",
            TransformKind::Rotate => "rotate",
            TransformKind::Translate => "translate",
            TransformKind::Blur => "blur",
            TransformKind::Jpeg => "jpeg",
            TransformKind::Noise => "noise",
        }
    }

    /// Strength ladder, mildest first.
    pub fn default_strengths(self) -> [f64; 4] {
        match self {
            TransformKind::Crop => [0.05, 0.10, 0.15, 0.20],
            TransformKind::Rotate => [5.0, 10.0, 15.0, 20.0],
            TransformKind::Translate => [0.05, 0.10, 0.15, 0.20],
            TransformKind::Blur => [1.0, 2.0, 4.0, 8.0],
            TransformKind::Jpeg => [100.0, 75.0, 50.0, 25.0],
            TransformKind::Noise => [0.1, 0.2, 0.4, 0.8],
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "crop" => Ok(TransformKind::Crop),
            "rotate" | "rotation" => Ok(TransformKind::Rotate),
            "translate" | "translation" | "shift" => Ok(TransformKind::Translate),
            "blur" | "gaussian_blur" => Ok(TransformKind::Blur),
            "jpeg" | "jpeg_compress" => Ok(TransformKind::Jpeg),
            "noise" | "gaussian_noise" => Ok(TransformKind::Noise),
            other => Err(Error::InvalidTransform(format!(
                "unknown transform kind {other:?}"
            ))),
        }
    }
}

/// Transform name plus strength, rendered as `crop:0.05`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformTag {
    pub kind: TransformKind,
    pub strength: f64,
}

impl fmt::Display for TransformTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.strength)
    }
}

impl FromStr for TransformTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, strength) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidTransform(format!("expected kind:strength, got {s:?}")))?;
        let strength: f64 = strength
            .parse()
            .map_err(|_| Error::InvalidTransform(format!("bad strength in {s:?}")))?;
        if !strength.is_finite() {
            return Err(Error::InvalidTransform(format!("bad strength in {s:?}")));
        }
        Ok(TransformTag {
            kind: kind.parse()?,
            strength,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelKind {
    Duplicate,
    NearDuplicate,
    NonDuplicate,
}

impl LabelKind {
    pub fn is_positive(self) -> bool {
        !matches!(self, LabelKind::NonDuplicate)
    }
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LabelKind::Duplicate => "Duplicate",
            LabelKind::NearDuplicate => "NearDuplicate",
            LabelKind::NonDuplicate => "NonDuplicate",
        };
        f.write_str(s)
    }
}

impl FromStr for LabelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Duplicate" => Ok(LabelKind::Duplicate),
            "NearDuplicate" => Ok(LabelKind::NearDuplicate),
            "NonDuplicate" => Ok(LabelKind::NonDuplicate),
            other => Err(Error::Data(format!("unknown label kind {other:?}"))),
        }
    }
}

/// Role of a query volume: duplicate, near-duplicate, or non-duplicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryLabel {
    kind: LabelKind,
    ground_truth: Option<CaseId>,
    transform_tag: Option<TransformTag>,
}

impl QueryLabel {
    pub fn new(
        kind: LabelKind,
        ground_truth: Option<CaseId>,
        transform_tag: Option<TransformTag>,
    ) -> Result<Self> {
        if kind.is_positive() != ground_truth.is_some() {
            return Err(Error::Data(format!(
                "{kind} label {} ground truth",
                if kind.is_positive() {
                    "requires"
                } else {
                    "must not carry"
                }
            )));
        }
        Ok(QueryLabel {
            kind,
            ground_truth,
            transform_tag,
        })
    }

    pub fn duplicate(ground_truth: CaseId) -> Self {
        QueryLabel {
            kind: LabelKind::Duplicate,
            ground_truth: Some(ground_truth),
            transform_tag: None,
        }
    }

    pub fn near_duplicate(ground_truth: CaseId, tag: TransformTag) -> Self {
        QueryLabel {
            kind: LabelKind::NearDuplicate,
            ground_truth: Some(ground_truth),
            transform_tag: Some(tag),
        }
    }

    pub fn non_duplicate() -> Self {
        QueryLabel {
            kind: LabelKind::NonDuplicate,
            ground_truth: None,
            transform_tag: None,
        }
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn ground_truth(&self) -> Option<&CaseId> {
        self.ground_truth.as_ref()
    }

    pub fn transform_tag(&self) -> Option<TransformTag> {
        self.transform_tag
    }

    pub fn is_positive(&self) -> bool {
        self.kind.is_positive()
    }
}
