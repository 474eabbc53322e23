//! On-disk formats: `.medb` embedding files, `.mvol` volume files and the
//! CSV dataset manifest.
//!
//! `.medb` layout (all integers little-endian):
//!
//! | field        | type     | value                     |
//! |--------------|----------|---------------------------|
//! | magic        | 4 bytes  | `MEDB`                    |
//! | version      | u16      | 1                         |
//! | dim          | u32      | ≥ 1                       |
//! | slice_count  | u32      | ≥ 1                       |
//! | case_id_len  | u16      | ≥ 1                       |
//! | case_id      | bytes    | UTF-8, `case_id_len` long |
//!
//! followed by `slice_count × dim` little-endian `f32`, slice-major.
//!
//! `.mvol` uses the same scheme with magic `MVOL` and the three extents
//! `n_z, n_y, n_x` (u32 each) in place of `dim, slice_count`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_embedding_set, CaseId, EmbeddingSet, LabelKind, QueryLabel, Volume};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"MEDB";
pub const VOLUME_MAGIC: [u8; 4] = *b"MVOL";
pub const FORMAT_VERSION: u16 = 1;

pub const MANIFEST_HEADER: &str = "case_id,file_path,bucket,kind,ground_truth,transform_tag,task";

/// Size in bytes of the `.medb` header for a given case id.
pub fn embedding_header_len(case_id: &CaseId) -> usize {
    4 + 2 + 4 + 4 + 2 + case_id.as_str().len()
}

fn push_case_id(buf: &mut Vec<u8>, case_id: &CaseId) -> Result<()> {
    let bytes = case_id.as_str().as_bytes();
    let len = u16::try_from(bytes.len())
        .map_err(|_| Error::InvalidCaseId(format!("case id longer than {} bytes", u16::MAX)))?;
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(bytes);
    Ok(())
}

fn to_u32(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value).map_err(|_| Error::InvalidHeader(format!("{what} {value} exceeds u32")))
}

pub fn encode_embedding_set(es: &EmbeddingSet) -> Result<Vec<u8>> {
    validate_embedding_set(es)?;
    let mut buf = Vec::with_capacity(embedding_header_len(&es.case_id) + es.slice_count() * es.dim * 4);
    buf.extend_from_slice(&EMBEDDING_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&to_u32(es.dim, "dim")?.to_le_bytes());
    buf.extend_from_slice(&to_u32(es.slice_count(), "slice_count")?.to_le_bytes());
    push_case_id(&mut buf, &es.case_id)?;
    for v in &es.vectors {
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(buf)
}

/// Little-endian cursor over a byte buffer.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::TruncatedPayload {
                expected: end,
                found: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let found: [u8; 4] = self.take(4)?.try_into().unwrap();
        if found != expected {
            return Err(Error::BadMagic { expected, found });
        }
        Ok(())
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn version(&mut self) -> Result<()> {
        let v = self.u16()?;
        if v != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(v));
        }
        Ok(())
    }

    fn case_id(&mut self) -> Result<CaseId> {
        let len = self.u16()? as usize;
        if len == 0 {
            return Err(Error::InvalidHeader("case_id_len must be ≥ 1".into()));
        }
        let raw = self.take(len)?;
        let s = std::str::from_utf8(raw)
            .map_err(|_| Error::InvalidHeader("case id is not valid UTF-8".into()))?;
        CaseId::new(s)
    }

    /// Reads exactly `count` floats and requires the buffer to end there.
    fn floats(&mut self, count: usize) -> Result<Vec<f32>> {
        let need = count * 4;
        let remaining = self.bytes.len() - self.pos;
        if remaining < need {
            return Err(Error::TruncatedPayload {
                expected: need,
                found: remaining,
            });
        }
        if remaining > need {
            return Err(Error::InvalidHeader(format!(
                "payload has {} trailing bytes",
                remaining - need
            )));
        }
        let raw = self.take(need)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_embedding_set(bytes: &[u8]) -> Result<EmbeddingSet> {
    let mut r = Reader::new(bytes);
    r.magic(EMBEDDING_MAGIC)?;
    r.version()?;
    let dim = r.u32()? as usize;
    let slice_count = r.u32()? as usize;
    if dim == 0 {
        return Err(Error::InvalidHeader("dim must be ≥ 1".into()));
    }
    if slice_count == 0 {
        return Err(Error::InvalidHeader("slice_count must be ≥ 1".into()));
    }
    let case_id = r.case_id()?;
    let flat = r.floats(slice_count * dim)?;
    let vectors = flat.chunks_exact(dim).map(<[f32]>::to_vec).collect();
    EmbeddingSet::new(case_id, dim, vectors)
}

pub fn write_embedding_file(es: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_embedding_set(es)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_embedding_file(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embedding_set(&bytes)
}

pub fn encode_volume(v: &Volume) -> Result<Vec<u8>> {
    let (nz, ny, nx) = v.shape();
    let mut buf = Vec::with_capacity(20 + v.case_id().as_str().len() + v.voxels().len() * 4);
    buf.extend_from_slice(&VOLUME_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for extent in [nz, ny, nx] {
        buf.extend_from_slice(&to_u32(extent, "extent")?.to_le_bytes());
    }
    push_case_id(&mut buf, v.case_id())?;
    for x in v.voxels() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_volume(bytes: &[u8]) -> Result<Volume> {
    let mut r = Reader::new(bytes);
    r.magic(VOLUME_MAGIC)?;
    r.version()?;
    let nz = r.u32()? as usize;
    let ny = r.u32()? as usize;
    let nx = r.u32()? as usize;
    if nz == 0 || ny == 0 || nx == 0 {
        return Err(Error::InvalidHeader("volume extents must be ≥ 1".into()));
    }
    let case_id = r.case_id()?;
    let voxels = r.floats(nz * ny * nx)?;
    Volume::new(case_id, (nz, ny, nx), voxels)
}

pub fn write_volume_file(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_volume(v)?).map_err(|e| Error::io(path, e))
}

pub fn read_volume_file(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_volume(&bytes)
}

/// Dataset partition a manifest entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Bucket {
    #[serde(rename = "DB_1A")]
    Db1A,
    #[serde(rename = "NEAR_1B")]
    Near1B,
    #[serde(rename = "NONDUP_1C")]
    NonDup1C,
    #[serde(rename = "DB_2A")]
    Db2A,
    #[serde(rename = "NEAR_2B")]
    Near2B,
    #[serde(rename = "NONDUP_2C")]
    NonDup2C,
    #[serde(rename = "UNASSIGNED")]
    Unassigned,
}

/// Which of the three bucket roles a bucket plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BucketRole {
    Database,
    NearDuplicate,
    NonDuplicate,
}

impl Bucket {
    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::Db1A => "DB_1A",
            Bucket::Near1B => "NEAR_1B",
            Bucket::NonDup1C => "NONDUP_1C",
            Bucket::Db2A => "DB_2A",
            Bucket::Near2B => "NEAR_2B",
            Bucket::NonDup2C => "NONDUP_2C",
            Bucket::Unassigned => "UNASSIGNED",
        }
    }

    /// 1 for the calibration buckets, 2 for the evaluation buckets.
    pub fn set(self) -> Option<u8> {
        match self {
            Bucket::Db1A | Bucket::Near1B | Bucket::NonDup1C => Some(1),
            Bucket::Db2A | Bucket::Near2B | Bucket::NonDup2C => Some(2),
            Bucket::Unassigned => None,
        }
    }

    pub fn role(self) -> Option<BucketRole> {
        match self {
            Bucket::Db1A | Bucket::Db2A => Some(BucketRole::Database),
            Bucket::Near1B | Bucket::Near2B => Some(BucketRole::NearDuplicate),
            Bucket::NonDup1C | Bucket::NonDup2C => Some(BucketRole::NonDuplicate),
            Bucket::Unassigned => None,
        }
    }

    pub fn for_set(set: u8, role: BucketRole) -> Bucket {
        match (set, role) {
            (1, BucketRole::Database) => Bucket::Db1A,
            (1, BucketRole::NearDuplicate) => Bucket::Near1B,
            (1, BucketRole::NonDuplicate) => Bucket::NonDup1C,
            (_, BucketRole::Database) => Bucket::Db2A,
            (_, BucketRole::NearDuplicate) => Bucket::Near2B,
            (_, BucketRole::NonDuplicate) => Bucket::NonDup2C,
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Bucket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "DB_1A" => Ok(Bucket::Db1A),
            "NEAR_1B" => Ok(Bucket::Near1B),
            "NONDUP_1C" => Ok(Bucket::NonDup1C),
            "DB_2A" => Ok(Bucket::Db2A),
            "NEAR_2B" => Ok(Bucket::Near2B),
            "NONDUP_2C" => Ok(Bucket::NonDup2C),
            "UNASSIGNED" => Ok(Bucket::Unassigned),
            other => Err(Error::Data(format!("unknown bucket {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub case_id: CaseId,
    /// Relative to the manifest's directory.
    pub file_path: PathBuf,
    pub bucket: Bucket,
    pub label: Option<QueryLabel>,
    pub task: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn in_bucket(&self, bucket: Bucket) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.bucket == bucket)
    }

    /// Checks that no bucket holds the same case id twice.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert((e.bucket, e.case_id.clone())) {
                return Err(Error::DuplicateCaseId(format!(
                    "{} in bucket {}",
                    e.case_id, e.bucket
                )));
            }
        }
        Ok(())
    }

    /// Checks that every entry's file exists below `base`.
    pub fn check_paths(&self, base: &Path) -> Result<()> {
        for e in &self.entries {
            let p = base.join(&e.file_path);
            if !p.is_file() {
                return Err(Error::Data(format!(
                    "manifest entry {} points to missing file {}",
                    e.case_id,
                    p.display()
                )));
            }
        }
        Ok(())
    }
}

fn check_field(field: &str, what: &str) -> Result<()> {
    if field.contains([',', '\n', '\r']) {
        return Err(Error::Data(format!(
            "{what} {field:?} contains a comma or newline"
        )));
    }
    Ok(())
}

pub fn render_manifest(m: &Manifest) -> Result<String> {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for e in &m.entries {
        let path = e
            .file_path
            .to_str()
            .ok_or_else(|| Error::Data(format!("non UTF-8 path for {}", e.case_id)))?;
        check_field(e.case_id.as_str(), "case id")?;
        check_field(path, "file path")?;
        check_field(&e.task, "task")?;
        let (kind, gt, tag) = match &e.label {
            Some(l) => (
                l.kind().to_string(),
                l.ground_truth().map(|g| g.to_string()).unwrap_or_default(),
                l.transform_tag().map(|t| t.to_string()).unwrap_or_default(),
            ),
            None => Default::default(),
        };
        check_field(&gt, "ground truth")?;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.case_id, path, e.bucket, kind, gt, tag, e.task
        ));
    }
    Ok(out)
}

/// Parses manifest text; `origin` is only used in error messages.
pub fn parse_manifest(text: &str, origin: &Path) -> Result<Manifest> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == MANIFEST_HEADER => {}
        Some((_, h)) => return Err(parse_err(1, format!("expected header {MANIFEST_HEADER:?}, found {h:?}"))),
        None => return Err(parse_err(1, "missing header line".into())),
    }
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(parse_err(line_no, format!("expected 7 fields, found {}", fields.len())));
        }
        let case_id = CaseId::new(fields[0]).map_err(|e| parse_err(line_no, e.to_string()))?;
        if fields[1].is_empty() {
            return Err(parse_err(line_no, "empty file_path".into()));
        }
        let bucket: Bucket = fields[2].parse().map_err(|e: Error| parse_err(line_no, e.to_string()))?;
        let label = if fields[3].is_empty() {
            if !fields[4].is_empty() || !fields[5].is_empty() {
                return Err(parse_err(line_no, "ground_truth/transform_tag given without kind".into()));
            }
            None
        } else {
            let kind: LabelKind = fields[3].parse().map_err(|e: Error| parse_err(line_no, e.to_string()))?;
            let gt = if fields[4].is_empty() {
                None
            } else {
                Some(CaseId::new(fields[4]).map_err(|e| parse_err(line_no, e.to_string()))?)
            };
            let tag = if fields[5].is_empty() {
                None
            } else {
                Some(fields[5].parse().map_err(|e: Error| parse_err(line_no, e.to_string()))?)
            };
            Some(QueryLabel::new(kind, gt, tag).map_err(|e| parse_err(line_no, e.to_string()))?)
        };
        if !seen.insert((bucket, case_id.clone())) {
            return Err(parse_err(
                line_no,
                format!("duplicate case id {case_id} in bucket {bucket}"),
            ));
        }
        entries.push(ManifestEntry {
            case_id,
            file_path: PathBuf::from(fields[1]),
            bucket,
            label,
            task: fields[6].to_string(),
        });
    }
    Ok(Manifest { entries })
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path)
}

pub fn save_manifest(m: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    m.validate()?;
    fs::write(path, render_manifest(m)?).map_err(|e| Error::io(path, e))
}
