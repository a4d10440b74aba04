//! Two-file tensor container and CSV export.
//!
//! A container at base path `p` is `p.manifest.json` plus `p.bin`. The
//! manifest is UTF-8 JSON with keys `version` (always 1) and `tensors`, a
//! list of `{name, dtype, shape, offset, order}` records; an optional
//! `attributes` object carries string metadata such as a network's
//! activation. The blob holds little-endian IEEE-754 values, one tensor after
//! another, each starting on an 8-byte boundary with zero padding between.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const CONTAINER_VERSION: u32 = 1;
const ROW_MAJOR: &str = "row-major";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }

    fn all_finite(&self) -> bool {
        match self {
            TensorData::F32(v) => v.iter().all(|x| x.is_finite()),
            TensorData::F64(v) => v.iter().all(|x| x.is_finite()),
        }
    }
}

/// A named tensor ready to be written.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f64(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            shape,
            data: TensorData::F64(data),
        }
    }

    pub fn f32(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Self {
        Self {
            name: name.into(),
            shape,
            data: TensorData::F32(data),
        }
    }

    pub fn from_matrix(name: impl Into<String>, m: &Matrix) -> Self {
        Self::f64(name, vec![m.rows(), m.cols()], m.as_slice().to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub order: String,
}

impl TensorRecord {
    pub fn element_count(&self) -> Option<usize> {
        self.shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
    }

    pub fn byte_len(&self) -> Option<usize> {
        self.element_count()?.checked_mul(self.dtype.size())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    tensors: Vec<TensorRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorContainer {
    pub version: u32,
    pub tensors: Vec<TensorRecord>,
    pub blob: Vec<u8>,
    pub attributes: BTreeMap<String, String>,
}

pub fn manifest_path(base: &Path) -> PathBuf {
    with_suffix(base, ".manifest.json")
}

pub fn blob_path(base: &Path) -> PathBuf {
    with_suffix(base, ".bin")
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn align8(n: usize) -> usize {
    n.div_ceil(8) * 8
}

impl TensorContainer {
    /// Lays out tensors in order, validating names and shapes.
    pub fn build(tensors: &[Tensor], attributes: BTreeMap<String, String>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut records = Vec::with_capacity(tensors.len());
        let mut blob = Vec::new();
        for t in tensors {
            if !seen.insert(t.name.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate tensor name {:?}", t.name)));
            }
            let count = t
                .shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Shape(format!("shape overflow in {:?}", t.name)))?;
            if count != t.data.len() {
                return Err(Error::Shape(format!(
                    "tensor {:?} has shape {:?} but {} values",
                    t.name,
                    t.shape,
                    t.data.len()
                )));
            }
            if !t.data.all_finite() {
                return Err(Error::NonFinite(format!("tensor {:?}", t.name)));
            }
            blob.resize(align8(blob.len()), 0);
            records.push(TensorRecord {
                name: t.name.clone(),
                dtype: t.data.dtype(),
                shape: t.shape.clone(),
                offset: blob.len(),
                order: ROW_MAJOR.to_string(),
            });
            t.data.write_le(&mut blob);
        }
        Ok(Self {
            version: CONTAINER_VERSION,
            tensors: records,
            blob,
            attributes,
        })
    }

    pub fn record(&self, name: &str) -> Option<&TensorRecord> {
        self.tensors.iter().find(|r| r.name == name)
    }

    pub fn data(&self, name: &str) -> Result<TensorData> {
        let rec = self
            .record(name)
            .ok_or_else(|| Error::Format(format!("no tensor named {name:?}")))?;
        Ok(decode(rec, &self.blob))
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor> {
        let rec = self
            .record(name)
            .ok_or_else(|| Error::Format(format!("no tensor named {name:?}")))?;
        Ok(Tensor {
            name: rec.name.clone(),
            shape: rec.shape.clone(),
            data: decode(rec, &self.blob),
        })
    }

    /// Reads a rank-2 tensor (or a rank-1 tensor as a single row) as an
    /// `f64` matrix.
    pub fn matrix(&self, name: &str) -> Result<Matrix> {
        let t = self.tensor(name)?;
        let (r, c) = match t.shape.as_slice() {
            [r, c] => (*r, *c),
            [n] => (1, *n),
            [] => (1, 1),
            s => {
                return Err(Error::Shape(format!(
                    "tensor {name:?} has rank {} where a matrix is expected",
                    s.len()
                )))
            }
        };
        Matrix::from_vec(r, c, t.data.to_f64())
    }

    /// Checks every structural invariant and rejects non-finite payloads.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONTAINER_VERSION {
            return Err(Error::Format(format!("unsupported version {}", self.version)));
        }
        let mut names = HashSet::new();
        let mut spans = Vec::with_capacity(self.tensors.len());
        for rec in &self.tensors {
            if !names.insert(rec.name.as_str()) {
                return Err(Error::Format(format!("duplicate tensor name {:?}", rec.name)));
            }
            if rec.order != ROW_MAJOR {
                return Err(Error::Format(format!(
                    "tensor {:?}: unsupported order {:?}",
                    rec.name, rec.order
                )));
            }
            if rec.offset % 8 != 0 {
                return Err(Error::Format(format!(
                    "tensor {:?}: offset {} is not 8-byte aligned",
                    rec.name, rec.offset
                )));
            }
            let len = rec
                .byte_len()
                .ok_or_else(|| Error::Format(format!("tensor {:?}: shape overflow", rec.name)))?;
            let end = rec.offset.checked_add(len);
            if end.is_none_or(|e| e > self.blob.len()) {
                return Err(Error::Format(format!(
                    "record out of bounds: tensor {:?} spans {}..{} of a {}-byte blob",
                    rec.name,
                    rec.offset,
                    rec.offset.saturating_add(len),
                    self.blob.len()
                )));
            }
            spans.push((rec.offset, rec.offset + len, rec.name.as_str()));
        }
        spans.sort_unstable();
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::Format(format!("records {:?} and {:?} overlap", w[0].2, w[1].2)));
            }
        }
        for rec in &self.tensors {
            if !decode(rec, &self.blob).all_finite() {
                return Err(Error::NonFinite(format!("tensor {:?}", rec.name)));
            }
        }
        Ok(())
    }
}

fn decode(rec: &TensorRecord, blob: &[u8]) -> TensorData {
    let n = rec.element_count().unwrap_or(0);
    let bytes = &blob[rec.offset..rec.offset + n * rec.dtype.size()];
    match rec.dtype {
        DType::F32 => TensorData::F32(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
                .collect(),
        ),
        DType::F64 => TensorData::F64(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
        ),
    }
}

pub fn write_container(path: &Path, tensors: &[Tensor]) -> Result<()> {
    write_container_with(path, tensors, BTreeMap::new())
}

pub fn write_container_with(path: &Path, tensors: &[Tensor], attributes: BTreeMap<String, String>) -> Result<()> {
    let c = TensorContainer::build(tensors, attributes)?;
    let manifest = Manifest {
        version: c.version,
        tensors: c.tensors,
        attributes: c.attributes,
    };
    let mpath = manifest_path(path);
    let bpath = blob_path(path);
    write_file(&mpath, (crate::report::to_sorted_json(&manifest)? + "\n").as_bytes())?;
    write_file(&bpath, &c.blob)
}

pub fn read_container(path: &Path) -> Result<TensorContainer> {
    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", mpath.display())))?;
    let bpath = blob_path(path);
    let blob = fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
    let c = TensorContainer {
        version: manifest.version,
        tensors: manifest.tensors,
        blob,
        attributes: manifest.attributes,
    };
    c.validate()?;
    Ok(c)
}

/// A CSV cell. Reals are printed with 17 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Formats a real like C's `%.17g`.
pub fn format_real(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp).max(0) as usize;
        strip_zeros(&format!("{x:.decimals$}"))
    }
}

fn strip_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn csv_string(header: &[&str], rows: &[Vec<Cell>]) -> Result<String> {
    let mut out = String::new();
    let line = |cells: Vec<String>| cells.join(",") + "\n";
    out.push_str(&line(header.iter().map(|h| csv_field(h)).collect()));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::Shape(format!(
                "csv row {i} has {} cells, header has {}",
                row.len(),
                header.len()
            )));
        }
        out.push_str(&line(
            row.iter()
                .map(|c| match c {
                    Cell::Int(v) => v.to_string(),
                    Cell::Real(v) => format_real(*v),
                    Cell::Text(s) => csv_field(s),
                })
                .collect(),
        ));
    }
    Ok(out)
}

pub fn export_csv(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    write_file(path, csv_string(header, rows)?.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
