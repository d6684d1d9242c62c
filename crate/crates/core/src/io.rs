//! Field and DN-map files: a JSON header plus a sibling raw file of
//! interleaved little-endian `(re, im)` f64 pairs in row-major order.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, GridSpec, Representation, C64};
use crate::forward::DnMap;

pub const DTYPE: &str = "complex128-little-endian";
pub const ORDER: &str = "row-major";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldHeader {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub points_per_axis: usize,
    pub half_width: f64,
    pub representation: Representation,
    pub dtype: String,
    pub order: String,
    /// Bloch shift; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<Vec<f64>>,
    /// Raw data file name, relative to the header.
    pub data: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DnHeader {
    #[serde(flatten)]
    pub map: DnMap,
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub order: String,
    pub data: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

/// `foo.json` -> `foo.bin`.
pub fn data_path(header: &Path) -> PathBuf {
    header.with_extension("bin")
}

fn encode(values: impl Iterator<Item = C64>) -> Vec<u8> {
    let mut out = Vec::new();
    for v in values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

fn decode(bytes: &[u8], count: usize) -> Result<Vec<C64>> {
    if bytes.len() != 16 * count {
        return Err(Error::Contract(format!(
            "raw file has {} bytes, expected {}",
            bytes.len(),
            16 * count
        )));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect())
}

fn check_format(dtype: &str, order: &str) -> Result<()> {
    if dtype != DTYPE || order != ORDER {
        return Err(Error::Contract(format!(
            "unsupported raw format {dtype}/{order}"
        )));
    }
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn write_field(
    path: &Path,
    field: &ComplexField,
    metadata: Option<serde_json::Value>,
) -> Result<()> {
    let raw = data_path(path);
    let header = FieldHeader {
        n: field.grid.n,
        m: Some(field.grid.m),
        points_per_axis: field.grid.points_per_axis,
        half_width: field.grid.half_width,
        representation: field.representation,
        dtype: DTYPE.into(),
        order: ORDER.into(),
        shift: field
            .shift
            .iter()
            .any(|v| *v != 0.0)
            .then(|| field.shift.clone()),
        data: file_name(&raw),
        metadata,
    };
    fs::write(&raw, encode(field.data.iter().cloned()))?;
    fs::write(path, serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<(ComplexField, FieldHeader)> {
    let header: FieldHeader = serde_json::from_str(&fs::read_to_string(path)?)?;
    check_format(&header.dtype, &header.order)?;
    let grid = GridSpec::new(
        header.n,
        header.m.unwrap_or(1),
        header.points_per_axis,
        header.half_width,
    )?;
    let raw = path.parent().unwrap_or(Path::new(".")).join(&header.data);
    let data = decode(&fs::read(raw)?, grid.len())?;
    let mut field = ComplexField::from_data(&grid, data, header.representation)?;
    if let Some(s) = &header.shift {
        if s.len() != grid.n {
            return Err(Error::Contract("shift length does not match n".into()));
        }
        field.shift = s.clone();
    }
    Ok((field, header))
}

pub fn write_dn_map(path: &Path, dn: &DnMap, metadata: Option<serde_json::Value>) -> Result<()> {
    let raw = data_path(path);
    let (rows, cols) = dn.matrix.shape();
    let header = DnHeader {
        map: dn.clone(),
        rows,
        cols,
        dtype: DTYPE.into(),
        order: ORDER.into(),
        data: file_name(&raw),
        metadata,
    };
    let values = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .map(|(i, j)| dn.matrix[(i, j)]);
    fs::write(&raw, encode(values))?;
    fs::write(path, serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

pub fn read_dn_map(path: &Path) -> Result<(DnMap, Option<serde_json::Value>)> {
    let header: DnHeader = serde_json::from_str(&fs::read_to_string(path)?)?;
    check_format(&header.dtype, &header.order)?;
    let raw = path.parent().unwrap_or(Path::new(".")).join(&header.data);
    let data = decode(&fs::read(raw)?, header.rows * header.cols)?;
    let mut map = header.map;
    map.matrix = DMatrix::from_row_slice(header.rows, header.cols, &data);
    Ok((map, header.metadata))
}
