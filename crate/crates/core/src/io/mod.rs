//! On-disk formats: native cube files, NPY and MATLAB v5 readers,
//! wavelength sidecars and result logs.
//!
//! # Native cube format
//!
//! A single UTF-8 JSON header line
//!
//! ```text
//! {"magic":"HBCUBE1","height":H,"width":W,"bands":C,"dtype":"f32","has_wavelengths":true}\n
//! ```
//!
//! followed by `H*W*C` little-endian values in `(row, col, band)` order and,
//! when `has_wavelengths` is set, `C` little-endian `f64` wavelengths. The
//! file length must match the header exactly.

pub mod mat;
pub mod npy;
pub mod records;

use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::cube::HsiCube;
use crate::error::{Error, Result};

pub use records::{append_record, read_log, RecordLog, LOG_COLUMNS};

pub const NATIVE_MAGIC: &str = "HBCUBE1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeFileHeader {
    pub magic: String,
    pub height: u32,
    pub width: u32,
    pub bands: u32,
    pub dtype: Dtype,
    pub has_wavelengths: bool,
}

pub fn encode_native(cube: &HsiCube, dtype: Dtype) -> Result<Vec<u8>> {
    let dim = |v: usize, name: &str| {
        u32::try_from(v).map_err(|_| Error::Format(format!("{name} {v} exceeds u32")))
    };
    let header = CubeFileHeader {
        magic: NATIVE_MAGIC.to_string(),
        height: dim(cube.height(), "height")?,
        width: dim(cube.width(), "width")?,
        bands: dim(cube.bands(), "bands")?,
        dtype,
        has_wavelengths: cube.wavelengths().is_some(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    match dtype {
        Dtype::F32 => cube
            .as_slice()
            .iter()
            .for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes())),
        Dtype::F64 => cube
            .as_slice()
            .iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
    }
    if let Some(wl) = cube.wavelengths() {
        wl.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    Ok(out)
}

pub fn decode_native(bytes: &[u8]) -> Result<HsiCube> {
    let nl = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| Error::Format("native cube: missing header line".into()))?;
    let header: CubeFileHeader = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::Format(format!("native cube: bad header: {e}")))?;
    if header.magic != NATIVE_MAGIC {
        return Err(Error::Format(format!("native cube: bad magic `{}`", header.magic)));
    }
    let (h, w, b) = (header.height as usize, header.width as usize, header.bands as usize);
    if h == 0 || w == 0 || b == 0 {
        return Err(Error::Format("native cube: dimensions must be positive".into()));
    }
    let n = h * w * b;
    let payload = &bytes[nl + 1..];
    let expected = n * header.dtype.size() + if header.has_wavelengths { b * 8 } else { 0 };
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "native cube: payload length mismatch (expected {expected} bytes, found {})",
            payload.len()
        )));
    }
    let value_bytes = n * header.dtype.size();
    let values: Vec<f64> = match header.dtype {
        Dtype::F32 => payload[..value_bytes]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => payload[..value_bytes]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    let wavelengths = header.has_wavelengths.then(|| {
        payload[value_bytes..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    });
    HsiCube::from_vec((h, w, b), values, wavelengths)
}

/// Writes the native format. `F32` output rounds values to single precision.
pub fn write_cube(cube: &HsiCube, path: &Path, dtype: Dtype) -> Result<()> {
    let bytes = encode_native(cube, dtype)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a cube in the native, NPY (3-D, C order) or MATLAB v5 format,
/// detected from the leading bytes.
pub fn read_cube(path: &Path) -> Result<HsiCube> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cube(&bytes)
}

pub fn decode_cube(bytes: &[u8]) -> Result<HsiCube> {
    if bytes.starts_with(npy::MAGIC) {
        let arr = npy::decode(bytes)?;
        if arr.shape.len() != 3 {
            return Err(Error::Format(format!(
                "cube must be 3-D, got shape {:?}",
                arr.shape
            )));
        }
        HsiCube::from_vec((arr.shape[0], arr.shape[1], arr.shape[2]), arr.data, None)
    } else if mat::is_mat(bytes) {
        let (_, data) = mat::decode(bytes)?;
        HsiCube::new(data, None)
    } else if bytes.first() == Some(&b'{') {
        decode_native(bytes)
    } else {
        Err(Error::Format("unknown cube format".into()))
    }
}

/// Reads band-center wavelengths (nm) separated by commas, whitespace or
/// newlines. Lines starting with `#` are ignored.
pub fn read_wavelengths(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_wavelengths(&text)
}

pub fn parse_wavelengths(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Format(format!("bad wavelength `{t}`")))
        })
        .collect()
}

/// Writes a cube as a C-order NPY array.
pub fn write_cube_npy(cube: &HsiCube, path: &Path, dtype: Dtype) -> Result<()> {
    let (h, w, b) = cube.shape();
    npy::write_npy(path, &[h, w, b], cube.as_slice(), dtype)
}

pub(crate) fn array3_from_npy(arr: npy::NpyArray) -> Result<Array3<f64>> {
    if arr.shape.len() != 3 {
        return Err(Error::Format(format!("expected a 3-D array, got shape {:?}", arr.shape)));
    }
    Array3::from_shape_vec((arr.shape[0], arr.shape[1], arr.shape[2]), arr.data)
        .map_err(|e| Error::Format(e.to_string()))
}
