//! NPY v1.0 reader/writer for little-endian `f4`/`f8` arrays in C order.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::Dtype;

pub const MAGIC: &[u8] = b"\x93NUMPY";

/// A decoded NPY array, values promoted to `f64` in C order.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    pub data: Vec<f64>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(format!("npy: {}", msg.into()))
}

pub fn encode(shape: &[usize], data: &[f64], dtype: Dtype) -> Vec<u8> {
    debug_assert_eq!(shape.iter().product::<usize>(), data.len());
    let shape_txt = match shape {
        [n] => format!("({n},)"),
        dims => format!(
            "({})",
            dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let descr = match dtype {
        Dtype::F32 => "<f4",
        Dtype::F64 => "<f8",
    };
    let mut header = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_txt}, }}");
    // magic(6) + version(2) + len(2) + header + '\n' aligned to 64 bytes
    let unpadded = 10 + header.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    header.push_str(&" ".repeat(pad));
    header.push('\n');

    let mut out = Vec::with_capacity(10 + header.len() + data.len() * dtype.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    match dtype {
        Dtype::F32 => data.iter().for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes())),
        Dtype::F64 => data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
    }
    out
}

pub fn write_npy(path: &Path, shape: &[usize], data: &[f64], dtype: Dtype) -> Result<()> {
    let bytes = encode(shape, data, dtype);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_npy(path: &Path) -> Result<NpyArray> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Pulls the value text following `'key':` out of the header dictionary.
fn dict_value<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let needle = format!("'{key}':");
    let start = header
        .find(&needle)
        .ok_or_else(|| format_err(format!("header lacks `{key}`")))?
        + needle.len();
    let rest = header[start..].trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')').map(|i| i + 1)
    } else {
        rest.find([',', '}'])
    }
    .ok_or_else(|| format_err(format!("malformed `{key}` entry")))?;
    Ok(rest[..end].trim())
}

pub fn decode(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(format_err("missing magic string"));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(format_err(format!("unsupported version {major}.{minor}, only 1.0 is read")));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = 10 + header_len;
    if bytes.len() < data_start {
        return Err(format_err("truncated header"));
    }
    let header = std::str::from_utf8(&bytes[10..data_start])
        .map_err(|_| format_err("header is not valid text"))?;

    let descr = dict_value(header, "descr")?.trim_matches(|c| c == '\'' || c == '"');
    let dtype = match descr {
        "<f4" => Dtype::F32,
        "<f8" => Dtype::F64,
        other => return Err(format_err(format!("unsupported dtype `{other}` (need <f4 or <f8)"))),
    };
    match dict_value(header, "fortran_order")? {
        "False" => {}
        "True" => return Err(format_err("Fortran-order arrays are not supported")),
        other => return Err(format_err(format!("bad fortran_order `{other}`"))),
    }
    let shape_txt = dict_value(header, "shape")?;
    let shape: Vec<usize> = shape_txt
        .trim_start_matches('(')
        .trim_end_matches(')')
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| format_err(format!("bad shape `{shape_txt}`"))))
        .collect::<Result<_>>()?;

    let count: usize = shape.iter().product();
    let payload = &bytes[data_start..];
    let expected = count * dtype.size();
    if payload.len() != expected {
        return Err(format_err(format!(
            "payload length mismatch: header declares {expected} bytes, file has {}",
            payload.len()
        )));
    }
    let data = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Ok(NpyArray { shape, dtype, data })
}
