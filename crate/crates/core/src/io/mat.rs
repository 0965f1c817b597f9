//! Minimal MATLAB level-5 MAT-file reader: the first uncompressed, real,
//! numeric 3-D array in the file.

use ndarray::Array3;

use crate::error::{Error, Result};

const HEADER_LEN: usize = 128;

const MI_INT8: u32 = 1;
const MI_UINT8: u32 = 2;
const MI_INT16: u32 = 3;
const MI_UINT16: u32 = 4;
const MI_INT32: u32 = 5;
const MI_UINT32: u32 = 6;
const MI_SINGLE: u32 = 7;
const MI_DOUBLE: u32 = 9;
const MI_INT64: u32 = 12;
const MI_UINT64: u32 = 13;
const MI_MATRIX: u32 = 14;
const MI_COMPRESSED: u32 = 15;

const MX_CELL_CLASS: u32 = 1;
const MX_STRUCT_CLASS: u32 = 2;
const MX_CHAR_CLASS: u32 = 4;
const MX_SPARSE_CLASS: u32 = 5;
const MX_COMPLEX_FLAG: u32 = 0x0800;

fn err(msg: impl Into<String>) -> Error {
    Error::Format(format!("mat: {}", msg.into()))
}

pub fn is_mat(bytes: &[u8]) -> bool {
    bytes.len() >= HEADER_LEN && bytes.starts_with(b"MATLAB 5.0 MAT-file")
}

/// A tagged data element: type, payload, and the offset just past it.
struct Element<'a> {
    kind: u32,
    payload: &'a [u8],
    next: usize,
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| err("truncated element tag"))
}

fn read_element(bytes: &[u8], at: usize) -> Result<Element<'_>> {
    let first = read_u32(bytes, at)?;
    if first >> 16 != 0 {
        // small data element: size in the upper half, payload in the next 4 bytes
        let kind = first & 0xffff;
        let size = (first >> 16) as usize;
        if size > 4 {
            return Err(err("malformed small data element"));
        }
        let payload = bytes
            .get(at + 4..at + 4 + size)
            .ok_or_else(|| err("truncated small element"))?;
        return Ok(Element {
            kind,
            payload,
            next: at + 8,
        });
    }
    let size = read_u32(bytes, at + 4)? as usize;
    let start = at + 8;
    let payload = bytes
        .get(start..start + size)
        .ok_or_else(|| err("truncated data element"))?;
    let next = if first == MI_MATRIX || first == MI_COMPRESSED {
        start + size
    } else {
        start + size.div_ceil(8) * 8
    };
    Ok(Element {
        kind: first,
        payload,
        next,
    })
}

fn numeric_values(kind: u32, payload: &[u8]) -> Result<Vec<f64>> {
    macro_rules! decode {
        ($t:ty, $n:expr) => {
            payload
                .chunks_exact($n)
                .map(|c| <$t>::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect()
        };
    }
    Ok(match kind {
        MI_INT8 => payload.iter().map(|b| *b as i8 as f64).collect(),
        MI_UINT8 => payload.iter().map(|b| *b as f64).collect(),
        MI_INT16 => decode!(i16, 2),
        MI_UINT16 => decode!(u16, 2),
        MI_INT32 => decode!(i32, 4),
        MI_UINT32 => decode!(u32, 4),
        MI_SINGLE => decode!(f32, 4),
        MI_DOUBLE => decode!(f64, 8),
        MI_INT64 => decode!(i64, 8),
        MI_UINT64 => decode!(u64, 8),
        other => return Err(err(format!("unsupported numeric storage type {other}"))),
    })
}

/// Parses one miMATRIX payload. Returns `None` for arrays that are not a
/// real numeric 3-D array.
fn parse_matrix(payload: &[u8]) -> Result<Option<(String, Array3<f64>)>> {
    let flags = read_element(payload, 0)?;
    if flags.payload.len() < 8 {
        return Err(err("array flags too short"));
    }
    let flag_word = u32::from_le_bytes(flags.payload[..4].try_into().unwrap());
    let class = flag_word & 0xff;
    let dims_el = read_element(payload, flags.next)?;
    let dims: Vec<usize> = dims_el
        .payload
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()).max(0) as usize)
        .collect();
    let name_el = read_element(payload, dims_el.next)?;
    let name = String::from_utf8_lossy(name_el.payload).into_owned();

    if matches!(class, MX_CELL_CLASS | MX_STRUCT_CLASS | MX_CHAR_CLASS | MX_SPARSE_CLASS)
        || class > 15
    {
        return Ok(None);
    }
    if dims.len() != 3 {
        return Ok(None);
    }
    if flag_word & MX_COMPLEX_FLAG != 0 {
        return Err(err(format!("variable `{name}` is complex")));
    }
    let real = read_element(payload, name_el.next)?;
    let values = numeric_values(real.kind, real.payload)?;
    let (d0, d1, d2) = (dims[0], dims[1], dims[2]);
    if values.len() != d0 * d1 * d2 {
        return Err(err(format!(
            "variable `{name}` declares {d0}x{d1}x{d2} but stores {} values",
            values.len()
        )));
    }
    // column-major storage: (i, j, k) at i + d0 * (j + d1 * k)
    let data = Array3::from_shape_fn((d0, d1, d2), |(i, j, k)| values[i + d0 * (j + d1 * k)]);
    Ok(Some((name, data)))
}

/// Reads the first real numeric 3-D variable, axes taken as (row, col, band).
pub fn decode(bytes: &[u8]) -> Result<(String, Array3<f64>)> {
    if !is_mat(bytes) {
        return Err(err("not a level-5 MAT-file"));
    }
    if &bytes[126..128] != b"IM" {
        return Err(err("big-endian MAT-files are not supported"));
    }
    let mut at = HEADER_LEN;
    let mut saw_compressed = false;
    while at + 8 <= bytes.len() {
        let el = read_element(bytes, at)?;
        match el.kind {
            MI_MATRIX => {
                if let Some(found) = parse_matrix(el.payload)? {
                    return Ok(found);
                }
            }
            MI_COMPRESSED => saw_compressed = true,
            _ => {}
        }
        at = el.next;
    }
    if saw_compressed {
        Err(err("compressed variables are not supported; save with -v6 or without compression"))
    } else {
        Err(err("cube must be 3-D: no real numeric 3-D variable found"))
    }
}
