//! Minimal NPY reader/writer for 2-D little-endian float matrices.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

const NPY_MAGIC: &[u8] = b"\x93NUMPY";

fn unsupported(path: &Path, reason: impl Into<String>) -> Error {
    Error::NpyUnsupported {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Serializes as NPY v1.0, `<f8`, C order.
pub fn encode_npy(matrix: &DenseMatrix) -> Vec<u8> {
    let dict = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': ({}, {}), }}",
        matrix.rows(),
        matrix.cols()
    );
    // magic(6) + version(2) + header_len(2) + dict + padding + '\n' is a multiple of 64
    let unpadded = NPY_MAGIC.len() + 4 + dict.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    let header_len = dict.len() + pad + 1;
    let mut out = Vec::with_capacity(unpadded + pad + matrix.data().len() * 8);
    out.extend_from_slice(NPY_MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat_n(b' ', pad));
    out.push(b'\n');
    for v in matrix.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_npy(path: impl AsRef<Path>, matrix: &DenseMatrix) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_npy(matrix)).map_err(|e| Error::io(path, e))
}

pub fn read_npy(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_npy(&bytes, path)
}

/// Parses NPY bytes; `path` only labels diagnostics.
pub fn decode_npy(bytes: &[u8], path: &Path) -> Result<DenseMatrix> {
    if bytes.len() < 10 || &bytes[..6] != NPY_MAGIC {
        return Err(unsupported(path, "missing NPY magic"));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (header_len, start) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(unsupported(path, "truncated header length"));
            }
            (u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize, 12)
        }
        _ => return Err(unsupported(path, format!("NPY version {major}.{minor}"))),
    };
    let data_start = start + header_len;
    if bytes.len() < data_start {
        return Err(unsupported(path, "truncated header"));
    }
    let header = std::str::from_utf8(&bytes[start..data_start])
        .map_err(|_| unsupported(path, "header is not text"))?;

    let descr = dict_value(header, "descr").ok_or_else(|| unsupported(path, "header lacks 'descr'"))?;
    let width = match descr.trim_matches(|c| c == '\'' || c == '"') {
        "<f8" => 8,
        "<f4" => 4,
        other => return Err(unsupported(path, format!("dtype {other}, expected <f4 or <f8"))),
    };
    let fortran = dict_value(header, "fortran_order").ok_or_else(|| unsupported(path, "header lacks 'fortran_order'"))?;
    match fortran {
        "False" => {}
        "True" => return Err(unsupported(path, "Fortran-order arrays are not supported")),
        other => return Err(unsupported(path, format!("fortran_order = {other}"))),
    }
    let shape = dict_value(header, "shape").ok_or_else(|| unsupported(path, "header lacks 'shape'"))?;
    let dims: Vec<usize> = shape
        .trim_start_matches('(')
        .trim_end_matches(')')
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| unsupported(path, format!("bad shape entry {s:?}"))))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(unsupported(path, format!("{}-D array, expected 2-D", dims.len())));
    };

    let payload = &bytes[data_start..];
    let expected = rows * cols * width;
    if payload.len() != expected {
        return Err(unsupported(
            path,
            format!("payload holds {} bytes, shape ({rows}, {cols}) needs {expected}", payload.len()),
        ));
    }
    let data: Vec<f64> = if width == 8 {
        payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect()
    } else {
        payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect()
    };
    DenseMatrix::new(rows, cols, data)
}

/// Raw text of `key`'s value in a Python dict literal; tuples are kept whole.
fn dict_value<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    let at = header
        .find(&format!("'{key}'"))
        .or_else(|| header.find(&format!("\"{key}\"")))?;
    let rest = &header[at + key.len() + 2..];
    let rest = rest.trim_start().strip_prefix(':')?.trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')')? + 1
    } else {
        rest.find([',', '}']).unwrap_or(rest.len())
    };
    Some(rest[..end].trim())
}
