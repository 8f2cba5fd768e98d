//! `HSICUBE1` and `HSILBL1` binary files.
//!
//! Cube: `HSICUBE1\n`, `<rows> <cols> <bands>\n`, then `rows·cols·bands`
//! little-endian `f32` values, band-sequential.
//! Labels: `HSILBL1\n`, `<rows> <cols>\n`, then `rows·cols` little-endian
//! `u16` values, row-major.

use std::fs;
use std::path::Path;

use super::{DataError, HsiCube, LabelRaster};

pub const CUBE_MAGIC: &[u8] = b"HSICUBE1\n";
pub const LABEL_MAGIC: &[u8] = b"HSILBL1\n";

/// Splits off one `\n`-terminated ASCII line.
pub(crate) fn take_line<'a>(buf: &'a [u8], what: &str) -> Result<(&'a str, &'a [u8]), DataError> {
    let end = buf
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| DataError::Header(format!("missing newline after {what}")))?;
    let line = std::str::from_utf8(&buf[..end])
        .map_err(|_| DataError::Header(format!("{what} is not ASCII")))?;
    Ok((line, &buf[end + 1..]))
}

pub(crate) fn parse_dims<const N: usize>(line: &str, what: &str) -> Result<[usize; N], DataError> {
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.len() != N {
        return Err(DataError::Header(format!(
            "{what} needs {N} fields, got `{line}`"
        )));
    }
    let mut out = [0usize; N];
    for (o, f) in out.iter_mut().zip(&fields) {
        let v: i64 = f
            .parse()
            .map_err(|_| DataError::Header(format!("bad {what} field `{f}`")))?;
        if v <= 0 {
            return Err(DataError::Dimensions(format!(
                "{what} dimensions must be positive, got `{line}`"
            )));
        }
        *o = v as usize;
    }
    Ok(out)
}

fn strip_magic<'a>(buf: &'a [u8], magic: &'static [u8]) -> Result<&'a [u8], DataError> {
    if buf.len() < magic.len() || &buf[..magic.len()] != magic {
        let found = String::from_utf8_lossy(&buf[..buf.len().min(magic.len())]).into_owned();
        return Err(DataError::Magic {
            expected: String::from_utf8_lossy(magic).trim_end().to_string(),
            found,
        });
    }
    Ok(&buf[magic.len()..])
}

fn check_payload(payload: &[u8], expected: usize) -> Result<(), DataError> {
    if payload.len() < expected {
        return Err(DataError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(DataError::TrailingBytes(payload.len() - expected));
    }
    Ok(())
}

pub fn decode_cube(buf: &[u8]) -> Result<HsiCube, DataError> {
    let rest = strip_magic(buf, CUBE_MAGIC)?;
    let (header, payload) = take_line(rest, "cube header")?;
    let [rows, cols, bands] = parse_dims::<3>(header, "cube header")?;
    let n = rows
        .checked_mul(cols)
        .and_then(|v| v.checked_mul(bands))
        .ok_or_else(|| DataError::Dimensions(format!("cube {rows}x{cols}x{bands} too large")))?;
    check_payload(payload, n * 4)?;
    let values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    HsiCube::new(rows, cols, bands, values)
}

/// Values are narrowed to `f32`.
pub fn encode_cube(cube: &HsiCube) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + cube.values().len() * 4);
    out.extend_from_slice(CUBE_MAGIC);
    out.extend_from_slice(format!("{} {} {}\n", cube.rows(), cube.cols(), cube.bands()).as_bytes());
    for &v in cube.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_labels(buf: &[u8]) -> Result<LabelRaster, DataError> {
    let rest = strip_magic(buf, LABEL_MAGIC)?;
    let (header, payload) = take_line(rest, "label header")?;
    let [rows, cols] = parse_dims::<2>(header, "label header")?;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| DataError::Dimensions(format!("raster {rows}x{cols} too large")))?;
    check_payload(payload, n * 2)?;
    let labels = payload
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .collect();
    LabelRaster::new(rows, cols, labels)
}

pub fn encode_labels(labels: &LabelRaster) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + labels.labels().len() * 2);
    out.extend_from_slice(LABEL_MAGIC);
    out.extend_from_slice(format!("{} {}\n", labels.rows(), labels.cols()).as_bytes());
    for &l in labels.labels() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

fn read(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    fs::write(path, bytes).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_cube(path: impl AsRef<Path>) -> Result<HsiCube, DataError> {
    decode_cube(&read(path.as_ref())?)
}

pub fn write_cube(path: impl AsRef<Path>, cube: &HsiCube) -> Result<(), DataError> {
    write(path.as_ref(), &encode_cube(cube))
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelRaster, DataError> {
    decode_labels(&read(path.as_ref())?)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &LabelRaster) -> Result<(), DataError> {
    write(path.as_ref(), &encode_labels(labels))
}
