//! Minimal `.npy` (format version 1.0) reader and writer.
//!
//! Reads little-endian `<f4` / `<f8` arrays in C order and returns them as
//! `f64`. Always writes `<f8`. Header layout:
//!
//! ```text
//! "\x93NUMPY" | 0x01 0x00 | u16 LE header_len | dict literal, space padded, '\n'
//! ```
//!
//! with the full preamble padded to a multiple of 64 bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

/// Shape plus flattened C-order values.
#[derive(Clone, Debug, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl NpyArray {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::Contract(format!(
                "shape {shape:?} holds {n} values, got {}",
                values.len()
            )));
        }
        Ok(NpyArray { shape, values })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Dtype {
    F4,
    F8,
}

pub fn read_npy(path: impl AsRef<Path>) -> Result<NpyArray> {
    let mut r = BufReader::new(File::open(path)?);
    read_npy_from(&mut r)
}

pub fn read_npy_from<R: Read>(reader: &mut R) -> Result<NpyArray> {
    let mut pre = [0u8; 10];
    reader
        .read_exact(&mut pre)
        .map_err(|_| Error::Format("file shorter than the npy preamble".into()))?;
    if &pre[..6] != MAGIC {
        return Err(Error::Format("bad npy magic".into()));
    }
    if (pre[6], pre[7]) != (1, 0) {
        return Err(Error::UnsupportedLayout(format!(
            "npy version {}.{} (only 1.0 is read)",
            pre[6], pre[7]
        )));
    }
    let header_len = u16::from_le_bytes([pre[8], pre[9]]) as usize;
    let mut header = vec![0u8; header_len];
    reader
        .read_exact(&mut header)
        .map_err(|_| Error::Format("truncated npy header".into()))?;
    let header = std::str::from_utf8(&header)
        .map_err(|_| Error::Format("npy header is not ASCII".into()))?;
    let (dtype, shape) = parse_header(header)?;

    let n: usize = shape.iter().product();
    let width = match dtype {
        Dtype::F4 => 4,
        Dtype::F8 => 8,
    };
    let mut raw = vec![0u8; n * width];
    reader
        .read_exact(&mut raw)
        .map_err(|_| Error::Format(format!("npy payload shorter than {n} elements")))?;
    let values = match dtype {
        Dtype::F4 => raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect(),
        Dtype::F8 => raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect(),
    };
    Ok(NpyArray { shape, values })
}

fn parse_header(header: &str) -> Result<(Dtype, Vec<usize>)> {
    let body = header.trim();
    let body = body
        .strip_prefix('{')
        .and_then(|b| b.strip_suffix('}'))
        .ok_or_else(|| Error::Format("npy header is not a dict literal".into()))?;

    let descr = dict_value(body, "descr")?;
    let dtype = match descr.trim_matches(|c| c == '\'' || c == '"') {
        "<f4" => Dtype::F4,
        "<f8" => Dtype::F8,
        other => return Err(Error::UnsupportedLayout(format!("dtype {other}"))),
    };
    match dict_value(body, "fortran_order")? {
        "False" => {}
        "True" => return Err(Error::UnsupportedLayout("Fortran-order array".into())),
        other => return Err(Error::Format(format!("bad fortran_order value {other}"))),
    }
    let shape_src = dict_value(body, "shape")?;
    let inner = shape_src
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| Error::Format(format!("bad shape {shape_src}")))?;
    let shape = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad shape entry {s}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((dtype, shape))
}

/// Raw source text of the value stored under `key`.
fn dict_value<'a>(body: &'a str, key: &str) -> Result<&'a str> {
    let missing = || Error::Format(format!("npy header lacks `{key}`"));
    let start = ["'", "\""]
        .iter()
        .find_map(|q| body.find(&format!("{q}{key}{q}")).map(|i| i + key.len() + 2))
        .ok_or_else(missing)?;
    let rest = body[start..].trim_start();
    let rest = rest.strip_prefix(':').ok_or_else(missing)?.trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')').map(|i| i + 1)
    } else {
        rest.find(',').or(Some(rest.len()))
    }
    .ok_or_else(|| Error::Format(format!("unterminated value for `{key}`")))?;
    Ok(rest[..end].trim())
}

pub fn write_npy(path: impl AsRef<Path>, shape: &[usize], values: &[f64]) -> Result<()> {
    check_shape(shape, values)?;
    let mut w = BufWriter::new(File::create(path)?);
    write_npy_to(&mut w, shape, values)?;
    w.flush()?;
    Ok(())
}

fn check_shape(shape: &[usize], values: &[f64]) -> Result<()> {
    let n: usize = shape.iter().product();
    if n != values.len() {
        return Err(Error::Contract(format!(
            "shape {shape:?} holds {n} values, got {}",
            values.len()
        )));
    }
    Ok(())
}

pub fn write_npy_to<W: Write>(writer: &mut W, shape: &[usize], values: &[f64]) -> Result<()> {
    check_shape(shape, values)?;
    let shape_txt = match shape {
        [one] => format!("({one},)"),
        dims => format!(
            "({})",
            dims.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut dict = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': {shape_txt}, }}");
    // magic + version + length field, then dict and trailing newline
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.extend(std::iter::repeat_n(' ', pad));
    dict.push('\n');
    let header_len = u16::try_from(dict.len())
        .map_err(|_| Error::Contract("npy header longer than 65535 bytes".into()))?;

    writer.write_all(MAGIC)?;
    writer.write_all(&[1, 0])?;
    writer.write_all(&header_len.to_le_bytes())?;
    writer.write_all(dict.as_bytes())?;
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    writer.write_all(&buf)?;
    Ok(())
}
