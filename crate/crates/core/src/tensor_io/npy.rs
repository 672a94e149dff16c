//! NPY v1.0 container, restricted to little-endian float32 in C order.
//!
//! Layout: `\x93NUMPY`, version bytes `1 0`, a little-endian `u16` header
//! length, then an ASCII Python dict literal padded with spaces and a final
//! `\n` so that the payload starts on a 64-byte boundary.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::ActivationTensor;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 6] = *b"\x93NUMPY";
const ALIGN: usize = 64;
const PREAMBLE_LEN: usize = MAGIC.len() + 2 + 2;

pub fn read_tensor(path: impl AsRef<Path>) -> Result<ActivationTensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write_tensor(t: &ActivationTensor, path: impl AsRef<Path>) -> Result<()> {
    write_npy(t.shape(), t.data(), path)
}

/// Validates and writes a raw buffer; rejects non-finite values before
/// touching the destination.
pub fn write_npy(shape: &[usize], data: &[f32], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let count: usize = shape.iter().product();
    if count != data.len() {
        return Err(Error::InvalidTensor(format!(
            "shape {shape:?} holds {count} elements but data has {}",
            data.len()
        )));
    }
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidTensor(format!(
            "refusing to write non-finite value at flat index {pos}"
        )));
    }
    let bytes = encode(shape, data);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn encode(shape: &[usize], data: &[f32]) -> Vec<u8> {
    let header = header_text(shape);
    let mut out = Vec::with_capacity(header.len() + PREAMBLE_LEN + data.len() * 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn header_text(shape: &[usize]) -> String {
    let dims = match shape {
        [single] => format!("({single},)"),
        _ => {
            let parts: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            format!("({})", parts.join(", "))
        }
    };
    let mut header = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': {dims}, }}");
    // +1 for the terminating newline.
    let unpadded = PREAMBLE_LEN + header.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    header.extend(std::iter::repeat_n(' ', pad));
    header.push('\n');
    header
}

pub fn decode(bytes: &[u8]) -> Result<ActivationTensor> {
    if bytes.len() < PREAMBLE_LEN || bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("missing \\x93NUMPY magic".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(Error::Format(format!(
            "version {major}.{minor} not supported (expected 1.0)"
        )));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = PREAMBLE_LEN + header_len;
    if bytes.len() < data_start {
        return Err(Error::Format("truncated header".into()));
    }
    let header = std::str::from_utf8(&bytes[PREAMBLE_LEN..data_start])
        .map_err(|_| Error::Format("header is not ASCII".into()))?;
    let dict = HeaderDict::parse(header)?;

    if dict.descr != "<f4" {
        return Err(Error::UnsupportedDtype(dict.descr));
    }
    if dict.fortran_order {
        return Err(Error::Format("Fortran order not supported".into()));
    }
    let count: usize = dict.shape.iter().product();
    let payload = &bytes[data_start..];
    if payload.len() != count * 4 {
        return Err(Error::Format(format!(
            "payload has {} bytes, shape {:?} needs {}",
            payload.len(),
            dict.shape,
            count * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ActivationTensor::new(dict.shape, data)
}

#[derive(Debug)]
struct HeaderDict {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

impl HeaderDict {
    fn parse(text: &str) -> Result<Self> {
        let body = text.trim();
        let body = body
            .strip_prefix('{')
            .and_then(|b| b.strip_suffix('}'))
            .ok_or_else(|| Error::Format(format!("header is not a dict: {body:?}")))?;

        let mut descr = None;
        let mut fortran_order = None;
        let mut shape = None;

        let mut rest = body.trim_start();
        while !rest.is_empty() {
            let (key, after) = parse_quoted(rest)?;
            let after = after
                .trim_start()
                .strip_prefix(':')
                .ok_or_else(|| Error::Format(format!("expected ':' after key {key:?}")))?
                .trim_start();
            let after = match key.as_str() {
                "descr" => {
                    let (v, a) = parse_quoted(after)?;
                    descr = Some(v);
                    a
                }
                "fortran_order" => {
                    if let Some(a) = after.strip_prefix("False") {
                        fortran_order = Some(false);
                        a
                    } else if let Some(a) = after.strip_prefix("True") {
                        fortran_order = Some(true);
                        a
                    } else {
                        return Err(Error::Format("fortran_order is not a bool".into()));
                    }
                }
                "shape" => {
                    let (v, a) = parse_tuple(after)?;
                    shape = Some(v);
                    a
                }
                other => return Err(Error::Format(format!("unexpected header key {other:?}"))),
            };
            let after = after.trim_start();
            rest = after.strip_prefix(',').unwrap_or(after).trim_start();
        }

        match (descr, fortran_order, shape) {
            (Some(descr), Some(fortran_order), Some(shape)) => Ok(Self {
                descr,
                fortran_order,
                shape,
            }),
            _ => Err(Error::Format(
                "header must define descr, fortran_order and shape".into(),
            )),
        }
    }
}

fn parse_quoted(s: &str) -> Result<(String, &str)> {
    let quote = s
        .chars()
        .next()
        .filter(|c| *c == '\'' || *c == '"')
        .ok_or_else(|| Error::Format(format!("expected quoted string at {s:?}")))?;
    let inner = &s[1..];
    let end = inner
        .find(quote)
        .ok_or_else(|| Error::Format("unterminated string in header".into()))?;
    Ok((inner[..end].to_string(), &inner[end + 1..]))
}

fn parse_tuple(s: &str) -> Result<(Vec<usize>, &str)> {
    let inner = s
        .strip_prefix('(')
        .ok_or_else(|| Error::Format("shape is not a tuple".into()))?;
    let end = inner
        .find(')')
        .ok_or_else(|| Error::Format("unterminated shape tuple".into()))?;
    let dims = inner[..end]
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.trim_end_matches('L')
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad shape extent {p:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((dims, &inner[end + 1..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Writes an NPY container byte by byte, independent of `encode`.
    fn oracle_npy(descr: &str, shape: &str, payload: &[u8]) -> Vec<u8> {
        let mut dict =
            format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape}, }}");
        while (10 + dict.len() + 1) % 64 != 0 {
            dict.push(' ');
        }
        dict.push('\n');
        let mut out = b"\x93NUMPY\x01\x00".to_vec();
        out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
        out.extend_from_slice(dict.as_bytes());
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn reads_oracle_file() {
        let mut payload = Vec::new();
        payload.extend_from_slice(&1.0f32.to_le_bytes());
        payload.extend_from_slice(&2.0f32.to_le_bytes());
        let t = decode(&oracle_npy("<f4", "(2,)", &payload)).unwrap();
        assert_eq!(t.shape(), &[2]);
        assert_eq!(t.data(), &[1.0, 2.0]);
    }

    #[test]
    fn rejects_big_endian_f64() {
        let payload: Vec<u8> = [1.0f64, 2.0].iter().flat_map(|v| v.to_be_bytes()).collect();
        let err = decode(&oracle_npy(">f8", "(2,)", &payload)).unwrap_err();
        assert!(
            matches!(err, Error::UnsupportedDtype(ref d) if d == ">f8"),
            "{err}"
        );
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        assert!(matches!(decode(b"NOTNPY0000"), Err(Error::Format(_))));
        let mut bytes = encode(&[1], &[0.0]);
        bytes[6] = 2;
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn single_element_layout() {
        let bytes = encode(&[1, 1, 1], &[0.5]);
        assert_eq!(&bytes[..8], b"\x93NUMPY\x01\x00");
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        let data_start = 10 + header_len;
        assert_eq!(data_start % 64, 0);
        // The dict literal is 63 characters, so one 64-byte block is not enough.
        assert_eq!(data_start, 128);
        assert_eq!(bytes[data_start - 1], b'\n');
        let header = std::str::from_utf8(&bytes[10..data_start]).unwrap();
        assert!(
            header.starts_with("{'descr': '<f4', 'fortran_order': False, 'shape': (1, 1, 1), }")
        );
        assert!(header[63..header.len() - 1].bytes().all(|b| b == b' '));
        assert_eq!(&bytes[data_start..], &0.5f32.to_le_bytes());
    }

    #[test]
    fn payload_word_count() {
        let data = vec![0.25f32; 64 * 8 * 8];
        let bytes = encode(&[64, 8, 8], &data);
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((bytes.len() - 10 - header_len) / 4, 4096);
    }

    #[test]
    fn write_rejects_nan_before_creating_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.npy");
        let err = write_npy(&[2], &[1.0, f32::NAN], &path).unwrap_err();
        assert!(matches!(err, Error::InvalidTensor(_)));
        assert!(!path.exists());
    }

    #[test]
    fn write_error_carries_path() {
        let err = write_tensor(
            &ActivationTensor::new(vec![1], vec![1.0]).unwrap(),
            "/nonexistent-dir/x.npy",
        )
        .unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.npy"));
    }
}
