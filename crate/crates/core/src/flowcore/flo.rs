use std::path::Path;

use super::FlowField;
use crate::error::{Error, Result};

/// Tag at the start of every Middlebury `.flo` file ("PIEH" as bytes).
pub const FLO_MAGIC: f32 = 202021.25;

const HEADER_LEN: usize = 12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FloError {
    #[error("bad .flo magic tag {0}")]
    BadMagic(f32),
    #[error("truncated .flo data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid .flo dimensions {width}x{height}")]
    BadDimensions { width: i32, height: i32 },
    #[error("non-finite value in .flo payload")]
    NonFinite,
}

/// Serialises a field into the `.flo` byte layout: magic, i32 width, i32
/// height, then interleaved little-endian f32 `(u, v)` pairs row by row.
pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let (h, w) = flow.size();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * h * w);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.at(y, x);
            out.extend_from_slice(&(u as f32).to_le_bytes());
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField, FloError> {
    if bytes.len() < HEADER_LEN {
        return Err(FloError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let word = |i: usize| -> [u8; 4] { bytes[i..i + 4].try_into().unwrap() };
    let magic = f32::from_le_bytes(word(0));
    if magic != FLO_MAGIC {
        return Err(FloError::BadMagic(magic));
    }
    let width = i32::from_le_bytes(word(4));
    let height = i32::from_le_bytes(word(8));
    if width <= 0 || height <= 0 || width > 1 << 15 || height > 1 << 15 {
        return Err(FloError::BadDimensions { width, height });
    }
    let (w, h) = (width as usize, height as usize);
    let expected = HEADER_LEN + 8 * w * h;
    if bytes.len() < expected {
        return Err(FloError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let n = w * h;
    let mut data = vec![0.0; 2 * n];
    for i in 0..n {
        let off = HEADER_LEN + 8 * i;
        data[i] = f32::from_le_bytes(word(off)) as f64;
        data[n + i] = f32::from_le_bytes(word(off + 4)) as f64;
    }
    FlowField::new(h, w, data).map_err(|_| FloError::NonFinite)
}

pub fn write_flow_file(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_flo(flow)).map_err(|e| Error::io(path, e))
}

pub fn read_flow_file(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_flo(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn magic_spells_pieh() {
        assert_eq!(&FLO_MAGIC.to_le_bytes(), b"PIEH");
    }

    #[test]
    fn zero_field_is_header_then_zeros() {
        let bytes = encode_flo(&FlowField::zeros(6, 8));
        assert_eq!(bytes.len(), 12 + 6 * 8 * 8);
        assert_eq!(&bytes[..4], b"PIEH");
        assert_eq!(&bytes[4..8], &8i32.to_le_bytes());
        assert_eq!(&bytes[8..12], &6i32.to_le_bytes());
        assert!(bytes[12..].iter().all(|&b| b == 0));
    }

    #[test]
    fn wrong_magic_and_truncation_are_distinct_errors() {
        let mut bytes = encode_flo(&FlowField::uniform(2, 3, 1.0, -1.0));
        let truncated = &bytes[..bytes.len() - 1];
        assert!(matches!(decode_flo(truncated), Err(FloError::Truncated { .. })));
        bytes[0] = b'X';
        assert!(matches!(decode_flo(&bytes), Err(FloError::BadMagic(_))));
        assert!(matches!(decode_flo(&bytes[..5]), Err(FloError::Truncated { .. })));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.flo");
        let flow = FlowField::from_fn(6, 8, |x, y| (x as f64 * 0.25, y as f64 - 2.5));
        write_flow_file(&path, &flow).unwrap();
        assert_eq!(read_flow_file(&path).unwrap(), flow);
        assert!(read_flow_file(dir.path().join("missing.flo")).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_is_identity_at_f32_precision(
            h in 1usize..10, w in 1usize..10,
            seed in proptest::collection::vec(-500.0f32..500.0, 200)
        ) {
            let flow = FlowField::from_fn(h, w, |x, y| {
                let i = (y * w + x) % 100;
                (seed[2 * i] as f64, seed[2 * i + 1] as f64)
            });
            let back = decode_flo(&encode_flo(&flow)).unwrap();
            prop_assert_eq!(back, flow);
        }
    }
}
