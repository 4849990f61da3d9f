//! `SCT1` binary tensor files.
//!
//! Layout: the ASCII magic `SCT1`, three little-endian `u32` dimensions
//! `(C, H, W)`, then `C·H·W` little-endian IEEE-754 `f32` values in
//! row-major `(c, h, w)` order. Single-channel maps are stored with `C = 1`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{SoftMap, Tensor3};

pub const MAGIC: &[u8; 4] = b"SCT1";
const HEADER_LEN: usize = 16;

pub fn encode(t: &Tensor3) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * t.data().len());
    out.extend_from_slice(MAGIC);
    for d in [t.channels(), t.height(), t.width()] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Tensor3, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("{} bytes is shorter than the header", bytes.len()));
    }
    if &bytes[..4] != MAGIC {
        return Err("bad magic".into());
    }
    let dim = |i: usize| {
        let b = &bytes[4 + 4 * i..8 + 4 * i];
        u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize
    };
    let (c, h, w) = (dim(0), dim(1), dim(2));
    let n = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or("dimension overflow")?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 4 * n {
        return Err(format!(
            "payload has {} bytes, expected {} for {c}x{h}x{w}",
            body.len(),
            4 * n
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    Tensor3::from_vec(c, h, w, data).map_err(|e| e.to_string())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor3> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|detail| Error::Format {
        path: path.to_path_buf(),
        detail,
    })
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor3) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

/// Reads a single-channel file as a map.
pub fn read_map(path: impl AsRef<Path>) -> Result<SoftMap> {
    let path = path.as_ref();
    let t = read_tensor(path)?;
    if t.channels() != 1 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!("expected 1 channel, found {}", t.channels()),
        });
    }
    Ok(t.channel_map(0))
}

pub fn write_map(path: impl AsRef<Path>, m: &SoftMap) -> Result<()> {
    write_tensor(path, &m.to_tensor())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_little_endian() {
        let t = Tensor3::from_vec(1, 1, 2, vec![1.0, -2.5]).unwrap();
        let bytes = encode(&t);
        assert_eq!(&bytes[..4], b"SCT1");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[2, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[20..24], &(-2.5f32).to_le_bytes());
    }

    #[test]
    fn malformed_inputs() {
        assert!(decode(b"SCT").is_err());
        assert!(decode(b"XXXX\x01\0\0\0\x01\0\0\0\x01\0\0\0\0\0\0\0").is_err());
        assert!(decode(b"SCT1\x01\0\0\0\x01\0\0\0\x02\0\0\0\0\0\0\0").is_err());
        let mut nan = b"SCT1\x01\0\0\0\x01\0\0\0\x01\0\0\0".to_vec();
        nan.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode(&nan).is_err());
    }

    proptest! {
        #[test]
        fn f32_representable_values_survive(
            c in 1usize..4, h in 1usize..6, w in 1usize..6,
            seed in proptest::collection::vec(-1e6f32..1e6, 120)
        ) {
            let t = Tensor3::from_fn(c, h, w, |ci, y, x| f64::from(seed[(ci * 36 + y * 6 + x) % 120]));
            prop_assert_eq!(decode(&encode(&t)).unwrap(), t);
        }
    }
}
