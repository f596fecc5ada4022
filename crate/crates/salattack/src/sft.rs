//! The `SFT1` raw tensor format: an ASCII header line
//! `SFT1 <ndims> <d0> ... <dn>\n` followed by little-endian `f64` values in
//! row-major order.

use std::path::Path;

use salattack_core::Tensor;

use crate::error::{read, write, Error, Result};

const MAGIC: &str = "SFT1";

pub fn encode(t: &Tensor) -> Vec<u8> {
    let mut header = format!("{MAGIC} {}", t.shape().len());
    for d in t.shape() {
        header.push_str(&format!(" {d}"));
    }
    header.push('\n');
    let mut out = header.into_bytes();
    out.reserve(t.len() * 8);
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses an `SFT1` buffer; `origin` only labels errors.
pub fn decode(bytes: &[u8], origin: &Path) -> Result<Tensor> {
    let bad = |reason: String| Error::format(origin, reason);
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not ASCII".into()))?;
    let mut fields = header.split(' ');
    if fields.next() != Some(MAGIC) {
        return Err(bad(format!("expected {MAGIC} magic")));
    }
    let parse = |s: Option<&str>| -> Result<usize> {
        s.and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("malformed header {header:?}")))
    };
    let ndims = parse(fields.next())?;
    let shape = (0..ndims).map(|_| parse(fields.next())).collect::<Result<Vec<_>>>()?;
    if fields.next().is_some() {
        return Err(bad(format!("header {header:?} has more dims than declared")));
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad("shape overflows".into()))?;
    let body = &bytes[nl + 1..];
    if body.len() != count * 8 {
        return Err(bad(format!("expected {} data bytes, found {}", count * 8, body.len())));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Tensor::new(shape, data)?)
}

pub fn save(path: &Path, t: &Tensor) -> Result<()> {
    write(path, &encode(t))
}

pub fn load(path: &Path) -> Result<Tensor> {
    decode(&read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(vec![2, 1, 3], vec![1.0, -2.5, 0.0, 4.0, 5.0, f64::MIN_POSITIVE]).unwrap();
        let bytes = encode(&t);
        assert!(bytes.starts_with(b"SFT1 3 2 1 3\n"));
        assert_eq!(bytes.len(), 13 + 48);
        assert_eq!(&bytes[13..21], &1.0f64.to_le_bytes());
        assert_eq!(decode(&bytes, Path::new("x")).unwrap(), t);
    }

    #[test]
    fn rejects_truncated_and_foreign() {
        let t = Tensor::zeros(&[4]);
        let mut bytes = encode(&t);
        bytes.pop();
        assert!(decode(&bytes, Path::new("x")).is_err());
        assert!(decode(b"SFT2 1 1\n\0\0\0\0\0\0\0\0", Path::new("x")).is_err());
        assert!(decode(b"SFT1 2 1\n", Path::new("x")).is_err());
    }
}
