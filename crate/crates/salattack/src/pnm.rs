//! Binary PGM (`P5`) and PPM (`P6`) images with 8-bit samples.

use std::path::Path;

use salattack_core::Tensor;

use crate::error::{read, write, Error, Result};

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn plane_dims(t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [h, w] | [1, h, w] => Ok((*h, *w)),
        s => Err(Error::Invalid(format!("expected a single-channel map, got shape {s:?}"))),
    }
}

/// A single-channel map as PGM, min-max normalized to the full grey range.
/// A constant map is written black.
pub fn encode_pgm(map: &Tensor) -> Result<Vec<u8>> {
    let (h, w) = plane_dims(map)?;
    let (lo, hi) = (map.min(), map.max());
    let span = hi - lo;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(map.data().iter().map(|&v| {
        if span > 0.0 {
            to_byte((v - lo) / span)
        } else {
            0
        }
    }));
    Ok(out)
}

/// A `3×H×W` image in `[0, 1]` as PPM; out-of-range values are clamped.
pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = image.dims3()?;
    if c != 3 {
        return Err(Error::Invalid(format!("PPM needs 3 channels, got {c}")));
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for i in 0..h * w {
        for k in 0..3 {
            out.push(to_byte(image.channel(k)[i]));
        }
    }
    Ok(out)
}

fn parse_header<'a>(bytes: &'a [u8], magic: &str, origin: &Path) -> Result<(usize, usize, &'a [u8])> {
    let bad = |r: &str| Error::format(origin, r);
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
    }
    if tokens[0] != magic {
        return Err(bad(&format!("expected {magic} magic")));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("malformed header"));
    let (w, h, max) = (num(tokens[1])?, num(tokens[2])?, num(tokens[3])?);
    if max != 255 {
        return Err(bad("only 8-bit images are supported"));
    }
    // exactly one whitespace byte separates the header from the raster
    Ok((h, w, bytes.get(pos + 1..).unwrap_or(&[])))
}

/// Decodes a PGM into a `1×H×W` map with values in `[0, 1]`.
pub fn decode_pgm(bytes: &[u8], origin: &Path) -> Result<Tensor> {
    let (h, w, raster) = parse_header(bytes, "P5", origin)?;
    if raster.len() != h * w {
        return Err(Error::format(origin, "raster size does not match header"));
    }
    Ok(Tensor::chw(1, h, w, raster.iter().map(|&b| b as f64 / 255.0).collect())?)
}

/// Decodes a PPM into a `3×H×W` image with values in `[0, 1]`.
pub fn decode_ppm(bytes: &[u8], origin: &Path) -> Result<Tensor> {
    let (h, w, raster) = parse_header(bytes, "P6", origin)?;
    if raster.len() != 3 * h * w {
        return Err(Error::format(origin, "raster size does not match header"));
    }
    let mut data = vec![0.0; 3 * h * w];
    for (i, px) in raster.chunks_exact(3).enumerate() {
        for k in 0..3 {
            data[k * h * w + i] = px[k] as f64 / 255.0;
        }
    }
    Ok(Tensor::chw(3, h, w, data)?)
}

pub fn save_pgm(path: &Path, map: &Tensor) -> Result<()> {
    write(path, &encode_pgm(map)?)
}

pub fn save_ppm(path: &Path, image: &Tensor) -> Result<()> {
    write(path, &encode_ppm(image)?)
}

pub fn load_pgm(path: &Path) -> Result<Tensor> {
    decode_pgm(&read(path)?, path)
}

pub fn load_ppm(path: &Path) -> Result<Tensor> {
    decode_ppm(&read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_is_min_max_normalized() {
        let m = Tensor::chw(1, 1, 3, vec![-1.0, 0.0, 1.0]).unwrap();
        let bytes = encode_pgm(&m).unwrap();
        assert_eq!(&bytes[..], b"P5\n3 1\n255\n\x00\x80\xff");
        let back = decode_pgm(&bytes, Path::new("x")).unwrap();
        assert_eq!(back.data(), &[0.0, 128.0 / 255.0, 1.0]);
    }

    #[test]
    fn ppm_round_trips_quantized_values() {
        let img = Tensor::from_fn(&[3, 2, 4], |i| (i * 10) as f64 / 255.0);
        let back = decode_ppm(&encode_ppm(&img).unwrap(), Path::new("x")).unwrap();
        assert!(back.sub(&img).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn header_comments_are_skipped() {
        let back = decode_pgm(b"P5 # c\n2 1\n255\n\x00\xff", Path::new("x")).unwrap();
        assert_eq!(back.data(), &[0.0, 1.0]);
    }
}
