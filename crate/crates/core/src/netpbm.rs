//! Binary PPM (P6) and PGM (P5) with maxval 255.

use crate::error::{Error, Result};
use crate::geom::{Image, Mask};

/// Encodes a 3-channel planar image with values in `[0,1]`.
pub fn encode_ppm(image: &Image) -> Result<Vec<u8>> {
    if image.channels != 3 {
        return Err(Error::Shape(format!("PPM needs 3 channels, got {}", image.channels)));
    }
    let (w, h) = (image.width, image.height);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * w * h);
    let plane = w * h;
    for i in 0..plane {
        for c in 0..3 {
            out.push(quantize(image.data[c * plane + i]));
        }
    }
    Ok(out)
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pgm(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    out.extend_from_slice(&mask.data);
    out
}

struct Header {
    width: usize,
    height: usize,
    offset: usize,
}

fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::Data(format!(
            "expected {} header",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Data("malformed netpbm header".into()))?;
    }
    if fields[2] != 255 {
        return Err(Error::Data(format!("unsupported maxval {}", fields[2])));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Data("malformed netpbm header".into()));
    }
    Ok(Header {
        width: fields[0],
        height: fields[1],
        offset: pos + 1,
    })
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let h = parse_header(bytes, b"P6")?;
    let plane = h.width * h.height;
    let body = &bytes[h.offset..];
    if body.len() != 3 * plane {
        return Err(Error::Data(format!(
            "PPM body has {} bytes, expected {}",
            body.len(),
            3 * plane
        )));
    }
    let mut data = vec![0.0f32; 3 * plane];
    for (i, px) in body.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * plane + i] = px[c] as f32 / 255.0;
        }
    }
    Image::new(3, h.height, h.width, data)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Mask> {
    let h = parse_header(bytes, b"P5")?;
    let body = &bytes[h.offset..];
    if body.len() != h.width * h.height {
        return Err(Error::Data(format!(
            "PGM body has {} bytes, expected {}",
            body.len(),
            h.width * h.height
        )));
    }
    Mask::new(h.height, h.width, body.to_vec())
}
