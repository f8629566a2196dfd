//! Fixture file formats: binary PPM (P6, maxval 255) for RGB, binary PGM
//! (P5, maxval 65535) for instance masks and the `DPT1` raw depth format.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed {kind} data: {reason}")]
    Format { kind: &'static str, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ImageIoError + '_ {
    move |source| ImageIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(kind: &'static str, reason: impl Into<String>) -> ImageIoError {
    ImageIoError::Format {
        kind,
        reason: reason.into(),
    }
}

pub const DEPTH_MAGIC: &[u8; 4] = b"DPT1";

pub fn encode_ppm(width: u32, height: u32, rgb: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

pub fn encode_pgm16(width: u32, height: u32, labels: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(labels.len() * 2);
    for &l in labels {
        // netpbm stores 16-bit samples most significant byte first
        out.extend_from_slice(&l.to_be_bytes());
    }
    out
}

pub fn encode_depth(width: u32, height: u32, depth: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + depth.len() * 4);
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &d in depth {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out
}

/// Parses a netpbm header, returning `(width, height, maxval, body offset)`.
fn parse_netpbm_header(
    data: &[u8],
    magic: &[u8; 2],
    kind: &'static str,
) -> Result<(u32, u32, u32, usize), ImageIoError> {
    if data.len() < 2 || &data[..2] != magic {
        return Err(format_err(kind, "bad magic"));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // whitespace and comments between tokens
        loop {
            match data.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while data.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(format_err(kind, "truncated header")),
            }
        }
        let start = pos;
        while data.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let token = std::str::from_utf8(&data[start..pos]).unwrap_or("");
        *field = token
            .parse()
            .map_err(|_| format_err(kind, format!("bad header token at byte {start}")))?;
    }
    // exactly one whitespace byte separates the header from the raster
    match data.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(format_err(kind, "missing header terminator")),
    }
    Ok((fields[0], fields[1], fields[2], pos))
}

pub fn decode_ppm(data: &[u8]) -> Result<(u32, u32, Vec<u8>), ImageIoError> {
    let (w, h, maxval, off) = parse_netpbm_header(data, b"P6", "ppm")?;
    if maxval != 255 {
        return Err(format_err("ppm", format!("unsupported maxval {maxval}")));
    }
    let n = w as usize * h as usize * 3;
    if data.len() - off != n {
        return Err(format_err(
            "ppm",
            format!("expected {n} raster bytes, found {}", data.len() - off),
        ));
    }
    Ok((w, h, data[off..].to_vec()))
}

pub fn decode_pgm16(data: &[u8]) -> Result<(u32, u32, Vec<u16>), ImageIoError> {
    let (w, h, maxval, off) = parse_netpbm_header(data, b"P5", "pgm")?;
    if maxval != 65535 {
        return Err(format_err("pgm", format!("unsupported maxval {maxval}")));
    }
    let n = w as usize * h as usize;
    let body = &data[off..];
    if body.len() != n * 2 {
        return Err(format_err(
            "pgm",
            format!("expected {} raster bytes, found {}", n * 2, body.len()),
        ));
    }
    Ok((
        w,
        h,
        body.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect(),
    ))
}

pub fn decode_depth(data: &[u8]) -> Result<(u32, u32, Vec<f32>), ImageIoError> {
    if data.len() < 16 || &data[..4] != DEPTH_MAGIC {
        return Err(format_err("depth", "bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(data[i..i + 4].try_into().unwrap());
    let (w, h, reserved) = (word(4), word(8), word(12));
    if reserved != 0 {
        return Err(format_err("depth", "reserved header word is not zero"));
    }
    let n = w as usize * h as usize;
    if data.len() - 16 != n * 4 {
        return Err(format_err(
            "depth",
            format!("expected {} body bytes, found {}", n * 4, data.len() - 16),
        ));
    }
    Ok((
        w,
        h,
        data[16..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    ))
}

pub fn write_ppm(path: &Path, width: u32, height: u32, rgb: &[u8]) -> Result<(), ImageIoError> {
    fs::write(path, encode_ppm(width, height, rgb)).map_err(io_err(path))
}

pub fn read_ppm(path: &Path) -> Result<(u32, u32, Vec<u8>), ImageIoError> {
    decode_ppm(&fs::read(path).map_err(io_err(path))?)
}

pub fn write_pgm16(path: &Path, width: u32, height: u32, labels: &[u16]) -> Result<(), ImageIoError> {
    fs::write(path, encode_pgm16(width, height, labels)).map_err(io_err(path))
}

pub fn read_pgm16(path: &Path) -> Result<(u32, u32, Vec<u16>), ImageIoError> {
    decode_pgm16(&fs::read(path).map_err(io_err(path))?)
}

pub fn write_depth(path: &Path, width: u32, height: u32, depth: &[f32]) -> Result<(), ImageIoError> {
    fs::write(path, encode_depth(width, height, depth)).map_err(io_err(path))
}

pub fn read_depth(path: &Path) -> Result<(u32, u32, Vec<f32>), ImageIoError> {
    decode_depth(&fs::read(path).map_err(io_err(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_header_with_comment() {
        let mut data = b"P6\n# made by hand\n2 1\n255\n".to_vec();
        data.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let (w, h, px) = decode_ppm(&data).unwrap();
        assert_eq!((w, h), (2, 1));
        assert_eq!(px, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn ppm_rejects_short_raster() {
        let mut data = encode_ppm(2, 2, &[0; 12]);
        data.pop();
        assert!(matches!(decode_ppm(&data), Err(ImageIoError::Format { .. })));
    }

    #[test]
    fn pgm16_is_big_endian_on_disk() {
        let data = encode_pgm16(2, 1, &[0x0102, 7]);
        assert_eq!(&data[data.len() - 4..], &[1, 2, 0, 7]);
        assert_eq!(decode_pgm16(&data).unwrap().2, vec![0x0102, 7]);
    }

    #[test]
    fn depth_header_layout() {
        let data = encode_depth(3, 1, &[1.0, 2.5, 10.0]);
        assert_eq!(&data[..4], b"DPT1");
        assert_eq!(&data[4..8], &3u32.to_le_bytes());
        assert_eq!(&data[12..16], &[0, 0, 0, 0]);
        assert_eq!(decode_depth(&data).unwrap().2, vec![1.0, 2.5, 10.0]);
        let mut bad = data.clone();
        bad[12] = 1;
        assert!(decode_depth(&bad).is_err());
    }
}
