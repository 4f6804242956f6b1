//! Grayscale Portable Float Map ("Pf") reading and writing.
//!
//! Files are written little-endian (negative scale field) with scanlines
//! stored bottom-to-top as the format requires, so a write followed by a read
//! reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

/// Header bytes for a little-endian grayscale map.
pub fn pfm_header(width: usize, height: usize) -> String {
    format!("Pf\n{width} {height}\n-1.0\n")
}

/// Encodes a raster as a complete PFM byte stream.
pub fn encode_pfm(width: usize, height: usize, data: &[f32]) -> Vec<u8> {
    let header = pfm_header(width, height);
    let mut out = Vec::with_capacity(header.len() + data.len() * 4);
    out.extend_from_slice(header.as_bytes());
    for y in (0..height).rev() {
        for v in &data[y * width..(y + 1) * width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_float_map(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pfm(img.width(), img.height(), img.data());
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_float_map(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let (w, h, data) = decode_pfm(&mut reader).map_err(|e| match e {
        DecodeError::Io(e) => Error::io(path, e),
        DecodeError::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        DecodeError::Eof => Error::Format(format!("{}: empty file", path.display())),
    })?;
    finite_image(w, h, data)
}

/// Reads every PFM plane stored back-to-back in one file.
pub fn read_float_map_planes(path: impl AsRef<Path>) -> Result<Vec<Image>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut planes = Vec::new();
    loop {
        match decode_pfm(&mut reader) {
            Ok((w, h, data)) => planes.push(finite_image(w, h, data)?),
            Err(DecodeError::Eof) => break,
            Err(DecodeError::Io(e)) => return Err(Error::io(path, e)),
            Err(DecodeError::Format(m)) => {
                return Err(Error::Format(format!("{} plane {}: {m}", path.display(), planes.len())))
            }
        }
    }
    Ok(planes)
}

pub fn save_float_map_planes(planes: &[Image], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in planes {
        w.write_all(&encode_pfm(p.width(), p.height(), p.data())).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn finite_image(w: usize, h: usize, data: Vec<f32>) -> Result<Image> {
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::validation(format!("non-finite value at x={}, y={}", i % w, i / w)));
    }
    Image::new(w, h, data)
}

enum DecodeError {
    Io(std::io::Error),
    Format(String),
    /// Clean end of input before any header byte.
    Eof,
}

impl From<std::io::Error> for DecodeError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            DecodeError::Format("truncated data".into())
        } else {
            DecodeError::Io(e)
        }
    }
}

fn read_byte(r: &mut impl Read) -> Result<Option<u8>, DecodeError> {
    let mut b = [0u8; 1];
    match r.read(&mut b)? {
        0 => Ok(None),
        _ => Ok(Some(b[0])),
    }
}

/// Reads one whitespace-delimited token and consumes the single delimiter
/// following it.
fn read_token(r: &mut impl Read, first: bool) -> Result<String, DecodeError> {
    let mut tok = Vec::new();
    loop {
        match read_byte(r)? {
            None if tok.is_empty() && first => return Err(DecodeError::Eof),
            None => return Err(DecodeError::Format("truncated header".into())),
            Some(b) if b.is_ascii_whitespace() => {
                if !tok.is_empty() {
                    break;
                }
            }
            Some(b) => {
                tok.push(b);
                if tok.len() > 32 {
                    return Err(DecodeError::Format("header token too long".into()));
                }
            }
        }
    }
    String::from_utf8(tok).map_err(|_| DecodeError::Format("non-ASCII header".into()))
}

fn decode_pfm(r: &mut impl Read) -> Result<(usize, usize, Vec<f32>), DecodeError> {
    let magic = read_token(r, true)?;
    match magic.as_str() {
        "Pf" => {}
        "PF" => return Err(DecodeError::Format("color PFM (PF) is not supported".into())),
        m => return Err(DecodeError::Format(format!("bad magic {m:?}"))),
    }
    let parse_dim = |s: String| -> Result<usize, DecodeError> {
        s.parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(|| DecodeError::Format(format!("bad dimension {s:?}")))
    };
    let width = parse_dim(read_token(r, false)?)?;
    let height = parse_dim(read_token(r, false)?)?;
    let scale_tok = read_token(r, false)?;
    let scale: f64 = scale_tok.parse().map_err(|_| DecodeError::Format(format!("bad scale {scale_tok:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(DecodeError::Format(format!("bad scale {scale_tok:?}")));
    }
    let little = scale < 0.0;
    let n = width
        .checked_mul(height)
        .filter(|n| *n <= 1 << 30)
        .ok_or_else(|| DecodeError::Format("dimensions too large".into()))?;
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw)?;
    let mut data = vec![0f32; n];
    for (row_in_file, chunk) in raw.chunks_exact(width * 4).enumerate() {
        let y = height - 1 - row_in_file;
        for (x, b) in chunk.chunks_exact(4).enumerate() {
            let b = [b[0], b[1], b[2], b[3]];
            data[y * width + x] = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        }
    }
    Ok((width, height, data))
}
