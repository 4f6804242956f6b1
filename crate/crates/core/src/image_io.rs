//! Loading and saving images, z-stacks and label masks.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use ::image::{DynamicImage, ImageError};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::par;

pub use crate::pfm::{read_float_map, save_float_map};

const RGB_LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Ordered, co-registered slices of one specimen.
#[derive(Clone, Debug, PartialEq)]
pub struct ZStack {
    slices: Vec<Image>,
    source_ids: Vec<String>,
}

impl ZStack {
    pub fn new(slices: Vec<Image>, source_ids: Vec<String>) -> Result<Self> {
        let first = slices.first().ok_or(Error::EmptyStack)?;
        if source_ids.len() != slices.len() {
            return Err(Error::Stack(format!("{} slices but {} source ids", slices.len(), source_ids.len())));
        }
        if let Some((z, s)) = slices.iter().enumerate().find(|(_, s)| !s.same_dims(first)) {
            return Err(Error::Stack(format!(
                "slice {z} ({}) is {}x{}, expected {}x{}",
                source_ids[z],
                s.width(),
                s.height(),
                first.width(),
                first.height()
            )));
        }
        Ok(Self { slices, source_ids })
    }

    /// Stack with generated ids `z000`, `z001`, ...
    pub fn from_slices(slices: Vec<Image>) -> Result<Self> {
        let ids = (0..slices.len()).map(|z| format!("z{z:03}")).collect();
        Self::new(slices, ids)
    }

    pub fn z_count(&self) -> usize {
        self.slices.len()
    }

    pub fn slices(&self) -> &[Image] {
        &self.slices
    }

    pub fn slice(&self, z: usize) -> &Image {
        &self.slices[z]
    }

    pub fn source_ids(&self) -> &[String] {
        &self.source_ids
    }

    pub fn dims(&self) -> (usize, usize) {
        self.slices[0].dims()
    }

    /// Sub-stack holding the given slices in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<ZStack> {
        if let Some(&z) = indices.iter().find(|&&z| z >= self.z_count()) {
            return Err(Error::param(format!("slice index {z} out of range for a stack of {}", self.z_count())));
        }
        ZStack::new(
            indices.iter().map(|&z| self.slices[z].clone()).collect(),
            indices.iter().map(|&z| self.source_ids[z].clone()).collect(),
        )
    }

    pub fn into_slices(self) -> Vec<Image> {
        self.slices
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub z: usize,
    pub path: PathBuf,
}

/// JSON array of `{"z": int, "path": string}`; z indices are unique and
/// contiguous from 0. Relative paths resolve against `base_dir`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StackManifest {
    entries: Vec<ManifestEntry>,
    base_dir: PathBuf,
}

impl StackManifest {
    pub fn new(mut entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        entries.sort_by_key(|e| e.z);
        for (i, e) in entries.iter().enumerate() {
            if e.z != i {
                return Err(Error::validation(format!(
                    "manifest z indices must be unique and contiguous from 0; found z={} at position {i}",
                    e.z
                )));
            }
        }
        Ok(Self { entries, base_dir: base_dir.into() })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<ManifestEntry> =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(entries, base)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.entries).expect("manifest serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn resolved_paths(&self) -> Vec<PathBuf> {
        self.entries
            .iter()
            .map(|e| if e.path.is_absolute() { e.path.clone() } else { self.base_dir.join(&e.path) })
            .collect()
    }

    /// Manifest over the image files of a directory in lexicographic order.
    pub fn from_directory(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut files = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let p = entry.path();
            if p.is_file() && is_supported_image(&p) {
                files.push(PathBuf::from(entry.file_name()));
            }
        }
        files.sort();
        let entries = files.into_iter().enumerate().map(|(z, path)| ManifestEntry { z, path }).collect();
        Self::new(entries, dir)
    }
}

fn is_supported_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "tif" | "tiff"))
        .unwrap_or(false)
}

/// Where a stack comes from.
#[derive(Clone, Debug)]
pub enum StackSource {
    Manifest(StackManifest),
    Directory(PathBuf),
}

impl StackSource {
    /// A directory path, or a `.json` manifest file.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.is_dir() {
            Ok(StackSource::Directory(path.to_path_buf()))
        } else {
            StackManifest::read(path).map(StackSource::Manifest)
        }
    }
}

pub fn load_stack(source: &StackSource) -> Result<ZStack> {
    let manifest = match source {
        StackSource::Manifest(m) => m.clone(),
        StackSource::Directory(d) => StackManifest::from_directory(d)?,
    };
    let paths = manifest.resolved_paths();
    if paths.is_empty() {
        return Err(Error::EmptyStack);
    }
    let slices = par::map_slice(&paths, |p| load_image(p)).into_iter().collect::<Result<Vec<_>>>()?;
    let ids = paths.iter().map(|p| p.display().to_string()).collect();
    ZStack::new(slices, ids)
}

fn image_error(path: &Path, e: ImageError) -> Error {
    match e {
        ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Loads an 8- or 16-bit PNG/TIFF as luminance in `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = ::image::ImageReader::new(std::io::BufReader::new(file))
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let dynimg = reader.decode().map_err(|e| image_error(path, e))?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let data = luminance(&dynimg).ok_or_else(|| {
        Error::Format(format!(
            "{}: unsupported pixel format {:?}; expected 8- or 16-bit",
            path.display(),
            dynimg.color()
        ))
    })?;
    Image::new(w, h, data).map_err(|e| match e {
        Error::Validation(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn luminance(img: &DynamicImage) -> Option<Vec<f32>> {
    fn gray<T: Copy + Into<f64>>(px: &[T], channels: usize, max: f64) -> Vec<f32> {
        px.chunks_exact(channels).map(|c| (c[0].into() / max) as f32).collect()
    }
    fn rgb<T: Copy + Into<f64>>(px: &[T], channels: usize, max: f64) -> Vec<f32> {
        px.chunks_exact(channels)
            .map(|c| {
                let l = RGB_LUMA[0] * c[0].into() + RGB_LUMA[1] * c[1].into() + RGB_LUMA[2] * c[2].into();
                ((l / max) as f32).clamp(0.0, 1.0)
            })
            .collect()
    }
    const M8: f64 = u8::MAX as f64;
    const M16: f64 = u16::MAX as f64;
    Some(match img {
        DynamicImage::ImageLuma8(b) => gray(b.as_raw(), 1, M8),
        DynamicImage::ImageLumaA8(b) => gray(b.as_raw(), 2, M8),
        DynamicImage::ImageRgb8(b) => rgb(b.as_raw(), 3, M8),
        DynamicImage::ImageRgba8(b) => rgb(b.as_raw(), 4, M8),
        DynamicImage::ImageLuma16(b) => gray(b.as_raw(), 1, M16),
        DynamicImage::ImageLumaA16(b) => gray(b.as_raw(), 2, M16),
        DynamicImage::ImageRgb16(b) => rgb(b.as_raw(), 3, M16),
        DynamicImage::ImageRgba16(b) => rgb(b.as_raw(), 4, M16),
        _ => return None,
    })
}

/// Quantizes `[0, 1]` to an 8-bit code, `round(v * 255)`.
#[inline]
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[inline]
pub fn to_u16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16
}

pub fn save_png8(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
    write_png(path.as_ref(), img.width(), img.height(), png::BitDepth::Eight, &bytes)
}

pub fn save_png16(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = img.data().iter().flat_map(|&v| to_u16(v).to_be_bytes()).collect();
    write_png(path.as_ref(), img.width(), img.height(), png::BitDepth::Sixteen, &bytes)
}

fn write_png(path: &Path, w: usize, h: usize, depth: png::BitDepth, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(depth);
    let encode_err = |e: png::EncodingError| match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    };
    let mut writer = enc.write_header().map_err(encode_err)?;
    writer.write_image_data(bytes).map_err(encode_err)?;
    writer.finish().map_err(encode_err)
}

/// Reads an 8-bit indexed or grayscale PNG as raw codes (no palette
/// expansion). Returns `(width, height, codes)`.
pub fn read_png_codes(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let decode_err = |e: png::DecodingError| match e {
        png::DecodingError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    };
    let mut reader = decoder.read_info().map_err(decode_err)?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(decode_err)?;
    if info.bit_depth != png::BitDepth::Eight
        || !matches!(info.color_type, png::ColorType::Indexed | png::ColorType::Grayscale)
    {
        return Err(Error::Format(format!(
            "{}: label masks must be 8-bit indexed or grayscale, got {:?} {:?}",
            path.display(),
            info.color_type,
            info.bit_depth
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut codes = Vec::with_capacity(w * h);
    for row in buf[..info.buffer_size()].chunks_exact(info.line_size) {
        codes.extend_from_slice(&row[..w]);
    }
    Ok((w, h, codes))
}

/// Writes 8-bit grayscale codes (used for label masks: value = class id).
pub fn save_png_codes(path: impl AsRef<Path>, width: usize, height: usize, codes: &[u8]) -> Result<()> {
    write_png(path.as_ref(), width, height, png::BitDepth::Eight, codes)
}
