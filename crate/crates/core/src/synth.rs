//! Synthetic z-stacks with known ground truth.
//!
//! A sharp source image `S` is drawn from a seeded pattern; every slice keeps
//! `S` inside its sharp region, shows a Gaussian-defocused copy elsewhere and
//! gets independent Gaussian noise. Because the generator knows which pixels
//! are sharp, it serves as the oracle for selection and fusion tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::gaussian_filter;
use crate::image::{mirror, Image};
use crate::image_io::ZStack;
use crate::par;

/// Source texture family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    /// Checkerboard with a random period in 4..=16 px and random cell levels.
    Checker,
    /// Overlapping discs of radius 3..=20 px on a faint checkerboard; the
    /// broadest spectrum of the three, and the default.
    #[default]
    Blobs,
    /// Dark strokes arranged in lines of "words" on a light background.
    TextLike,
}

/// Axis-aligned pixel rectangle; zero width or height means empty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self { x, y, width, height }
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.width && y < self.y + self.height
    }
}

/// Focus state of one slice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceFocus {
    /// Region copied from the sharp source; `None` for a fully defocused slice.
    #[serde(default)]
    pub sharp_region: Option<Rect>,
    /// Gaussian defocus applied outside the sharp region, in pixels.
    pub defocus_sigma: f32,
}

impl SliceFocus {
    pub fn defocused(sigma: f32) -> Self {
        Self { sharp_region: None, defocus_sigma: sigma }
    }

    pub fn partly_sharp(region: Rect, sigma: f32) -> Self {
        Self { sharp_region: Some(region), defocus_sigma: sigma }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub z_count: usize,
    #[serde(default)]
    pub pattern: Pattern,
    pub focus_schedule: Vec<SliceFocus>,
    #[serde(default)]
    pub noise_sigma: f32,
    #[serde(default)]
    pub seed: u64,
}

impl SynthSpec {
    /// Spec whose slice count follows the schedule.
    pub fn new(width: usize, height: usize, pattern: Pattern, focus_schedule: Vec<SliceFocus>, seed: u64) -> Self {
        Self { width, height, z_count: focus_schedule.len(), pattern, focus_schedule, noise_sigma: 0.0, seed }
    }

    pub fn with_noise(mut self, sigma: f32) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::param(format!(
                "synthetic image must be at least 2x2, got {}x{}",
                self.width, self.height
            )));
        }
        if self.z_count == 0 {
            return Err(Error::param("z_count must be at least 1"));
        }
        if self.focus_schedule.len() != self.z_count {
            return Err(Error::param(format!(
                "focus schedule has {} entries for z_count {}",
                self.focus_schedule.len(),
                self.z_count
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        for (z, f) in self.focus_schedule.iter().enumerate() {
            if !(f.defocus_sigma >= 0.0 && f.defocus_sigma.is_finite()) {
                return Err(Error::param(format!("slice {z}: defocus_sigma must be >= 0, got {}", f.defocus_sigma)));
            }
            if let Some(r) = f.sharp_region {
                if r.x + r.width > self.width || r.y + r.height > self.height {
                    return Err(Error::param(format!(
                        "slice {z}: sharp region {r:?} exceeds {}x{}",
                        self.width, self.height
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Randomized z-series shaped like a real focus sweep: a contiguous run of
/// `in_focus` slices near the focal plane each has one sharp rectangle (30 to
/// 72% of the frame) over a mild defocus of 1.5–3 px; every other slice is
/// fully defocused, increasingly so with its distance from that run
/// (σ = 3 + 0.75·d + U(0, 0.5) px at distance `d`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FocalSeries {
    pub width: usize,
    pub height: usize,
    pub z_count: usize,
    pub in_focus: usize,
    pub pattern: Pattern,
    pub noise_sigma: f32,
    pub seed: u64,
}

impl Default for FocalSeries {
    fn default() -> Self {
        Self { width: 128, height: 128, z_count: 15, in_focus: 8, pattern: Pattern::Blobs, noise_sigma: 0.005, seed: 0 }
    }
}

impl FocalSeries {
    pub fn to_spec(&self) -> Result<SynthSpec> {
        if self.in_focus > self.z_count {
            return Err(Error::param(format!(
                "{} in-focus slices requested for z_count {}",
                self.in_focus, self.z_count
            )));
        }
        if self.width < 2 || self.height < 2 {
            return Err(Error::param("focal series frames must be at least 2x2"));
        }
        // Stream 0 renders the pattern and stream 1 drives per-slice noise.
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(2);
        let start = rng.random_range(0..=self.z_count - self.in_focus);
        let end = start + self.in_focus;
        let side =
            |rng: &mut ChaCha8Rng, n: usize| ((n as f64 * rng.random_range(0.55..0.85)).ceil() as usize).clamp(1, n);
        let schedule = (0..self.z_count)
            .map(|z| {
                if (start..end).contains(&z) {
                    let (w, h) = (side(&mut rng, self.width), side(&mut rng, self.height));
                    let x = rng.random_range(0..=self.width - w);
                    let y = rng.random_range(0..=self.height - h);
                    SliceFocus::partly_sharp(Rect::new(x, y, w, h), rng.random_range(1.5..3.0))
                } else {
                    let d = if z < start { start - z } else { z + 1 - end } as f32;
                    SliceFocus::defocused(3.0 + 0.75 * d + rng.random_range(0.0..0.5))
                }
            })
            .collect();
        let spec =
            SynthSpec::new(self.width, self.height, self.pattern, schedule, self.seed).with_noise(self.noise_sigma);
        spec.validate()?;
        Ok(spec)
    }
}

/// Binary per-pixel mask, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    fn from_region(width: usize, height: usize, region: Option<Rect>) -> Self {
        let data = (0..width * height).map(|i| region.is_some_and(|r| r.contains(i % width, i / width))).collect();
        Self { width, height, data }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// 0/255 byte codes for writing as an 8-bit image.
    pub fn to_codes(&self) -> Vec<u8> {
        self.data.iter().map(|&b| if b { 255 } else { 0 }).collect()
    }
}

#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub sharp_image: Image,
    pub sharp_masks: Vec<BinaryMask>,
    pub sharp_fractions: Vec<f64>,
}

impl GroundTruth {
    /// Slices that received any sharp content.
    pub fn sharp_slices(&self) -> Vec<usize> {
        (0..self.sharp_fractions.len()).filter(|&z| self.sharp_fractions[z] > 0.0).collect()
    }
}

/// Renders the stack and its ground truth. Deterministic in the spec.
pub fn generate_zstack(spec: &SynthSpec) -> Result<(ZStack, GroundTruth)> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let sharp = render_pattern(spec.pattern, w, h, spec.seed);

    let slices: Vec<Result<Image>> = par::map_indexed(spec.z_count, |z| {
        let focus = &spec.focus_schedule[z];
        let blurred = defocus(&sharp, focus.defocus_sigma)?;
        let mut data = blurred.data().to_vec();
        if let Some(r) = focus.sharp_region {
            for y in r.y..r.y + r.height {
                let row = y * w;
                data[row + r.x..row + r.x + r.width].copy_from_slice(&sharp.row(y)[r.x..r.x + r.width]);
            }
        }
        if spec.noise_sigma > 0.0 {
            let mut rng = slice_rng(spec.seed, z);
            let normal = Normal::new(0.0f32, spec.noise_sigma).map_err(|e| Error::param(e.to_string()))?;
            for v in &mut data {
                *v += normal.sample(&mut rng);
            }
        }
        Ok(Image::from_raw(w, h, data)?.clamp01())
    });
    let slices = slices.into_iter().collect::<Result<Vec<_>>>()?;

    let sharp_masks: Vec<BinaryMask> = spec
        .focus_schedule
        .iter()
        .map(|f| BinaryMask::from_region(w, h, f.sharp_region.filter(|r| !r.is_empty())))
        .collect();
    let total = (w * h) as f64;
    let sharp_fractions = sharp_masks.iter().map(|m| m.count() as f64 / total).collect();
    Ok((ZStack::from_slices(slices)?, GroundTruth { sharp_image: sharp, sharp_masks, sharp_fractions }))
}

/// Gaussian defocus; a zero sigma is the identity.
pub fn defocus(img: &Image, sigma: f32) -> Result<Image> {
    if sigma == 0.0 {
        Ok(img.clone())
    } else {
        gaussian_filter(img, sigma as f64)
    }
}

/// Variance of the 3×3 Laplacian response over interior pixels.
pub fn sharpness(img: &Image) -> Result<f64> {
    let (w, h) = img.dims();
    if w < 3 || h < 3 {
        return Err(Error::param(format!("sharpness needs at least 3x3 pixels, got {w}x{h}")));
    }
    let (mut sum, mut sum_sq) = (0f64, 0f64);
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let l = img.get(x - 1, y) as f64
                + img.get(x + 1, y) as f64
                + img.get(x, y - 1) as f64
                + img.get(x, y + 1) as f64
                - 4.0 * img.get(x, y) as f64;
            sum += l;
            sum_sq += l * l;
        }
    }
    let n = ((w - 2) * (h - 2)) as f64;
    let mean = sum / n;
    Ok((sum_sq / n - mean * mean).max(0.0))
}

/// Whole-pixel translation: output `(x, y)` shows input `(x - dx, y - dy)`,
/// mirror-padded at the borders.
pub fn shift_image(img: &Image, dx: isize, dy: isize) -> Image {
    let (w, h) = img.dims();
    Image::from_parts(
        w,
        h,
        (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as isize, (i / w) as isize);
                img.get(mirror(x - dx, w), mirror(y - dy, h))
            })
            .collect(),
    )
}

fn pattern_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

/// Noise stream for slice `z`: sub-seed `seed + z` on its own stream, so it
/// never overlaps the pattern draws.
fn slice_rng(seed: u64, z: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(z as u64));
    rng.set_stream(1);
    rng
}

/// The sharp source image for a pattern, normalized to span `[0, 1]`.
pub fn render_pattern(pattern: Pattern, w: usize, h: usize, seed: u64) -> Image {
    let mut rng = pattern_rng(seed);
    let mut data = match pattern {
        Pattern::Checker => checker(&mut rng, w, h),
        Pattern::Blobs => blobs(&mut rng, w, h),
        Pattern::TextLike => text_like(&mut rng, w, h),
    };
    let (lo, hi) = data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = hi - lo;
    for v in &mut data {
        *v = if span > 0.0 { (*v - lo) / span } else { 0.5 };
    }
    Image::from_parts(w, h, data)
}

fn checker(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Vec<f32> {
    let period = rng.random_range(4..=16usize);
    let cols = w.div_ceil(period);
    let rows = h.div_ceil(period);
    let levels: Vec<f32> = (0..cols * rows).map(|_| rng.random_range(0.0..1.0)).collect();
    (0..w * h)
        .map(|i| {
            let (cx, cy) = ((i % w) / period, (i / w) / period);
            let base = if (cx + cy) % 2 == 0 { 0.35 } else { 0.0 };
            base + 0.65 * levels[cy * cols + cx]
        })
        .collect()
}

fn blobs(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Vec<f32> {
    // One disc per ~273 px² keeps the density independent of image size.
    let count = ((w * h) as f64 / 273.0).round().max(1.0) as usize;
    let mut data = vec![0f32; w * h];
    for _ in 0..count {
        let cx = rng.random_range(0.0..w as f32);
        let cy = rng.random_range(0.0..h as f32);
        let r = rng.random_range(3.0..20.0f32);
        let v = rng.random_range(-0.5..0.5f32);
        let (x0, x1) = ((cx - r).floor().max(0.0) as usize, ((cx + r).ceil() as usize).min(w));
        let (y0, y1) = ((cy - r).floor().max(0.0) as usize, ((cy + r).ceil() as usize).min(h));
        for y in y0..y1 {
            for x in x0..x1 {
                let (dx, dy) = (x as f32 - cx, y as f32 - cy);
                if dx * dx + dy * dy < r * r {
                    data[y * w + x] += v;
                }
            }
        }
    }
    let period = 8;
    for (i, v) in data.iter_mut().enumerate() {
        if ((i % w) / period + (i / w) / period) % 2 == 1 {
            *v += 0.25;
        }
    }
    data
}

fn text_like(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Vec<f32> {
    let mut data = vec![0.9f32; w * h];
    let line_height = rng.random_range(10..=16usize);
    let mut y = 2;
    while y + line_height <= h {
        let mut x = rng.random_range(1..=6usize);
        while x + 4 < w {
            let glyphs = rng.random_range(2..=7usize);
            for _ in 0..glyphs {
                let gw = rng.random_range(4..=8usize).min(w - x);
                let gh = line_height - 3;
                let ink = rng.random_range(0.0..0.3f32);
                let thick = rng.random_range(1..=2usize);
                for _ in 0..rng.random_range(2..=4usize) {
                    // vertical or horizontal stroke inside the glyph cell
                    if rng.random_bool(0.5) {
                        let sx = x + rng.random_range(0..gw);
                        let (a, b) = (rng.random_range(0..gh / 2), rng.random_range(gh / 2..=gh));
                        for yy in y + a..(y + b).min(h) {
                            for xx in sx..(sx + thick).min(w) {
                                data[yy * w + xx] = ink;
                            }
                        }
                    } else {
                        let sy = y + rng.random_range(0..gh);
                        let (a, b) = (rng.random_range(0..gw / 2), rng.random_range(gw / 2..=gw));
                        for yy in sy..(sy + thick).min(h) {
                            for xx in x + a..(x + b).min(w) {
                                data[yy * w + xx] = ink;
                            }
                        }
                    }
                }
                x += gw + 1;
                if x + 4 >= w {
                    break;
                }
            }
            x += rng.random_range(3..=6usize);
        }
        y += line_height;
    }
    data
}
