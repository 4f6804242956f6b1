//! Scale-invariant keypoints with 128-bin gradient descriptors.
//!
//! A compact take on the classic difference-of-Gaussians detector: a
//! Gaussian scale space with three intervals per octave, 3×3×3 extrema of the
//! DoG stack refined to sub-pixel accuracy, low-contrast and edge-like
//! responses rejected, one or more dominant gradient orientations per point
//! and a 4×4×8 orientation histogram as descriptor.

use std::f32::consts::PI;

use crate::filters::gaussian_filter;
use crate::image::Image;

const INTERVALS: usize = 3;
const BASE_SIGMA: f32 = 1.6;
/// Blur already present in the input.
const INPUT_SIGMA: f32 = 0.5;
const CONTRAST: f32 = 0.04;
const EDGE_RATIO: f32 = 10.0;
const BORDER: usize = 5;
const MAX_REFINE_STEPS: usize = 5;
const ORI_BINS: usize = 36;
const ORI_PEAK_RATIO: f32 = 0.8;
const DESC_WIDTH: usize = 4;
const DESC_BINS: usize = 8;
const DESC_CLAMP: f32 = 0.2;
/// Strongest responses kept per image; bounds matching cost.
const MAX_FEATURES: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Keypoint {
    /// Position in input pixel coordinates.
    pub x: f32,
    pub y: f32,
    /// Scale in input pixels.
    pub sigma: f32,
    /// Dominant gradient direction in radians, `[0, 2π)`.
    pub angle: f32,
    pub response: f32,
}

#[derive(Clone, Debug)]
pub(crate) struct Feature {
    pub kp: Keypoint,
    pub desc: [f32; 128],
}

struct Plane {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Plane {
    #[inline]
    fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.w + x]
    }
}

struct Octave {
    gauss: Vec<Plane>,
    dog: Vec<Plane>,
    /// Input pixels per octave pixel.
    step: f32,
}

fn blur(data: &[f32], w: usize, h: usize, sigma: f32) -> Vec<f32> {
    let img = Image::from_raw(w, h, data.to_vec()).expect("plane shape");
    gaussian_filter(&img, sigma as f64).expect("positive sigma").into_data()
}

fn build_pyramid(img: &Image) -> Vec<Octave> {
    let (mut w, mut h) = img.dims();
    let octaves = {
        let min_side = w.min(h) as f32;
        ((min_side / 16.0).log2().floor() as usize + 1).clamp(1, 6)
    };
    let k = 2f32.powf(1.0 / INTERVALS as f32);
    let first = (BASE_SIGMA * BASE_SIGMA - INPUT_SIGMA * INPUT_SIGMA).sqrt();
    let mut base = blur(img.data(), w, h, first);
    let mut out = Vec::with_capacity(octaves);
    for o in 0..octaves {
        let mut gauss = vec![Plane { w, h, data: base }];
        for i in 1..INTERVALS + 3 {
            let prev = BASE_SIGMA * k.powi(i as i32 - 1);
            let inc = prev * (k * k - 1.0).sqrt();
            let data = blur(&gauss[i - 1].data, w, h, inc);
            gauss.push(Plane { w, h, data });
        }
        let dog = gauss
            .windows(2)
            .map(|p| Plane { w, h, data: p[1].data.iter().zip(&p[0].data).map(|(a, b)| a - b).collect() })
            .collect();
        // The next octave starts from the image at twice the base scale.
        let src = &gauss[INTERVALS];
        let (nw, nh) = (w / 2, h / 2);
        base = (0..nw * nh).map(|i| src.at((i % nw) * 2, (i / nw) * 2)).collect();
        out.push(Octave { gauss, dog, step: (1 << o) as f32 });
        w = nw;
        h = nh;
        if w < 2 * BORDER + 3 || h < 2 * BORDER + 3 {
            break;
        }
    }
    out
}

fn is_extremum(dog: &[Plane], i: usize, x: usize, y: usize) -> bool {
    let v = dog[i].at(x, y);
    let (mut is_max, mut is_min) = (true, true);
    for plane in &dog[i - 1..=i + 1] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                let n = plane.at(xx, yy);
                is_max &= v >= n;
                is_min &= v <= n;
            }
        }
    }
    is_max || is_min
}

fn solve3(a: [[f32; 3]; 3], b: [f32; 3]) -> Option<[f32; 3]> {
    let det = |m: [[f32; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-12 {
        return None;
    }
    let mut out = [0f32; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][c] = b[r];
        }
        *o = det(m) / d;
    }
    Some(out)
}

/// Sub-pixel/sub-scale refinement; returns `(x, y, layer, contrast)` in
/// octave coordinates or `None` for unstable points.
fn refine(dog: &[Plane], mut i: usize, mut x: usize, mut y: usize) -> Option<(f32, f32, f32, f32)> {
    let (w, h) = (dog[0].w, dog[0].h);
    for _ in 0..MAX_REFINE_STEPS {
        let d = |di: usize, xx: usize, yy: usize| dog[di].at(xx, yy);
        let v = d(i, x, y);
        let g = [
            0.5 * (d(i, x + 1, y) - d(i, x - 1, y)),
            0.5 * (d(i, x, y + 1) - d(i, x, y - 1)),
            0.5 * (d(i + 1, x, y) - d(i - 1, x, y)),
        ];
        let dxx = d(i, x + 1, y) + d(i, x - 1, y) - 2.0 * v;
        let dyy = d(i, x, y + 1) + d(i, x, y - 1) - 2.0 * v;
        let dss = d(i + 1, x, y) + d(i - 1, x, y) - 2.0 * v;
        let dxy = 0.25 * (d(i, x + 1, y + 1) - d(i, x - 1, y + 1) - d(i, x + 1, y - 1) + d(i, x - 1, y - 1));
        let dxs = 0.25 * (d(i + 1, x + 1, y) - d(i + 1, x - 1, y) - d(i - 1, x + 1, y) + d(i - 1, x - 1, y));
        let dys = 0.25 * (d(i + 1, x, y + 1) - d(i + 1, x, y - 1) - d(i - 1, x, y + 1) + d(i - 1, x, y - 1));
        let hess = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
        let off = solve3(hess, [-g[0], -g[1], -g[2]])?;
        if off.iter().all(|o| o.abs() < 0.5) {
            let contrast = v + 0.5 * (g[0] * off[0] + g[1] * off[1] + g[2] * off[2]);
            if contrast.abs() * (INTERVALS as f32) < CONTRAST {
                return None;
            }
            let (tr, det) = (dxx + dyy, dxx * dyy - dxy * dxy);
            if det <= 0.0 || tr * tr * EDGE_RATIO >= (EDGE_RATIO + 1.0).powi(2) * det {
                return None;
            }
            return Some((x as f32 + off[0], y as f32 + off[1], i as f32 + off[2], contrast.abs()));
        }
        if off.iter().any(|o| !o.is_finite() || o.abs() > 1e3) {
            return None;
        }
        let step = |p: usize, o: f32| (p as f32 + o.round()) as isize;
        let (nx, ny, ni) = (step(x, off[0]), step(y, off[1]), step(i, off[2]));
        if ni < 1 || ni > INTERVALS as isize || nx < BORDER as isize || ny < BORDER as isize {
            return None;
        }
        if nx >= (w - BORDER) as isize || ny >= (h - BORDER) as isize {
            return None;
        }
        (x, y, i) = (nx as usize, ny as usize, ni as usize);
    }
    None
}

#[inline]
fn gradient(p: &Plane, x: usize, y: usize) -> (f32, f32) {
    (p.at(x + 1, y) - p.at(x - 1, y), p.at(x, y + 1) - p.at(x, y - 1))
}

fn orientations(p: &Plane, x: f32, y: f32, sigma: f32) -> Vec<f32> {
    let s = 1.5 * sigma;
    let radius = (3.0 * s).round() as isize;
    let (cx, cy) = (x.round() as isize, y.round() as isize);
    let mut hist = [0f32; ORI_BINS];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (xx, yy) = (cx + dx, cy + dy);
            if xx < 1 || yy < 1 || xx >= p.w as isize - 1 || yy >= p.h as isize - 1 {
                continue;
            }
            let (gx, gy) = gradient(p, xx as usize, yy as usize);
            let weight = (-((dx * dx + dy * dy) as f32) / (2.0 * s * s)).exp();
            let angle = gy.atan2(gx).rem_euclid(2.0 * PI);
            let bin = ((angle / (2.0 * PI) * ORI_BINS as f32).round() as usize) % ORI_BINS;
            hist[bin] += weight * (gx * gx + gy * gy).sqrt();
        }
    }
    let smoothed: Vec<f32> = (0..ORI_BINS)
        .map(|b| {
            let at = |o: isize| hist[(b as isize + o).rem_euclid(ORI_BINS as isize) as usize];
            (at(-2) + at(2)) / 16.0 + (at(-1) + at(1)) * 4.0 / 16.0 + at(0) * 6.0 / 16.0
        })
        .collect();
    let peak = smoothed.iter().copied().fold(0f32, f32::max);
    if peak <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for b in 0..ORI_BINS {
        let (l, c, r) = (smoothed[(b + ORI_BINS - 1) % ORI_BINS], smoothed[b], smoothed[(b + 1) % ORI_BINS]);
        if c > l && c > r && c >= ORI_PEAK_RATIO * peak {
            let shift = 0.5 * (l - r) / (l - 2.0 * c + r);
            let bin = (b as f32 + shift).rem_euclid(ORI_BINS as f32);
            out.push(bin * 2.0 * PI / ORI_BINS as f32);
        }
    }
    out
}

fn descriptor(p: &Plane, x: f32, y: f32, sigma: f32, angle: f32) -> [f32; 128] {
    let d = DESC_WIDTH as f32;
    let cell = 3.0 * sigma;
    let radius = ((cell * std::f32::consts::SQRT_2 * (d + 1.0) * 0.5).round() as isize).min((p.w + p.h) as isize);
    let (cos, sin) = (angle.cos() / cell, angle.sin() / cell);
    let (cx, cy) = (x.round() as isize, y.round() as isize);
    let bins_per_rad = DESC_BINS as f32 / (2.0 * PI);
    let exp_scale = -1.0 / (d * d * 0.5);
    const N: usize = DESC_WIDTH + 2;
    let mut hist = [0f32; N * N * (DESC_BINS + 2)];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let c_rot = dx as f32 * cos + dy as f32 * sin;
            let r_rot = -(dx as f32) * sin + dy as f32 * cos;
            let (rbin, cbin) = (r_rot + d / 2.0 - 0.5, c_rot + d / 2.0 - 0.5);
            if rbin <= -1.0 || rbin >= d || cbin <= -1.0 || cbin >= d {
                continue;
            }
            let (xx, yy) = (cx + dx, cy + dy);
            if xx < 1 || yy < 1 || xx >= p.w as isize - 1 || yy >= p.h as isize - 1 {
                continue;
            }
            let (gx, gy) = gradient(p, xx as usize, yy as usize);
            let mag = (gx * gx + gy * gy).sqrt() * ((c_rot * c_rot + r_rot * r_rot) * exp_scale).exp();
            let obin = (gy.atan2(gx) - angle).rem_euclid(2.0 * PI) * bins_per_rad;
            // Trilinear spread over row, column and orientation bins.
            let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
            let (fr, fc, fo) = (rbin - r0, cbin - c0, obin - o0);
            for (ri, wr) in [(0usize, 1.0 - fr), (1, fr)] {
                let r = (r0 as isize + 1) as usize + ri;
                for (ci, wc) in [(0usize, 1.0 - fc), (1, fc)] {
                    let c = (c0 as isize + 1) as usize + ci;
                    for (oi, wo) in [(0usize, 1.0 - fo), (1, fo)] {
                        let o = (o0 as usize + oi) % DESC_BINS;
                        hist[(r * N + c) * (DESC_BINS + 2) + o] += mag * wr * wc * wo;
                    }
                }
            }
        }
    }
    let mut desc = [0f32; 128];
    for r in 0..DESC_WIDTH {
        for c in 0..DESC_WIDTH {
            for o in 0..DESC_BINS {
                desc[(r * DESC_WIDTH + c) * DESC_BINS + o] = hist[((r + 1) * N + c + 1) * (DESC_BINS + 2) + o];
            }
        }
    }
    let norm = desc.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm > 0.0 {
        let clamp = DESC_CLAMP * norm;
        for v in &mut desc {
            *v = v.min(clamp);
        }
        let norm = desc.iter().map(|v| v * v).sum::<f32>().sqrt().max(f32::MIN_POSITIVE);
        for v in &mut desc {
            *v /= norm;
        }
    }
    desc
}

/// Keypoints with descriptors, strongest first (ties keep detection order).
pub(crate) fn detect_features(img: &Image) -> Vec<Feature> {
    let mut out = Vec::new();
    let threshold = 0.5 * CONTRAST / INTERVALS as f32;
    for oct in build_pyramid(img) {
        let (w, h) = (oct.dog[0].w, oct.dog[0].h);
        if w < 2 * BORDER + 1 || h < 2 * BORDER + 1 {
            continue;
        }
        for i in 1..=INTERVALS {
            for y in BORDER..h - BORDER {
                for x in BORDER..w - BORDER {
                    if oct.dog[i].at(x, y).abs() <= threshold || !is_extremum(&oct.dog, i, x, y) {
                        continue;
                    }
                    let Some((kx, ky, layer, response)) = refine(&oct.dog, i, x, y) else {
                        continue;
                    };
                    let sigma = BASE_SIGMA * 2f32.powf(layer / INTERVALS as f32);
                    let plane = &oct.gauss[(layer.round() as usize).clamp(1, INTERVALS)];
                    for angle in orientations(plane, kx, ky, sigma) {
                        out.push(Feature {
                            kp: Keypoint {
                                x: kx * oct.step,
                                y: ky * oct.step,
                                sigma: sigma * oct.step,
                                angle,
                                response,
                            },
                            desc: descriptor(plane, kx, ky, sigma, angle),
                        });
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| b.kp.response.total_cmp(&a.kp.response));
    out.truncate(MAX_FEATURES);
    out
}

/// Index pairs `(query, train)` passing the nearest/second-nearest ratio test.
pub(crate) fn ratio_matches(query: &[Feature], train: &[Feature], ratio: f32) -> Vec<(usize, usize)> {
    if train.len() < 2 {
        return Vec::new();
    }
    let r2 = ratio * ratio;
    let mut out = Vec::new();
    for (qi, q) in query.iter().enumerate() {
        let (mut best, mut second, mut best_idx) = (f32::INFINITY, f32::INFINITY, 0);
        for (ti, t) in train.iter().enumerate() {
            let dist: f32 = q.desc.iter().zip(&t.desc).map(|(a, b)| (a - b) * (a - b)).sum();
            if dist < best {
                second = best;
                best = dist;
                best_idx = ti;
            } else if dist < second {
                second = dist;
            }
        }
        if best < r2 * second {
            out.push((qi, best_idx));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{render_pattern, shift_image, Pattern};

    #[test]
    fn constant_image_has_no_features() {
        let img = Image::filled(64, 64, 0.5).unwrap();
        assert!(detect_features(&img).is_empty());
    }

    #[test]
    fn textured_image_has_features_and_unit_descriptors() {
        let img = render_pattern(Pattern::Blobs, 96, 96, 5);
        let f = detect_features(&img);
        assert!(f.len() > 20, "{}", f.len());
        for feat in &f {
            let n: f32 = feat.desc.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-3);
            assert!((0.0..2.0 * PI + 1e-4).contains(&feat.kp.angle));
        }
    }

    #[test]
    fn shifted_copy_matches_at_the_shift() {
        let img = render_pattern(Pattern::Blobs, 96, 96, 9);
        let moved = shift_image(&img, 3, -2);
        let (a, b) = (detect_features(&moved), detect_features(&img));
        let m = ratio_matches(&a, &b, 0.75);
        assert!(m.len() >= 10, "{}", m.len());
        let good = m
            .iter()
            .filter(|&&(q, t)| {
                let (dx, dy) = (b[t].kp.x - a[q].kp.x, b[t].kp.y - a[q].kp.y);
                (dx + 3.0).abs() < 1.0 && (dy - 2.0).abs() < 1.0
            })
            .count();
        assert!(good * 2 > m.len(), "{good} of {}", m.len());
    }

    #[test]
    fn solve3_solves() {
        let x = solve3([[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]], [3.0, 5.0, 5.0]).unwrap();
        for (v, want) in x.iter().zip([1.0, 1.0, 1.0]) {
            assert!((v - want).abs() < 1e-5);
        }
        assert!(solve3([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]], [1.0, 2.0, 3.0]).is_none());
    }
}
