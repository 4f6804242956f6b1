//! Multiscale sorted high-frequency DCT layers.
//!
//! For every pixel and patch size `M`, the `M×M` mirror-padded patch of the
//! gradient image is transformed with an orthonormal 2-D DCT-II; the
//! magnitudes of the `(M²+M)/2` coefficients with `u + v >= M - 1` are sorted
//! ascending. Entry `t` of that sorted vector over all pixels forms layer `t`.
//!
//! Holding every layer of a large image in memory is not an option (496
//! layers at `M = 31`), so the work is streamed in row bands twice: once to
//! collect per-layer extremes, once to evaluate the normalized maximum.
//! Within a band, pixels are handled in groups of 16 adjacent columns: the
//! transforms produce one vector lane per pixel and a bitonic sorting network
//! orders every lane at once, which avoids per-pixel branchy sorting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{mirror, Image};
use crate::par;

const BAND_ROWS: usize = 32;

/// Patch sizes `M_r = 2^(2+r) - 1` for `r = 1..=scale_count` (7, 15, 31, ...).
pub fn patch_sizes(scale_count: usize) -> Vec<usize> {
    (1..=scale_count).map(|r| (1usize << (2 + r)) - 1).collect()
}

/// Number of high-frequency coefficients (and hence layers) of an `M×M` patch.
pub const fn layer_count(patch: usize) -> usize {
    (patch * patch + patch) / 2
}

/// Which sorted layers enter the per-pixel maximum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerSet {
    /// Each scale is sorted on its own and all `(M²+M)/2` layers of every
    /// scale are used.
    #[default]
    PerScaleAll,
    /// Coefficients of all scales are pooled and sorted together; only the
    /// `Σ M_r` smallest (the first layers) are used.
    FirstSumM,
}

/// Orthonormal DCT-II basis and high-frequency index set for one patch size.
#[derive(Clone, Debug)]
pub(crate) struct ScalePlan {
    size: usize,
    half: usize,
    /// `basis[u * size + t] = α_u cos(π (2t + 1) u / 2M)`
    basis: Vec<f32>,
}

impl ScalePlan {
    pub(crate) fn new(size: usize) -> Self {
        debug_assert!(size % 2 == 1);
        let n = size as f64;
        let mut basis = vec![0f32; size * size];
        for u in 0..size {
            let alpha = if u == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            for t in 0..size {
                let arg = std::f64::consts::PI * (2 * t + 1) as f64 * u as f64 / (2.0 * n);
                basis[u * size + t] = (alpha * arg.cos()) as f32;
            }
        }
        Self { size, half: size / 2, basis }
    }

    #[inline]
    fn coef_count(&self) -> usize {
        layer_count(self.size)
    }

    #[inline]
    fn c(&self, u: usize, t: usize) -> f32 {
        self.basis[u * self.size + t]
    }

    /// 1-D DCT of every horizontal window of one (mirror-padded) row.
    /// `out` holds one `[v]` run of lane vectors per pixel group; lanes past
    /// the row end repeat the last pixel.
    #[inline(always)]
    fn row_transform(&self, row: &[f32], out: &mut [Lanes], scratch: &mut RowScratch) {
        let (m, h, w) = (self.size, self.half, row.len());
        let wp = w.div_ceil(GROUP) * GROUP;
        let pad = &mut scratch.pad;
        pad.clear();
        pad.extend((-(h as isize)..(w + h) as isize).map(|i| row[mirror(i, w)]));
        // Half sums and differences of mirrored taps, padded to whole groups
        // by repeating the last pixel.
        let (sum, diff, center) = (&mut scratch.sum, &mut scratch.diff, &mut scratch.center);
        sum.resize(h * wp, 0.0);
        diff.resize(h * wp, 0.0);
        center.clear();
        center.extend((0..wp).map(|x| pad[h + x.min(w - 1)]));
        for t in 0..h {
            let (s, d) = (&mut sum[t * wp..(t + 1) * wp], &mut diff[t * wp..(t + 1) * wp]);
            for x in 0..wp {
                let x = x.min(w - 1);
                let (lo, hi) = (pad[t + x], pad[m - 1 - t + x]);
                s[x] = lo + hi;
                d[x] = lo - hi;
            }
            for x in w..wp {
                s[x] = s[w - 1];
                d[x] = d[w - 1];
            }
        }
        for (xb, block) in out.chunks_exact_mut(m).enumerate() {
            let x0 = xb * GROUP;
            for (v, dst) in block.iter_mut().enumerate() {
                let coeffs = &self.basis[v * m..v * m + h];
                let (mut acc, src) = if v % 2 == 0 {
                    let c = self.c(v, h);
                    let mut a = [0f32; GROUP];
                    for (al, &cl) in a.iter_mut().zip(&center[x0..x0 + GROUP]) {
                        *al = c * cl;
                    }
                    (a, &sum[..])
                } else {
                    ([0f32; GROUP], &diff[..])
                };
                for (t, &c) in coeffs.iter().enumerate() {
                    let r = &src[t * wp + x0..t * wp + x0 + GROUP];
                    for l in 0..GROUP {
                        acc[l] += c * r[l];
                    }
                }
                *dst = acc;
            }
        }
    }

    /// Vertical DCT, restricted to high-frequency pairs, for one pixel group
    /// of band row `yl`. `rows` is the blocked output of [`Self::row_transform`]
    /// for every source row of the band; `|C(u, v)|` goes to `out[k]`.
    #[inline(always)]
    fn column_block(&self, rows: &[Lanes], yl: usize, blocks: usize, xb: usize, sd: &mut [Lanes], out: &mut [Lanes]) {
        let (m, h) = (self.size, self.half);
        let line = |r: usize| &rows[((yl + r) * blocks + xb) * m..][..m];
        let (sums, diffs) = sd.split_at_mut(h);
        let mut k = 0;
        for v in 0..m {
            for t in 0..h {
                let (top, bottom) = (&line(t)[v], &line(m - 1 - t)[v]);
                let (s, d) = (&mut sums[t], &mut diffs[t]);
                for l in 0..GROUP {
                    s[l] = top[l] + bottom[l];
                    d[l] = top[l] - bottom[l];
                }
            }
            let center = &line(h)[v];
            for u in (m - 1 - v)..m {
                let coeffs = &self.basis[u * m..u * m + h];
                let (mut acc, half_sums) = if u % 2 == 0 {
                    let c = self.c(u, h);
                    (center.map(|x| c * x), &*sums)
                } else {
                    ([0f32; GROUP], &*diffs)
                };
                for (&c, hs) in coeffs.iter().zip(half_sums) {
                    for l in 0..GROUP {
                        acc[l] += c * hs[l];
                    }
                }
                out[k] = acc.map(f32::abs);
                k += 1;
            }
        }
        debug_assert_eq!(k, self.coef_count());
    }
}

/// Pixels handled side by side, one vector lane each.
const GROUP: usize = 16;
type Lanes = [f32; GROUP];

/// Portable lane-wise compare-exchange: `a` keeps the minima, `b` the maxima.
#[inline(always)]
fn compare_exchange(a: &mut Lanes, b: &mut Lanes) {
    for l in 0..GROUP {
        let (x, y) = (a[l], b[l]);
        a[l] = x.min(y);
        b[l] = x.max(y);
    }
}

/// Compare-exchange with raw vector min/max. Unlike `f32::min` these skip
/// NaN handling, which is fine because magnitudes are always finite or the
/// infinite padding.
#[cfg(target_arch = "x86_64")]
#[inline]
#[target_feature(enable = "avx")]
fn compare_exchange_avx(a: &mut Lanes, b: &mut Lanes) {
    use std::arch::x86_64::{_mm256_loadu_ps, _mm256_max_ps, _mm256_min_ps, _mm256_storeu_ps};
    for h in [0, 8] {
        // SAFETY: `h + 8 <= GROUP`, so every access stays inside the arrays.
        unsafe {
            let x = _mm256_loadu_ps(a.as_ptr().add(h));
            let y = _mm256_loadu_ps(b.as_ptr().add(h));
            _mm256_storeu_ps(a.as_mut_ptr().add(h), _mm256_min_ps(x, y));
            _mm256_storeu_ps(b.as_mut_ptr().add(h), _mm256_max_ps(x, y));
        }
    }
}

/// Bitonic sorting network over a power-of-two count of lane vectors; each
/// lane ends up sorted ascending on its own. Being branch-free, it sorts the
/// coefficient vectors of a whole pixel group with vector min/max.
#[inline(always)]
fn sort_lanes(v: &mut [Lanes], cx: impl Fn(&mut Lanes, &mut Lanes)) {
    let n = v.len();
    debug_assert!(n.is_power_of_two());
    let mut k = 2;
    while k <= n {
        for block in v.chunks_exact_mut(k) {
            let (lo, hi) = block.split_at_mut(k / 2);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut().rev()) {
                cx(a, b);
            }
        }
        let mut j = k / 4;
        while j >= 1 {
            for block in v.chunks_exact_mut(2 * j) {
                let (lo, hi) = block.split_at_mut(j);
                for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                    cx(a, b);
                }
            }
            j /= 2;
        }
        k *= 2;
    }
}

#[derive(Default)]
struct RowScratch {
    pad: Vec<f32>,
    sum: Vec<f32>,
    diff: Vec<f32>,
    center: Vec<f32>,
}

/// Scales plus the rule for assembling per-pixel layer vectors.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    plans: Vec<ScalePlan>,
    set: LayerSet,
    layers: usize,
}

impl Layout {
    pub(crate) fn new(sizes: &[usize], set: LayerSet) -> Self {
        let plans: Vec<ScalePlan> = sizes.iter().map(|&m| ScalePlan::new(m)).collect();
        let layers = match set {
            LayerSet::PerScaleAll => plans.iter().map(ScalePlan::coef_count).sum(),
            LayerSet::FirstSumM => sizes.iter().sum(),
        };
        Self { plans, set, layers }
    }

    pub(crate) fn for_image(img: &Image, sizes: &[usize], set: LayerSet) -> Result<Self> {
        let limit = img.width().min(img.height());
        if let Some(&m) = sizes.iter().find(|&&m| m > limit) {
            return Err(Error::param(format!("patch size {m} exceeds the smaller image side {limit}")));
        }
        Ok(Self::new(sizes, set))
    }

    pub(crate) fn layer_count(&self) -> usize {
        self.layers
    }

    /// Streams sorted layer vectors for rows `y0..y1` to `sink`, one group of
    /// up to [`GROUP`] horizontally adjacent pixels at a time:
    /// `sink(y, x0, valid, layers)` with `layers[t][l]` = layer `t` of pixel
    /// `x0 + l`. Lanes at or past `valid` repeat the last valid pixel.
    fn process_band<F: FnMut(usize, usize, usize, &[Lanes])>(&self, g: &Image, y0: usize, y1: usize, sink: F) {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            return unsafe { self.process_band_avx2(g, y0, y1, sink) };
        }
        self.process_band_impl(g, y0, y1, sink, compare_exchange)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    fn process_band_avx2<F: FnMut(usize, usize, usize, &[Lanes])>(&self, g: &Image, y0: usize, y1: usize, sink: F) {
        self.process_band_impl(g, y0, y1, sink, |a, b| compare_exchange_avx(a, b))
    }

    #[inline(always)]
    fn process_band_impl<F: FnMut(usize, usize, usize, &[Lanes])>(
        &self,
        g: &Image,
        y0: usize,
        y1: usize,
        mut sink: F,
        cx: impl Fn(&mut Lanes, &mut Lanes) + Copy,
    ) {
        let (w, h) = g.dims();
        let band = y1 - y0;
        let blocks = w.div_ceil(GROUP);
        let max_m = self.plans.iter().map(|p| p.size).max().unwrap_or(1);
        let mut row_scratch = RowScratch::default();

        // Horizontal transforms for every source row the band touches.
        let row_bufs: Vec<Vec<Lanes>> = self
            .plans
            .iter()
            .map(|p| {
                let rows = band + p.size - 1;
                let mut buf = vec![[0f32; GROUP]; rows * blocks * p.size];
                for (i, out) in buf.chunks_exact_mut(blocks * p.size).enumerate() {
                    let src = mirror(y0 as isize + i as isize - p.half as isize, h);
                    p.row_transform(g.row(src), out, &mut row_scratch);
                }
                buf
            })
            .collect();

        // Half sums then half differences, one lane vector per tap.
        let mut sd = vec![[0f32; GROUP]; 2 * (max_m / 2)];
        // Sorting networks need a power-of-two length; the infinite padding
        // sorts to the tail and stays there.
        let mut nets: Vec<Vec<Lanes>> =
            self.plans.iter().map(|p| vec![[f32::INFINITY; GROUP]; p.coef_count().next_power_of_two()]).collect();
        let candidates: usize = self.plans.iter().map(|p| p.coef_count().min(self.layers)).sum();
        let mut pooled: Vec<Lanes> = match self.set {
            LayerSet::PerScaleAll => Vec::new(),
            LayerSet::FirstSumM => vec![[f32::INFINITY; GROUP]; candidates.next_power_of_two()],
        };
        let mut layers = vec![[0f32; GROUP]; self.layers];

        for y in y0..y1 {
            for xb in 0..blocks {
                let x0 = xb * GROUP;
                let valid = GROUP.min(w - x0);
                for ((p, rows), net) in self.plans.iter().zip(&row_bufs).zip(nets.iter_mut()) {
                    let n = p.coef_count();
                    p.column_block(rows, y - y0, blocks, xb, &mut sd, &mut net[..n]);
                    sort_lanes(net, cx);
                }
                match self.set {
                    LayerSet::PerScaleAll => {
                        let mut offset = 0;
                        for (p, net) in self.plans.iter().zip(&nets) {
                            let n = p.coef_count();
                            layers[offset..offset + n].copy_from_slice(&net[..n]);
                            offset += n;
                        }
                    }
                    LayerSet::FirstSumM => {
                        // The smallest `used` of the union lie among the
                        // smallest `used` of each scale.
                        let used = self.layers;
                        let mut offset = 0;
                        for (p, net) in self.plans.iter().zip(&nets) {
                            let take = p.coef_count().min(used);
                            pooled[offset..offset + take].copy_from_slice(&net[..take]);
                            offset += take;
                        }
                        sort_lanes(&mut pooled, cx);
                        layers.copy_from_slice(&pooled[..used]);
                    }
                }
                sink(y, x0, valid, &layers);
            }
        }
    }

    fn band_count(h: usize) -> usize {
        h.div_ceil(BAND_ROWS)
    }

    /// Pass one: per-layer minimum and maximum over the image.
    pub(crate) fn stats(&self, g: &Image) -> LayerStats {
        let h = g.height();
        let partial = par::map_indexed(Self::band_count(h), |b| {
            let y0 = b * BAND_ROWS;
            let y1 = (y0 + BAND_ROWS).min(h);
            let mut lo = vec![[f32::INFINITY; GROUP]; self.layers];
            let mut hi = vec![[f32::NEG_INFINITY; GROUP]; self.layers];
            // Padding lanes duplicate a real pixel, so all lanes can be folded.
            self.process_band(g, y0, y1, |_, _, _, layers| {
                for ((a, b), v) in lo.iter_mut().zip(hi.iter_mut()).zip(layers) {
                    for l in 0..GROUP {
                        a[l] = a[l].min(v[l]);
                        b[l] = b[l].max(v[l]);
                    }
                }
            });
            LayerStats::from_lanes(&lo, &hi)
        });
        partial.into_iter().fold(LayerStats::empty(self.layers), |mut acc, s| {
            acc.merge(&s);
            acc
        })
    }

    /// Pass two: per-pixel maximum of the normalized layers.
    pub(crate) fn max_normalized(&self, g: &Image, stats: &LayerStats) -> Image {
        let (w, h) = g.dims();
        let (min, range) = stats.normalizers();
        let mut out = vec![0f32; w * h];
        par::for_each_band(&mut out, w, BAND_ROWS, |y0, chunk| {
            let y1 = y0 + chunk.len() / w;
            self.process_band(g, y0, y1, |y, x0, valid, layers| {
                let mut best = [0f32; GROUP];
                for ((v, &lo), &r) in layers.iter().zip(&min).zip(&range) {
                    for l in 0..GROUP {
                        let t = (v[l] - lo) / r;
                        best[l] = best[l].max(t);
                    }
                }
                chunk[(y - y0) * w + x0..][..valid].copy_from_slice(&best[..valid]);
            });
        });
        Image::from_parts(w, h, out)
    }

    /// Calls `f(index, layer)` for every pixel of the band, row-major.
    fn for_each_pixel(&self, g: &Image, y0: usize, y1: usize, mut f: impl FnMut(usize, &[f32])) {
        let w = g.width();
        let mut px = vec![0f32; self.layers];
        self.process_band(g, y0, y1, |y, x0, valid, layers| {
            for l in 0..valid {
                for (d, v) in px.iter_mut().zip(layers) {
                    *d = v[l];
                }
                f(y * w + x0 + l, &px);
            }
        });
    }

    /// Every normalized layer as its own image. Memory grows with the layer
    /// count; meant for inspection of small images.
    pub(crate) fn all_layers(&self, g: &Image) -> Vec<Image> {
        let (w, h) = g.dims();
        let n = self.layers;
        let mut raw = vec![0f32; w * h * n];
        self.for_each_pixel(g, 0, h, |i, layer| raw[i * n..][..n].copy_from_slice(layer));
        let mut stats = LayerStats::empty(n);
        for px in raw.chunks_exact(n) {
            stats.observe(px);
        }
        let (min, range) = stats.normalizers();
        (0..n)
            .map(|t| {
                let data = (0..w * h).map(|i| (raw[i * n + t] - min[t]) / range[t]).collect();
                Image::from_parts(w, h, data)
            })
            .collect()
    }

    /// Raw sorted magnitudes per pixel (row-major pixels, `layer_count` each).
    #[cfg(test)]
    pub(crate) fn raw_layers(&self, g: &Image) -> Vec<Vec<f32>> {
        let (w, h) = g.dims();
        let mut out = vec![Vec::new(); w * h];
        self.for_each_pixel(g, 0, h, |i, layer| out[i] = layer.to_vec());
        out
    }
}

/// Per-layer extremes gathered over one image or a whole stack.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStats {
    min: Vec<f32>,
    max: Vec<f32>,
}

impl LayerStats {
    pub fn empty(layers: usize) -> Self {
        Self { min: vec![f32::INFINITY; layers], max: vec![f32::NEG_INFINITY; layers] }
    }

    pub fn layer_count(&self) -> usize {
        self.min.len()
    }

    fn from_lanes(lo: &[Lanes], hi: &[Lanes]) -> Self {
        let fold = |v: &[Lanes], pick: fn(f32, f32) -> f32, init: f32| {
            v.iter().map(|lanes| lanes.iter().copied().fold(init, pick)).collect()
        };
        Self { min: fold(lo, f32::min, f32::INFINITY), max: fold(hi, f32::max, f32::NEG_INFINITY) }
    }

    fn observe(&mut self, layer: &[f32]) {
        for ((lo, hi), &v) in self.min.iter_mut().zip(self.max.iter_mut()).zip(layer) {
            *lo = lo.min(v);
            *hi = hi.max(v);
        }
    }

    pub fn merge(&mut self, other: &LayerStats) {
        assert_eq!(self.layer_count(), other.layer_count(), "layer counts differ");
        for (a, b) in self.min.iter_mut().zip(&other.min) {
            *a = a.min(*b);
        }
        for (a, b) in self.max.iter_mut().zip(&other.max) {
            *a = a.max(*b);
        }
    }

    /// Layers whose maximum equals their minimum carry no information and
    /// normalize to zero everywhere.
    pub fn degenerate_count(&self) -> usize {
        self.min.iter().zip(&self.max).filter(|(a, b)| !(b > a)).count()
    }

    /// `(min, range)` with an infinite range for degenerate layers, so that
    /// `(v - min) / range` is 0 there and lands in `[0, 1]` otherwise.
    fn normalizers(&self) -> (Vec<f32>, Vec<f32>) {
        let range =
            self.min.iter().zip(&self.max).map(|(lo, hi)| if hi > lo { hi - lo } else { f32::INFINITY }).collect();
        let min = self.min.iter().map(|&v| if v.is_finite() { v } else { 0.0 }).collect();
        (min, range)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct 2-D orthonormal DCT-II of one mirror-padded patch in f64.
    fn dct_oracle(g: &Image, cx: usize, cy: usize, m: usize) -> Vec<f64> {
        let h = (m / 2) as isize;
        let (w, ht) = g.dims();
        let patch = |i: usize, j: usize| -> f64 {
            let y = mirror(cy as isize + i as isize - h, ht);
            let x = mirror(cx as isize + j as isize - h, w);
            g.get(x, y) as f64
        };
        let n = m as f64;
        let alpha = |k: usize| if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        let mut mags = Vec::new();
        for u in 0..m {
            for v in 0..m {
                if u + v < m - 1 {
                    continue;
                }
                let mut s = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        s += patch(i, j)
                            * (std::f64::consts::PI * (2 * i + 1) as f64 * u as f64 / (2.0 * n)).cos()
                            * (std::f64::consts::PI * (2 * j + 1) as f64 * v as f64 / (2.0 * n)).cos();
                    }
                }
                mags.push((alpha(u) * alpha(v) * s).abs());
            }
        }
        mags.sort_by(f64::total_cmp);
        mags
    }

    fn textured(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| {
            let v = ((x * 7 + y * 13) % 17) as f32 / 17.0 * 0.6 + if (x / 3 + y / 2) % 2 == 0 { 0.3 } else { 0.0 };
            v.min(1.0)
        })
        .unwrap()
    }

    #[test]
    fn lane_network_sorts_every_lane() {
        let mut state = 0x9e37_79b9u32;
        for n in [1usize, 2, 4, 8, 32, 128, 512] {
            let mut v: Vec<Lanes> = (0..n)
                .map(|_| {
                    std::array::from_fn(|l| {
                        state ^= state << 13;
                        state ^= state >> 17;
                        state ^= state << 5;
                        // a few lanes with many ties
                        if l % 4 == 0 {
                            (state % 5) as f32
                        } else {
                            (state >> 8) as f32 / 1e6
                        }
                    })
                })
                .collect();
            let want: Vec<Vec<f32>> = (0..GROUP)
                .map(|l| {
                    let mut col: Vec<f32> = v.iter().map(|x| x[l]).collect();
                    col.sort_by(f32::total_cmp);
                    col
                })
                .collect();
            sort_lanes(&mut v, compare_exchange);
            for (l, col) in want.iter().enumerate() {
                let got: Vec<f32> = v.iter().map(|x| x[l]).collect();
                assert_eq!(&got, col, "n={n} lane={l}");
            }
        }
    }

    #[test]
    fn patch_schedule_and_layer_counts() {
        assert_eq!(patch_sizes(3), vec![7, 15, 31]);
        assert_eq!(layer_count(7), 28);
        assert_eq!(layer_count(15), 120);
        assert_eq!(layer_count(31), 496);
    }

    #[test]
    fn basis_is_orthonormal() {
        let p = ScalePlan::new(7);
        for a in 0..7 {
            for b in 0..7 {
                let dot: f64 = (0..7).map(|t| p.c(a, t) as f64 * p.c(b, t) as f64).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-6, "{a} {b} {dot}");
            }
        }
    }

    #[test]
    fn separable_transform_matches_direct_dct() {
        let g = textured(19, 17);
        for m in [3usize, 7, 15] {
            let layout = Layout::new(&[m], LayerSet::PerScaleAll);
            let fast = layout.raw_layers(&g);
            for &(x, y) in &[(0usize, 0usize), (5, 9), (18, 16), (9, 0)] {
                let want = dct_oracle(&g, x, y, m);
                let got = &fast[y * 19 + x];
                assert_eq!(got.len(), want.len());
                for (a, b) in got.iter().zip(&want) {
                    assert!((*a as f64 - b).abs() < 2e-5, "m={m} ({x},{y}) {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn pooled_layers_are_smallest_of_union() {
        let g = textured(20, 20);
        let per = Layout::new(&[3, 7], LayerSet::PerScaleAll).raw_layers(&g);
        let pooled = Layout::new(&[3, 7], LayerSet::FirstSumM).raw_layers(&g);
        for (a, b) in per.iter().zip(&pooled) {
            let mut union = a.clone();
            union.sort_by(f32::total_cmp);
            assert_eq!(&union[..10], &b[..]);
        }
    }

    #[test]
    fn portable_path_matches_dispatched_path() {
        let g = textured(37, 21);
        for set in [LayerSet::PerScaleAll, LayerSet::FirstSumM] {
            let layout = Layout::new(&[7, 15], set);
            let mut fast = Vec::new();
            layout.process_band(&g, 0, 21, |_, _, valid, l| fast.extend(l.iter().map(|v| v[..valid].to_vec())));
            let mut portable = Vec::new();
            layout.process_band_impl(
                &g,
                0,
                21,
                |_, _, valid, l| portable.extend(l.iter().map(|v| v[..valid].to_vec())),
                compare_exchange,
            );
            assert_eq!(fast, portable);
        }
    }

    #[test]
    fn band_split_does_not_change_results() {
        let g = textured(23, 41);
        let layout = Layout::new(&[7, 15], LayerSet::PerScaleAll);
        let stats = layout.stats(&g);
        let banded = layout.max_normalized(&g, &stats);
        // single band reference
        let (min, range) = stats.normalizers();
        let mut whole = vec![0f32; 23 * 41];
        layout.for_each_pixel(&g, 0, 41, |i, l| {
            whole[i] = l.iter().zip(&min).zip(&range).map(|((&v, &lo), &r)| (v - lo) / r).fold(0.0, f32::max);
        });
        assert_eq!(banded.data(), &whole[..]);
    }
}
