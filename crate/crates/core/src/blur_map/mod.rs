//! Per-pixel blur detection maps.
//!
//! Pipeline per slice: Gaussian denoising, Roberts-cross gradient magnitude,
//! multiscale sorted high-frequency DCT layers (max over min-max normalized
//! layers gives `T`), local entropy weighting `ω`, then `D = T ⊙ ω` smoothed
//! by a guided filter that uses the source image as its guide.
//!
//! Layer sorting is ascending. Entropy weighting is applied before the
//! edge-preserving smoothing.

mod hifst;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use hifst::{layer_count, patch_sizes, LayerSet, LayerStats};

use crate::error::{Error, Result};
use crate::filters::{box_mean, gaussian_filter, guided_filter};
use crate::image::Image;
use crate::image_io;
use crate::par;
use hifst::Layout;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HifstParams {
    /// Standard deviation of the denoising Gaussian, pixels.
    pub sigma: f64,
    /// Number of patch scales `m`; patch sizes are 7, 15, 31, ...
    pub scale_count: usize,
    /// Side of the square entropy neighbourhood (odd, >= 3).
    pub entropy_patch: usize,
    pub smoothing_radius: usize,
    pub smoothing_eps: f64,
    pub layers: LayerSet,
}

impl Default for HifstParams {
    fn default() -> Self {
        Self {
            sigma: crate::config::DENOISE_SIGMA,
            scale_count: crate::config::SCALE_COUNT,
            entropy_patch: crate::config::ENTROPY_PATCH,
            smoothing_radius: crate::config::SMOOTHING_RADIUS,
            smoothing_eps: crate::config::SMOOTHING_EPS,
            layers: LayerSet::default(),
        }
    }
}

impl HifstParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if self.scale_count == 0 || self.scale_count > 8 {
            return Err(Error::param(format!("scale count must be in 1..=8, got {}", self.scale_count)));
        }
        check_entropy_patch(self.entropy_patch)?;
        if !(self.smoothing_eps > 0.0 && self.smoothing_eps.is_finite()) {
            return Err(Error::param(format!("smoothing eps must be > 0, got {}", self.smoothing_eps)));
        }
        Ok(())
    }

    pub fn patch_sizes(&self) -> Vec<usize> {
        patch_sizes(self.scale_count)
    }
}

fn check_entropy_patch(patch: usize) -> Result<()> {
    if patch < 3 || patch.is_multiple_of(2) {
        return Err(Error::param(format!("entropy patch must be odd and >= 3, got {patch}")));
    }
    Ok(())
}

/// In-focus confidence per pixel, `[0, 1]`, higher is sharper.
#[derive(Clone, Debug, PartialEq)]
pub struct BlurMap(Image);

impl BlurMap {
    pub fn new(img: Image) -> Self {
        BlurMap(img.clamp01())
    }

    pub fn image(&self) -> &Image {
        &self.0
    }

    pub fn into_image(self) -> Image {
        self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.mean()
    }

    pub fn save_pfm(&self, path: impl AsRef<Path>) -> Result<()> {
        image_io::save_float_map(&self.0, path)
    }

    /// 8-bit rendering, `round(value * 255)`.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        image_io::save_png8(&self.0, path)
    }

    /// `alpha·map + (1 - alpha)·source`.
    pub fn overlay(&self, source: &Image, alpha: f32) -> Result<Image> {
        if !self.0.same_dims(source) {
            return Err(Error::param("overlay source size differs from map"));
        }
        let data = self.0.data().iter().zip(source.data()).map(|(m, s)| alpha * m + (1.0 - alpha) * s).collect();
        Image::new(self.0.width(), self.0.height(), data).map(Image::clamp01)
    }
}

/// Roberts-cross gradient magnitude, `sqrt((B⋆h_x)² + (B⋆h_y)²)` with
/// `h_x = [[1,0],[0,-1]]`, `h_y = [[0,1],[-1,0]]` applied as correlation
/// anchored at the top-left sample. The last row and column replicate.
/// Values lie in `[0, √2]`.
pub fn gradient_magnitude(img: &Image) -> Image {
    let (w, h) = img.dims();
    let at = |x: usize, y: usize| img.get(x.min(w - 1), y.min(h - 1));
    let mut out = vec![0f32; w * h];
    par::for_each_row(&mut out, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            let gx = at(x, y) - at(x + 1, y + 1);
            let gy = at(x + 1, y) - at(x, y + 1);
            *o = (gx * gx + gy * gy).sqrt();
        }
    });
    Image::from_parts(w, h, out)
}

/// `T`: per-pixel maximum over the normalized sorted high-frequency layers of
/// `scale_count` patch scales, using the default layer set.
pub fn hifst_max_layer(g: &Image, scale_count: usize) -> Result<Image> {
    hifst_max_layer_with(g, scale_count, LayerSet::default())
}

pub fn hifst_max_layer_with(g: &Image, scale_count: usize, layers: LayerSet) -> Result<Image> {
    let layout = layout(g, scale_count, layers)?;
    let stats = layout.stats(g);
    Ok(layout.max_normalized(g, &stats))
}

fn layout(g: &Image, scale_count: usize, layers: LayerSet) -> Result<Layout> {
    if scale_count == 0 {
        return Err(Error::param("scale count must be >= 1"));
    }
    Layout::for_image(g, &patch_sizes(scale_count), layers)
}

/// Per-layer extremes of one gradient image, for pooling over a stack.
pub fn hifst_layer_stats(g: &Image, scale_count: usize, layers: LayerSet) -> Result<LayerStats> {
    Ok(layout(g, scale_count, layers)?.stats(g))
}

/// `T` normalized with externally supplied (e.g. stack-wide) layer extremes.
pub fn hifst_max_layer_normalized_by(
    g: &Image,
    scale_count: usize,
    layers: LayerSet,
    stats: &LayerStats,
) -> Result<Image> {
    let layout = layout(g, scale_count, layers)?;
    if stats.layer_count() != layout.layer_count() {
        return Err(Error::param(format!(
            "stats hold {} layers, layout needs {}",
            stats.layer_count(),
            layout.layer_count()
        )));
    }
    Ok(layout.max_normalized(g, stats))
}

/// All `(M²+M)/2` normalized layers of a single patch size `M` (odd, >= 3).
pub fn hifst_layers(g: &Image, patch: usize) -> Result<Vec<Image>> {
    if patch < 3 || patch.is_multiple_of(2) {
        return Err(Error::param(format!("patch size must be odd and >= 3, got {patch}")));
    }
    Ok(Layout::for_image(g, &[patch], LayerSet::PerScaleAll)?.all_layers(g))
}

/// Local Shannon entropy of `T` over a `patch×patch` window, rescaled by
/// `1 / ln(patch²)` into `[0, 1]`.
///
/// Window members are weighted by `P = T / ΣT`; an all-zero window scores 0.
/// Uses `-Σ P ln P = ln S - (Σ T ln T) / S` with `S = ΣT`.
pub fn entropy_weight(t: &Image, patch: usize) -> Result<Image> {
    check_entropy_patch(patch)?;
    let (w, h) = t.dims();
    let r = patch / 2;
    let n = (patch * patch) as f64;
    let vals: Vec<f64> = t.data().iter().map(|&v| v.max(0.0) as f64).collect();
    let tlogt: Vec<f64> = vals.iter().map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 }).collect();
    let s = box_mean(&vals, w, h, r);
    let q = box_mean(&tlogt, w, h, r);
    let norm = n.ln();
    let out = s
        .iter()
        .zip(&q)
        .map(|(&s, &q)| {
            let (s, q) = (s * n, q * n);
            if s > 0.0 {
                ((s.ln() - q / s) / norm).clamp(0.0, 1.0) as f32
            } else {
                0.0
            }
        })
        .collect();
    Ok(Image::from_parts(w, h, out))
}

/// Intermediate rasters of one blur map computation.
#[derive(Clone, Debug)]
pub struct BlurMapStages {
    pub denoised: Image,
    pub gradient: Image,
    pub max_layer: Image,
    pub entropy: Image,
    /// `T ⊙ ω`, before smoothing.
    pub weighted: Image,
    pub map: BlurMap,
}

pub fn blur_detection_map(img: &Image, params: &HifstParams) -> Result<BlurMap> {
    Ok(blur_detection_stages(img, params)?.map)
}

pub fn blur_detection_stages(img: &Image, params: &HifstParams) -> Result<BlurMapStages> {
    params.validate()?;
    let (denoised, gradient) = denoise_and_gradient(img, params)?;
    let layout = layout(&gradient, params.scale_count, params.layers)?;
    let stats = layout.stats(&gradient);
    let max_layer = layout.max_normalized(&gradient, &stats);
    finish(img, denoised, gradient, max_layer, params)
}

/// Blur maps for every slice of a stack with layer extremes pooled over all
/// slices, so that map values (and hence in-focus scores) share one scale.
pub fn blur_detection_maps(slices: &[Image], params: &HifstParams) -> Result<Vec<BlurMap>> {
    params.validate()?;
    let first = slices.first().ok_or(Error::EmptyStack)?;
    if slices.iter().any(|s| !s.same_dims(first)) {
        return Err(Error::Stack("slices differ in size".into()));
    }
    let layout = layout(first, params.scale_count, params.layers)?;
    let prepared =
        par::map_slice(slices, |s| denoise_and_gradient(s, params)).into_iter().collect::<Result<Vec<_>>>()?;
    let mut stats = LayerStats::empty(layout.layer_count());
    for s in par::map_slice(&prepared, |(_, g)| layout.stats(g)) {
        stats.merge(&s);
    }
    let maps = par::map_indexed(slices.len(), |z| {
        let (denoised, gradient) = &prepared[z];
        let t = layout.max_normalized(gradient, &stats);
        finish(&slices[z], denoised.clone(), gradient.clone(), t, params).map(|s| s.map)
    });
    maps.into_iter().collect()
}

fn denoise_and_gradient(img: &Image, params: &HifstParams) -> Result<(Image, Image)> {
    let denoised = gaussian_filter(img, params.sigma)?;
    let gradient = gradient_magnitude(&denoised);
    Ok((denoised, gradient))
}

fn finish(
    img: &Image,
    denoised: Image,
    gradient: Image,
    max_layer: Image,
    params: &HifstParams,
) -> Result<BlurMapStages> {
    let entropy = entropy_weight(&max_layer, params.entropy_patch)?;
    let weighted_data = max_layer.data().iter().zip(entropy.data()).map(|(t, w)| t * w).collect();
    let weighted = Image::from_parts(img.width(), img.height(), weighted_data);
    let smoothed = guided_filter(&weighted, img, params.smoothing_radius, params.smoothing_eps)?;
    Ok(BlurMapStages { denoised, gradient, max_layer, entropy, weighted, map: BlurMap::new(smoothed) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn checker(w: usize, h: usize, period: usize) -> Image {
        Image::from_fn(w, h, |x, y| if (x / period + y / period).is_multiple_of(2) { 0.8 } else { 0.2 }).unwrap()
    }

    #[test]
    fn roberts_cross_hand_example() {
        let img = Image::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let g = gradient_magnitude(&img);
        assert_abs_diff_eq!(g.get(0, 0), 2f32.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn gradient_ignores_offset_and_constants() {
        let img = checker(9, 7, 2).map(|v| v * 0.5);
        let shifted = img.map(|v| v + 0.25);
        let (a, b) = (gradient_magnitude(&img), gradient_magnitude(&shifted));
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-6);
        }
        let flat = gradient_magnitude(&Image::filled(5, 5, 0.3).unwrap());
        assert!(flat.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_gradient_gives_zero_t() {
        let g = Image::filled(40, 40, 0.0).unwrap();
        let t = hifst_max_layer(&g, 2).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
        let layers = hifst_layers(&g, 7).unwrap();
        assert_eq!(layers.len(), 28);
        assert!(layers.iter().all(|l| l.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn t_reaches_one_and_stays_in_range() {
        let g = gradient_magnitude(&checker(40, 36, 3));
        for set in [LayerSet::PerScaleAll, LayerSet::FirstSumM] {
            let t = hifst_max_layer_with(&g, 2, set).unwrap();
            assert!(t.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(t.data().contains(&1.0));
        }
    }

    #[test]
    fn too_many_scales_is_parameter_error() {
        let g = Image::filled(20, 40, 0.5).unwrap();
        assert!(matches!(hifst_max_layer(&g, 3), Err(Error::Param(_))));
        assert!(hifst_max_layer(&g, 2).is_ok());
        assert!(matches!(hifst_max_layer(&g, 0), Err(Error::Param(_))));
    }

    #[test]
    fn entropy_cases() {
        let uniform = Image::filled(9, 9, 0.4).unwrap();
        let e = entropy_weight(&uniform, 7).unwrap();
        assert!(e.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));

        let zero = Image::filled(9, 9, 0.0).unwrap();
        assert!(entropy_weight(&zero, 7).unwrap().data().iter().all(|&v| v == 0.0));

        let spike = Image::from_fn(15, 15, |x, y| if (x, y) == (7, 7) { 0.9 } else { 0.0 }).unwrap();
        let e = entropy_weight(&spike, 7).unwrap();
        assert_abs_diff_eq!(e.get(7, 7), 0.0, epsilon = 1e-6);

        assert!(entropy_weight(&uniform, 4).is_err());
        assert!(entropy_weight(&uniform, 1).is_err());
    }

    #[test]
    fn entropy_matches_direct_sum() {
        let t = Image::from_fn(11, 10, |x, y| ((x * 5 + y * 3) % 7) as f32 / 7.0).unwrap();
        let fast = entropy_weight(&t, 5).unwrap();
        for y in 0..10 {
            for x in 0..11 {
                let mut vals = Vec::new();
                for dy in -2isize..=2 {
                    for dx in -2isize..=2 {
                        vals.push(
                            t.get(crate::image::mirror(x as isize + dx, 11), crate::image::mirror(y as isize + dy, 10))
                                as f64,
                        );
                    }
                }
                let s: f64 = vals.iter().sum();
                let h: f64 = vals.iter().filter(|&&v| v > 0.0).map(|&v| -(v / s) * (v / s).ln()).sum();
                assert_abs_diff_eq!(fast.get(x, y) as f64, h / 25f64.ln(), epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn constant_image_gives_zero_map() {
        let img = Image::filled(40, 40, 0.6).unwrap();
        let p = HifstParams { scale_count: 2, ..Default::default() };
        let d = blur_detection_map(&img, &p).unwrap();
        assert!(d.image().data().iter().all(|&v| v.abs() < 1e-6));
    }

    #[test]
    fn weighted_never_exceeds_t() {
        let img = checker(48, 40, 4);
        let p = HifstParams { scale_count: 2, ..Default::default() };
        let st = blur_detection_stages(&img, &p).unwrap();
        for (d, t) in st.weighted.data().iter().zip(st.max_layer.data()) {
            assert!(*d <= t.min(1.0));
        }
        assert!(st.map.image().data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn params_validation() {
        let ok = HifstParams::default();
        assert!(ok.validate().is_ok());
        for bad in [
            HifstParams { sigma: 0.0, ..ok.clone() },
            HifstParams { scale_count: 0, ..ok.clone() },
            HifstParams { entropy_patch: 6, ..ok.clone() },
            HifstParams { smoothing_eps: 0.0, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Param(_))));
        }
    }

    #[test]
    fn joint_maps_of_one_slice_equal_single_map() {
        let img = checker(40, 40, 5);
        let p = HifstParams { scale_count: 2, ..Default::default() };
        let single = blur_detection_map(&img, &p).unwrap();
        let joint = blur_detection_maps(std::slice::from_ref(&img), &p).unwrap();
        assert_eq!(joint[0], single);
    }
}
