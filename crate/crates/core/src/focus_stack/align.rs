//! Feature-based registration of slices onto a reference slice.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{detect_features, ratio_matches, Feature};
use crate::config;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::image_io::ZStack;
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformModel {
    Identity,
    Translation,
    Affine,
}

/// Maps slice coordinates onto reference coordinates:
/// `[x_ref, y_ref] = M · [x, y, 1]` with `M` the 2×3 `matrix`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignTransform {
    pub model: TransformModel,
    pub matrix: [[f64; 3]; 2],
    pub inlier_count: usize,
}

impl AlignTransform {
    pub const IDENTITY: AlignTransform =
        AlignTransform { model: TransformModel::Identity, matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], inlier_count: 0 };

    pub fn translation(tx: f64, ty: f64, inliers: usize) -> Self {
        Self { model: TransformModel::Translation, matrix: [[1.0, 0.0, tx], [0.0, 1.0, ty]], inlier_count: inliers }
    }

    pub fn offset(&self) -> (f64, f64) {
        (self.matrix[0][2], self.matrix[1][2])
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.matrix;
        (m[0][0] * x + m[0][1] * y + m[0][2], m[1][0] * x + m[1][1] * y + m[1][2])
    }

    /// Inverse mapping (reference → slice), if the linear part is invertible.
    pub fn inverse(&self) -> Option<AlignTransform> {
        let [[a, b, tx], [c, d, ty]] = self.matrix;
        let det = a * d - b * c;
        if det.abs() < 1e-9 || !det.is_finite() {
            return None;
        }
        let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
        Some(AlignTransform {
            model: self.model,
            matrix: [[ia, ib, -(ia * tx + ib * ty)], [ic, id, -(ic * tx + id * ty)]],
            inlier_count: self.inlier_count,
        })
    }
}

/// Registration settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignParams {
    pub seed: u64,
    pub iterations: usize,
    pub inlier_px: f64,
    pub ratio: f32,
    pub min_translation_inliers: usize,
    pub min_matches: usize,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self {
            seed: config::RANSAC_SEED,
            iterations: config::RANSAC_ITERATIONS,
            inlier_px: config::RANSAC_INLIER_PX,
            ratio: config::LOWE_RATIO,
            min_translation_inliers: config::MIN_TRANSLATION_INLIERS,
            min_matches: config::MIN_MATCHES,
        }
    }
}

/// Result of registering a stack.
#[derive(Clone, Debug)]
pub struct Alignment {
    pub stack: ZStack,
    pub transforms: Vec<AlignTransform>,
    pub warnings: Vec<String>,
}

/// Warps every non-reference slice onto slice `reference`. Poor alignment is
/// reported through warnings rather than errors.
pub fn align_slices(stack: &ZStack, reference: usize, params: &AlignParams) -> Result<Alignment> {
    if reference >= stack.z_count() {
        return Err(Error::param(format!("reference slice {reference} out of range for {} slices", stack.z_count())));
    }
    let features: Vec<Vec<Feature>> = par::map_slice(stack.slices(), detect_features);
    let results: Vec<(AlignTransform, Option<String>)> = par::map_indexed(stack.z_count(), |z| {
        if z == reference {
            return (AlignTransform::IDENTITY, None);
        }
        estimate(&features[z], &features[reference], params, z as u64)
    });
    let mut warnings = Vec::new();
    let mut transforms = Vec::with_capacity(results.len());
    for (z, (t, warning)) in results.into_iter().enumerate() {
        if let Some(w) = warning {
            warnings.push(format!("slice {z}: {w}"));
        }
        transforms.push(t);
    }
    let warped: Vec<Image> = par::map_indexed(stack.z_count(), |z| warp(stack.slice(z), &transforms[z]));
    Ok(Alignment { stack: ZStack::new(warped, stack.source_ids().to_vec())?, transforms, warnings })
}

type Point = (f64, f64);

fn estimate(src: &[Feature], dst: &[Feature], params: &AlignParams, stream: u64) -> (AlignTransform, Option<String>) {
    let matches: Vec<(Point, Point)> = ratio_matches(src, dst, params.ratio)
        .into_iter()
        .map(|(q, t)| {
            let (a, b) = (&src[q].kp, &dst[t].kp);
            ((a.x as f64, a.y as f64), (b.x as f64, b.y as f64))
        })
        .collect();
    if matches.len() < params.min_matches {
        return (AlignTransform::IDENTITY, Some(format!("only {} feature matches; keeping identity", matches.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(stream);
    let thr2 = params.inlier_px * params.inlier_px;

    let translation = ransac_translation(&matches, params.iterations, thr2, &mut rng);
    if translation.inlier_count >= params.min_translation_inliers {
        return (translation, None);
    }
    match ransac_affine(&matches, params.iterations, thr2, &mut rng) {
        Some(affine) if affine.inlier_count >= params.min_matches => (affine, None),
        _ => (
            AlignTransform::IDENTITY,
            Some(format!("no consistent motion among {} matches; keeping identity", matches.len())),
        ),
    }
}

fn residual2(t: &AlignTransform, (s, d): &(Point, Point)) -> f64 {
    let (x, y) = t.apply(s.0, s.1);
    (x - d.0).powi(2) + (y - d.1).powi(2)
}

fn inliers<'a>(t: &'a AlignTransform, m: &'a [(Point, Point)], thr2: f64) -> impl Iterator<Item = &'a (Point, Point)> {
    m.iter().filter(move |p| residual2(t, p) <= thr2)
}

fn ransac_translation(m: &[(Point, Point)], iterations: usize, thr2: f64, rng: &mut ChaCha8Rng) -> AlignTransform {
    let mut best = AlignTransform::translation(0.0, 0.0, 0);
    let mut best_count = 0;
    for _ in 0..iterations {
        let (s, d) = m[rng.random_range(0..m.len())];
        let t = AlignTransform::translation(d.0 - s.0, d.1 - s.1, 0);
        let count = inliers(&t, m, thr2).count();
        if count > best_count {
            best_count = count;
            best = t;
        }
    }
    // Least-squares refit: the mean displacement of the inliers.
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (s, d) in inliers(&best, m, thr2) {
        sx += d.0 - s.0;
        sy += d.1 - s.1;
        n += 1;
    }
    if n == 0 {
        return best;
    }
    let refit = AlignTransform::translation(sx / n as f64, sy / n as f64, 0);
    let count = inliers(&refit, m, thr2).count();
    AlignTransform { inlier_count: count, ..refit }
}

/// Least-squares affine fit; `None` if the points are degenerate.
fn fit_affine<'a>(pairs: impl Iterator<Item = &'a (Point, Point)>) -> Option<AlignTransform> {
    // Normal equations A^T A p = A^T b with rows [x, y, 1], shared by both outputs.
    let mut ata = [[0f64; 3]; 3];
    let (mut atx, mut aty) = ([0f64; 3], [0f64; 3]);
    for (s, d) in pairs {
        let row = [s.0, s.1, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            atx[i] += row[i] * d.0;
            aty[i] += row[i] * d.1;
        }
    }
    let px = solve3(ata, atx)?;
    let py = solve3(ata, aty)?;
    Some(AlignTransform { model: TransformModel::Affine, matrix: [px, py], inlier_count: 0 })
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    let scale = a.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max).powi(3);
    if !(d.abs() > 1e-9 * scale.max(1e-300)) {
        return None;
    }
    let mut out = [0f64; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][c] = b[r];
        }
        *o = det(m) / d;
    }
    Some(out)
}

fn ransac_affine(m: &[(Point, Point)], iterations: usize, thr2: f64, rng: &mut ChaCha8Rng) -> Option<AlignTransform> {
    if m.len() < 3 {
        return None;
    }
    let mut best: Option<(AlignTransform, usize)> = None;
    for _ in 0..iterations {
        let i = rng.random_range(0..m.len());
        let j = rng.random_range(0..m.len());
        let k = rng.random_range(0..m.len());
        if i == j || j == k || i == k {
            continue;
        }
        let sample = [m[i], m[j], m[k]];
        let Some(t) = fit_affine(sample.iter()) else {
            continue;
        };
        let count = inliers(&t, m, thr2).count();
        if best.as_ref().is_none_or(|(_, c)| count > *c) {
            best = Some((t, count));
        }
    }
    let (t, _) = best?;
    let refit = fit_affine(inliers(&t, m, thr2)).unwrap_or(t);
    let count = inliers(&refit, m, thr2).count();
    Some(AlignTransform { inlier_count: count, ..refit })
}

/// Resamples `img` into the reference frame with bilinear interpolation and
/// edge clamping. Identity transforms return an exact copy.
pub fn warp(img: &Image, t: &AlignTransform) -> Image {
    if t.model == TransformModel::Identity {
        return img.clone();
    }
    let Some(inv) = t.inverse() else {
        return img.clone();
    };
    let (w, h) = img.dims();
    let mut out = vec![0f32; w * h];
    par::for_each_row(&mut out, w, |y, row| {
        for (x, dst) in row.iter_mut().enumerate() {
            let (sx, sy) = inv.apply(x as f64, y as f64);
            *dst = bilinear(img, sx, sy);
        }
    });
    Image::from_parts(w, h, out).clamp01()
}

fn bilinear(img: &Image, x: f64, y: f64) -> f32 {
    let (w, h) = img.dims();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = ((x - x0 as f64) as f32, (y - y0 as f64) as f32);
    let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
    let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{render_pattern, shift_image, Pattern};

    #[test]
    fn inverse_round_trips() {
        let t = AlignTransform {
            model: TransformModel::Affine,
            matrix: [[1.1, 0.2, 3.0], [-0.1, 0.9, -4.0]],
            inlier_count: 7,
        };
        let inv = t.inverse().unwrap();
        let (x, y) = t.apply(5.0, 7.0);
        let (bx, by) = inv.apply(x, y);
        assert!((bx - 5.0).abs() < 1e-9 && (by - 7.0).abs() < 1e-9);
    }

    #[test]
    fn affine_fit_recovers_exact_model() {
        let truth = AlignTransform {
            model: TransformModel::Affine,
            matrix: [[0.95, 0.05, 2.0], [-0.03, 1.02, -1.5]],
            inlier_count: 0,
        };
        let pts: Vec<(Point, Point)> = [(0.0, 0.0), (10.0, 3.0), (4.0, 12.0), (20.0, 20.0)]
            .iter()
            .map(|&(x, y)| ((x, y), truth.apply(x, y)))
            .collect();
        let fit = fit_affine(pts.iter()).unwrap();
        for r in 0..2 {
            for c in 0..3 {
                assert!((fit.matrix[r][c] - truth.matrix[r][c]).abs() < 1e-9);
            }
        }
        let collinear = [((0.0, 0.0), (0.0, 0.0)), ((1.0, 1.0), (1.0, 1.0)), ((2.0, 2.0), (2.0, 2.0))];
        assert!(fit_affine(collinear.iter()).is_none());
    }

    #[test]
    fn translation_warp_is_exact_for_whole_pixels() {
        let img = render_pattern(Pattern::Checker, 20, 20, 2);
        let moved = warp(&img, &AlignTransform::translation(2.0, 1.0, 0));
        assert_eq!(moved.get(10, 10), img.get(8, 9));
    }

    #[test]
    fn recovers_known_shift() {
        let img = render_pattern(Pattern::Blobs, 128, 128, 4);
        let moved = shift_image(&img, 3, -2);
        let stack = ZStack::from_slices(vec![img.clone(), moved]).unwrap();
        let a = align_slices(&stack, 0, &AlignParams::default()).unwrap();
        let t = a.transforms[1];
        assert_eq!(t.model, TransformModel::Translation);
        let (tx, ty) = t.offset();
        assert!((tx + 3.0).abs() <= 0.5 && (ty - 2.0).abs() <= 0.5, "{tx} {ty}");
        assert_eq!(a.transforms[0], AlignTransform::IDENTITY);
        assert!(a.warnings.is_empty());
    }

    #[test]
    fn featureless_slices_keep_identity_with_warning() {
        let flat = Image::filled(64, 64, 0.3).unwrap();
        let stack = ZStack::from_slices(vec![flat.clone(), flat.clone(), flat]).unwrap();
        let a = align_slices(&stack, 1, &AlignParams::default()).unwrap();
        assert!(a.transforms.iter().all(|t| *t == AlignTransform::IDENTITY));
        assert_eq!(a.warnings.len(), 2);
        assert!(matches!(align_slices(&stack, 3, &AlignParams::default()), Err(Error::Param(_))));
    }
}
