//! Training-objective numerics: the supervised instance-segmentation terms
//! (classification log loss, smooth-L1 box regression, binary mask cross
//! entropy), the confidence-gated consistency loss between weak- and
//! strong-augmentation predictions, and their weighted sum.
//!
//! Everything is computed in `f64` with a fixed reduction order, so results
//! are reproducible regardless of the thread count.
//!
//! The consistency loss sums over gated pixels and divides by the batch size
//! only (no per-pixel averaging). By default it is the hard pseudo-label cross
//! entropy `−log p_s[argmax p_w]`; [`ConsistencyOptions`] selects a soft
//! cross entropy or swaps which prediction provides the target.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::par;
use crate::pfm::{read_float_map_planes, save_float_map_planes};

/// Tolerance on per-pixel probability sums.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// Per-pixel class probabilities, `height × width × classes`, pixel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap {
    width: usize,
    height: usize,
    classes: usize,
    data: Vec<f64>,
}

impl ProbMap {
    pub fn new(width: usize, height: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::validation("probability map must have positive size"));
        }
        if classes < 2 {
            return Err(Error::validation(format!("need at least 2 classes, got {classes}")));
        }
        if data.len() != width * height * classes {
            return Err(Error::validation(format!(
                "{} values for a {width}x{height}x{classes} probability map",
                data.len()
            )));
        }
        for (i, px) in data.chunks_exact(classes).enumerate() {
            if px.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::validation(format!("pixel {i}: probability outside [0, 1]")));
            }
            let sum: f64 = px.iter().sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::validation(format!("pixel {i}: probabilities sum to {sum}")));
            }
        }
        Ok(Self { width, height, classes, data })
    }

    /// Builds a map from one plane per class.
    pub fn from_planes(planes: &[Image]) -> Result<Self> {
        let first = planes.first().ok_or_else(|| Error::validation("no class planes"))?;
        if planes.iter().any(|p| !p.same_dims(first)) {
            return Err(Error::validation("class planes differ in size"));
        }
        let (w, h) = first.dims();
        let c = planes.len();
        let mut data = vec![0f64; w * h * c];
        for (k, plane) in planes.iter().enumerate() {
            for (i, &v) in plane.data().iter().enumerate() {
                data[i * c + k] = v as f64;
            }
        }
        Self::new(w, h, c, data)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Probability vector of pixel `i` (row-major index).
    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.classes)
    }

    fn same_shape(&self, other: &ProbMap) -> bool {
        self.width == other.width && self.height == other.height && self.classes == other.classes
    }
}

#[derive(Serialize, Deserialize)]
struct BatchSidecar {
    classes: usize,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Reads a batch stored as `B × C` PFM planes back to back (item-major: all
/// classes of item 0, then item 1, ...) with the class count in the sidecar
/// `<path>.json` as `{"classes": C}`.
pub fn load_prob_batch(path: impl AsRef<Path>) -> Result<Vec<ProbMap>> {
    let path = path.as_ref();
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: BatchSidecar =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", side.display())))?;
    if meta.classes < 2 {
        return Err(Error::validation(format!("{}: need at least 2 classes, got {}", side.display(), meta.classes)));
    }
    let planes = read_float_map_planes(path)?;
    if planes.is_empty() || planes.len() % meta.classes != 0 {
        return Err(Error::validation(format!(
            "{}: {} planes is not a positive multiple of {} classes",
            path.display(),
            planes.len(),
            meta.classes
        )));
    }
    planes
        .chunks_exact(meta.classes)
        .enumerate()
        .map(|(b, item)| {
            ProbMap::from_planes(item).map_err(|e| match e {
                Error::Validation(m) => Error::validation(format!("{} item {b}: {m}", path.display())),
                other => other,
            })
        })
        .collect()
}

/// Writes a batch in the layout read by [`load_prob_batch`]. Probabilities are
/// stored as 32-bit floats.
pub fn save_prob_batch(batch: &[ProbMap], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let first = batch.first().ok_or_else(|| Error::validation("empty batch"))?;
    let classes = first.classes;
    if batch.iter().any(|m| m.classes != classes) {
        return Err(Error::validation("batch items differ in class count"));
    }
    let mut planes = Vec::with_capacity(batch.len() * classes);
    for m in batch {
        for c in 0..classes {
            let data = m.pixels().map(|p| p[c] as f32).collect();
            planes.push(Image::from_raw(m.width, m.height, data)?);
        }
    }
    save_float_map_planes(&planes, path)?;
    let side = sidecar_path(path);
    let text = serde_json::to_string(&BatchSidecar { classes }).expect("sidecar serializes");
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::validation(format!("probability {p} outside [0, 1]")))
    }
}

/// Mean over items of `−ln max(p[label], floor)`.
pub fn log_loss<P: AsRef<[f64]>>(probs: &[P], labels: &[usize]) -> Result<f64> {
    check_log_loss(probs, labels)?;
    let sum: f64 = probs.iter().zip(labels).map(|(p, &l)| -p.as_ref()[l].max(config::PROB_FLOOR).ln()).sum();
    Ok(sum / probs.len() as f64)
}

/// Gradient of [`log_loss`] with respect to every probability; only the true
/// class entries are non-zero (and those are zero where the floor is active).
pub fn log_loss_grad<P: AsRef<[f64]>>(probs: &[P], labels: &[usize]) -> Result<Vec<Vec<f64>>> {
    check_log_loss(probs, labels)?;
    let n = probs.len() as f64;
    Ok(probs
        .iter()
        .zip(labels)
        .map(|(p, &l)| {
            let p = p.as_ref();
            let mut g = vec![0.0; p.len()];
            if p[l] > config::PROB_FLOOR {
                g[l] = -1.0 / (n * p[l]);
            }
            g
        })
        .collect())
}

fn check_log_loss<P: AsRef<[f64]>>(probs: &[P], labels: &[usize]) -> Result<()> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(Error::validation(format!("{} probability vectors for {} labels", probs.len(), labels.len())));
    }
    for (i, (p, &l)) in probs.iter().zip(labels).enumerate() {
        let p = p.as_ref();
        if l >= p.len() {
            return Err(Error::validation(format!("item {i}: label {l} out of range for {} classes", p.len())));
        }
        p.iter().try_for_each(|&v| check_probability(v))?;
    }
    Ok(())
}

/// Mean over coordinates of the Huber-style smooth-L1 penalty with unit knee.
pub fn smooth_l1(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::validation(format!("{} predicted vs {} target coordinates", pred.len(), target.len())));
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = (p - t).abs();
            if d < 1.0 {
                0.5 * d * d
            } else {
                d - 0.5
            }
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

fn clamp_bce(p: f64) -> f64 {
    p.clamp(config::PROB_FLOOR, 1.0 - config::PROB_FLOOR)
}

fn check_bce(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::validation(format!(
            "mask shapes differ: {} predicted vs {} target pixels",
            pred.len(),
            target.len()
        )));
    }
    pred.iter().try_for_each(|&p| check_probability(p))?;
    if let Some(t) = target.iter().find(|&&t| t != 0.0 && t != 1.0) {
        return Err(Error::validation(format!("mask target {t} is not binary")));
    }
    Ok(())
}

/// Mean binary cross entropy between foreground probabilities and a 0/1
/// mask, with probabilities clamped to `[floor, 1 − floor]`.
pub fn bce_mask_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_bce(pred, target)?;
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = clamp_bce(p);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Gradient of [`bce_mask_loss`] with respect to each prediction (zero where
/// the clamp is active).
pub fn bce_mask_loss_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    check_bce(pred, target)?;
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| if clamp_bce(p) != p { 0.0 } else { (-t / p + (1.0 - t) / (1.0 - p)) / n })
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossEntropy {
    /// `−log q[argmax p]`.
    #[default]
    Hard,
    /// `−Σ_c p_c log q_c`.
    Soft,
}

/// Which prediction supplies the target distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSource {
    /// Weak-branch prediction is the target, strong-branch is scored.
    #[default]
    Weak,
    Strong,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsistencyOptions {
    pub cross_entropy: CrossEntropy,
    pub target: TargetSource,
    /// Probabilities are floored at this value before taking logarithms.
    pub floor: f64,
}

impl Default for ConsistencyOptions {
    fn default() -> Self {
        Self { cross_entropy: CrossEntropy::Hard, target: TargetSource::Weak, floor: config::PROB_FLOOR }
    }
}

/// Index of the largest entry; the first one wins ties.
fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

fn max_prob(p: &[f64]) -> f64 {
    p.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Confidence-gated consistency loss with the default options.
pub fn consistency_loss(weak: &[ProbMap], strong: &[ProbMap], tau: f64) -> Result<f64> {
    consistency_loss_with(weak, strong, tau, &ConsistencyOptions::default())
}

/// Sum over pixels with `max p_w ≥ tau` of the cross entropy between the two
/// predictions, divided by the batch size.
pub fn consistency_loss_with(weak: &[ProbMap], strong: &[ProbMap], tau: f64, opts: &ConsistencyOptions) -> Result<f64> {
    if weak.is_empty() || weak.len() != strong.len() {
        return Err(Error::validation(format!(
            "batch sizes differ or are empty: {} weak vs {} strong",
            weak.len(),
            strong.len()
        )));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::param(format!("tau must be in (0, 1], got {tau}")));
    }
    if !(opts.floor > 0.0 && opts.floor < 1.0) {
        return Err(Error::param(format!("probability floor must be in (0, 1), got {}", opts.floor)));
    }
    if let Some(i) = (0..weak.len()).find(|&i| !weak[i].same_shape(&strong[i])) {
        return Err(Error::validation(format!("batch item {i}: weak and strong shapes differ")));
    }
    let per_item = par::map_indexed(weak.len(), |i| {
        let mut sum = 0.0;
        for (pw, ps) in weak[i].pixels().zip(strong[i].pixels()) {
            if max_prob(pw) < tau {
                continue;
            }
            let (target, scored) = match opts.target {
                TargetSource::Weak => (pw, ps),
                TargetSource::Strong => (ps, pw),
            };
            let log_q = |c: usize| scored[c].max(opts.floor).ln();
            sum += match opts.cross_entropy {
                CrossEntropy::Hard => -log_q(argmax(target)),
                CrossEntropy::Soft => -(0..target.len()).map(|c| target[c] * log_q(c)).sum::<f64>(),
            };
        }
        sum
    });
    Ok(per_item.iter().sum::<f64>() / weak.len() as f64)
}

/// Supervised components, unsupervised term and their weighted total.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_cls: f64,
    pub l_box: f64,
    pub l_mask: f64,
    pub l_sup: f64,
    pub l_u: f64,
    pub total: f64,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

impl LossBreakdown {
    /// Records the gate threshold used for `l_u`.
    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = Some(tau);
        self
    }
}

/// `l_sup = l_cls + l_box + l_mask`, `total = l_sup + lambda · l_u`.
pub fn total_loss(l_cls: f64, l_box: f64, l_mask: f64, l_u: f64, lambda: f64) -> Result<LossBreakdown> {
    for (name, v) in [("l_cls", l_cls), ("l_box", l_box), ("l_mask", l_mask), ("l_u", l_u), ("lambda", lambda)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::validation(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    let l_sup = l_cls + l_box + l_mask;
    Ok(LossBreakdown { l_cls, l_box, l_mask, l_sup, l_u, total: l_sup + lambda * l_u, lambda, tau: None })
}
