//! Reliability of pseudo-labelled samples across training checkpoints.
//!
//! A sample's stability is the mean, over the earlier checkpoints, of the
//! mean IoU between that checkpoint's mask and the final checkpoint's mask.
//! Averaging (rather than summing) keeps the score in `[0, 1]` for any number
//! of checkpoints, so one threshold works for all. Masks are semantic: pixel
//! value = class id, 0 = background.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMask {
    width: usize,
    height: usize,
    class_count: usize,
    data: Vec<u8>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, class_count: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::validation("mask must have positive size"));
        }
        if data.len() != width * height {
            return Err(Error::validation(format!("{} labels for a {width}x{height} mask", data.len())));
        }
        if class_count == 0 || class_count > 256 {
            return Err(Error::validation(format!("class count must be in 1..=256, got {class_count}")));
        }
        if let Some(&bad) = data.iter().find(|&&c| c as usize >= class_count) {
            return Err(Error::validation(format!("label {bad} out of range for {class_count} classes")));
        }
        Ok(Self { width, height, class_count, data })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    fn check_compatible(&self, other: &LabelMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::validation(format!("mask sizes differ: {:?} vs {:?}", self.dims(), other.dims())));
        }
        if self.class_count != other.class_count {
            return Err(Error::validation(format!(
                "class counts differ: {} vs {}",
                self.class_count, other.class_count
            )));
        }
        Ok(())
    }
}

/// Mean IoU over non-background classes present in either mask; two masks
/// without any foreground agree perfectly (1.0).
pub fn mean_iou(a: &LabelMask, b: &LabelMask) -> Result<f64> {
    a.check_compatible(b)?;
    let n = a.class_count;
    let (mut inter, mut union) = (vec![0u64; n], vec![0u64; n]);
    for (&ca, &cb) in a.data.iter().zip(&b.data) {
        let (ca, cb) = (ca as usize, cb as usize);
        if ca == cb {
            inter[ca] += 1;
            union[ca] += 1;
        } else {
            union[ca] += 1;
            union[cb] += 1;
        }
    }
    let (mut sum, mut present) = (0.0, 0usize);
    for c in 1..n {
        if union[c] > 0 {
            sum += inter[c] as f64 / union[c] as f64;
            present += 1;
        }
    }
    Ok(if present == 0 { 1.0 } else { sum / present as f64 })
}

/// Mean over `j < K` of `mean_iou(M_j, M_K)`, where `M_K` is the last mask.
pub fn stability_score(checkpoints: &[LabelMask]) -> Result<f64> {
    let Some((last, earlier)) = checkpoints.split_last().filter(|(_, e)| !e.is_empty()) else {
        return Err(Error::param(format!("stability needs at least 2 checkpoints, got {}", checkpoints.len())));
    };
    let mut raw = 0.0;
    for m in earlier {
        raw += mean_iou(m, last)?;
    }
    Ok(raw / earlier.len() as f64)
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub sample_id: String,
    /// Number of slices the sample's stacked image was fused from.
    pub slice_count: usize,
    /// Masks from successive checkpoints, final checkpoint last.
    pub checkpoints: Vec<LabelMask>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub sample_id: String,
    pub slice_count: usize,
    pub score: f64,
    pub selected: bool,
}

/// Scores every sample, orders by descending score (ties by `sample_id`) and
/// marks samples with `score > tau` as selected.
pub fn select_reliable(samples: &[Sample], tau: f64) -> Result<Vec<StabilityRecord>> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::param(format!("tau must be in [0, 1], got {tau}")));
    }
    let scores = par::map_slice(samples, |s| {
        stability_score(&s.checkpoints).map_err(|e| match e {
            Error::Validation(msg) => Error::Validation(format!("sample {}: {msg}", s.sample_id)),
            Error::Param(msg) => Error::Param(format!("sample {}: {msg}", s.sample_id)),
            other => other,
        })
    });
    let mut records = samples
        .iter()
        .zip(scores)
        .map(|(s, score)| {
            let score = score?;
            Ok(StabilityRecord {
                sample_id: s.sample_id.clone(),
                slice_count: s.slice_count,
                score,
                selected: score > tau,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| {
        b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal).then_with(|| a.sample_id.cmp(&b.sample_id))
    });
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(data: &[u8]) -> LabelMask {
        LabelMask::new(data.len(), 1, 3, data.to_vec()).unwrap()
    }

    fn sample(id: &str, masks: Vec<LabelMask>) -> Sample {
        Sample { sample_id: id.into(), slice_count: 8, checkpoints: masks }
    }

    #[test]
    fn iou_examples() {
        let a = mask(&[1, 1, 0, 0]);
        assert_eq!(mean_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(mean_iou(&a, &mask(&[0, 0, 1, 1])).unwrap(), 0.0);
        // class 1 on {p1, p2} vs {p2, p3}
        let (x, y) = (mask(&[1, 1, 0, 0]), mask(&[0, 1, 1, 0]));
        assert!((mean_iou(&x, &y).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(mean_iou(&mask(&[0, 0]), &mask(&[0, 0])).unwrap(), 1.0);
        assert_eq!(mean_iou(&mask(&[0, 0]), &mask(&[0, 2])).unwrap(), 0.0);
    }

    #[test]
    fn iou_rejects_incompatible_masks() {
        let a = mask(&[1, 0]);
        assert!(mean_iou(&a, &mask(&[1, 0, 0])).is_err());
        let b = LabelMask::new(2, 1, 4, vec![1, 0]).unwrap();
        assert!(matches!(mean_iou(&a, &b), Err(Error::Validation(_))));
        assert!(LabelMask::new(2, 1, 2, vec![0, 2]).is_err());
    }

    #[test]
    fn stability_examples() {
        let a = mask(&[1, 1, 0, 0]);
        assert_eq!(stability_score(&[a.clone(), a.clone(), a.clone()]).unwrap(), 1.0);
        assert_eq!(stability_score(&[a.clone(), mask(&[0, 0, 1, 1])]).unwrap(), 0.0);
        let (m1, m3) = (mask(&[1, 1, 0, 0]), mask(&[0, 1, 1, 0]));
        let s = stability_score(&[m1, m3.clone(), m3]).unwrap();
        assert!((s - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(stability_score(&[a]), Err(Error::Param(_))));
        assert!(matches!(stability_score(&[]), Err(Error::Param(_))));
    }

    #[test]
    fn selection_orders_and_thresholds() {
        let full = mask(&[1, 1, 1, 1, 1]);
        let samples = vec![
            // 4 of 5 pixels agree with the final mask: IoU 0.8 exactly.
            sample("b", vec![mask(&[1, 1, 1, 1, 0]), full.clone()]),
            sample("a", vec![full.clone(), full.clone()]),
            sample("c", vec![mask(&[0, 0, 0, 0, 0]), full.clone()]),
        ];
        let r = select_reliable(&samples, 0.8).unwrap();
        let ids: Vec<&str> = r.iter().map(|r| r.sample_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(r.iter().map(|r| r.selected).collect::<Vec<_>>(), [true, false, false]);
        assert!(select_reliable(&samples, 1.5).is_err());
    }

    #[test]
    fn equal_scores_sort_by_id() {
        let m = mask(&[1, 2]);
        let samples = vec![sample("z", vec![m.clone(), m.clone()]), sample("y", vec![m.clone(), m])];
        let r = select_reliable(&samples, 0.8).unwrap();
        assert_eq!(r[0].sample_id, "y");
    }
}
