//! Selective stacking: rank slices by blur map, keep the best `k`, optionally
//! register them, and fuse them into one all-in-focus image.

mod align;
mod features;
mod fuse;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use align::{align_slices, warp, AlignParams, AlignTransform, Alignment, TransformModel};
pub use fuse::{focus_index, focus_measure, laplacian_fuse};

use crate::blur_map::{blur_detection_maps, BlurMap, HifstParams};
use crate::config;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::image_io::ZStack;
use crate::slice_select::{check_k, score_maps, select_top_k, SliceScore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StackParams {
    pub k: usize,
    pub align: bool,
    pub fusion_sigma: f64,
    pub hifst: HifstParams,
    pub alignment: AlignParams,
}

impl Default for StackParams {
    fn default() -> Self {
        Self {
            k: config::TOP_K,
            align: false,
            fusion_sigma: config::FUSION_SIGMA,
            hifst: HifstParams::default(),
            alignment: AlignParams::default(),
        }
    }
}

impl StackParams {
    pub fn validate(&self, z_count: usize) -> Result<()> {
        check_k(self.k, z_count)?;
        if !(self.fusion_sigma > 0.0 && self.fusion_sigma.is_finite()) {
            return Err(Error::param(format!("fusion sigma must be > 0, got {}", self.fusion_sigma)));
        }
        if self.alignment.iterations == 0 || !(self.alignment.inlier_px > 0.0) {
            return Err(Error::param("RANSAC needs iterations > 0 and an inlier threshold > 0"));
        }
        self.hifst.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceTransform {
    pub z: usize,
    #[serde(flatten)]
    pub transform: AlignTransform,
}

/// Deterministic description of a stacking run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackReport {
    pub scores: Vec<SliceScore>,
    /// Kept slices, best score first.
    pub selected: Vec<usize>,
    /// Kept slices in the order they were fused (ascending z).
    pub fused_order: Vec<usize>,
    /// Slice the others were registered onto, if alignment ran.
    pub reference: Option<usize>,
    pub transforms: Vec<SliceTransform>,
    pub warnings: Vec<String>,
}

/// Wall-clock milliseconds per stage. Kept apart from [`StackReport`] so the
/// report stays reproducible.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub blur_maps_ms: f64,
    pub selection_ms: f64,
    pub alignment_ms: f64,
    pub fusion_ms: f64,
}

#[derive(Clone, Debug)]
pub struct StackOutput {
    pub image: Image,
    pub report: StackReport,
    pub maps: Vec<BlurMap>,
    pub timings: StageTimings,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Full selective-stacking run over `stack`.
pub fn sbs_stack(stack: &ZStack, params: &StackParams) -> Result<StackOutput> {
    params.validate(stack.z_count())?;
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let maps = blur_detection_maps(stack.slices(), &params.hifst)?;
    timings.blur_maps_ms = ms(t);

    let t = Instant::now();
    let scores = score_maps(&maps);
    let selected = select_top_k(&scores, params.k)?;
    let mut fused_order = selected.clone();
    fused_order.sort_unstable();
    let subset = stack.select(&fused_order)?;
    timings.selection_ms = ms(t);

    let t = Instant::now();
    let (subset, reference, transforms, warnings) = if params.align {
        let best = selected[0];
        let pos = fused_order.iter().position(|&z| z == best).expect("best slice is selected");
        let a = align_slices(&subset, pos, &params.alignment)?;
        let transforms =
            fused_order.iter().zip(&a.transforms).map(|(&z, &transform)| SliceTransform { z, transform }).collect();
        (a.stack, Some(best), transforms, a.warnings)
    } else {
        (subset, None, Vec::new(), Vec::new())
    };
    timings.alignment_ms = ms(t);
    for w in &warnings {
        log::warn!("{w}");
    }

    let t = Instant::now();
    let image = laplacian_fuse(&subset, params.fusion_sigma)?;
    timings.fusion_ms = ms(t);

    Ok(StackOutput {
        image,
        report: StackReport { scores, selected, fused_order, reference, transforms, warnings },
        maps,
        timings,
    })
}
