//! Whole-pipeline properties of `sbs_stack` on synthetic stacks.

use sbs_core::blur_map::{blur_detection_maps, HifstParams};
use sbs_core::focus_stack::{align_slices, laplacian_fuse, sbs_stack, AlignParams, StackParams, TransformModel};
use sbs_core::image_io::ZStack;
use sbs_core::slice_select::{score_maps, select_top_k};
use sbs_core::synth::{defocus, generate_zstack, render_pattern, shift_image, FocalSeries, Pattern};
use sbs_core::Image;

fn small_series(seed: u64) -> ZStack {
    let series = FocalSeries { width: 64, height: 64, seed, ..FocalSeries::default() };
    generate_zstack(&series.to_spec().unwrap()).unwrap().0
}

#[test]
fn full_k_without_alignment_is_plain_fusion() {
    let stack = small_series(1);
    let params = StackParams { k: stack.z_count(), ..StackParams::default() };
    let out = sbs_stack(&stack, &params).unwrap();
    assert_eq!(out.image, laplacian_fuse(&stack, params.fusion_sigma).unwrap());
    assert_eq!(out.report.fused_order, (0..stack.z_count()).collect::<Vec<_>>());
}

#[test]
fn fused_pixels_come_from_the_selected_slices() {
    let stack = small_series(2);
    let out = sbs_stack(&stack, &StackParams::default()).unwrap();
    let kept: Vec<&Image> = out.report.fused_order.iter().map(|&z| stack.slice(z)).collect();
    for (i, &v) in out.image.data().iter().enumerate() {
        assert!(kept.iter().any(|s| s.data()[i] == v), "pixel {i} = {v} is not a co-located input value");
    }
}

#[test]
fn single_best_slice_passes_through_unchanged() {
    let stack = small_series(3);
    let out = sbs_stack(&stack, &StackParams { k: 1, ..StackParams::default() }).unwrap();
    let best = out.report.selected[0];
    assert_eq!(&out.image, stack.slice(best));
    assert_eq!(out.report.scores.iter().map(|s| s.score).max(), Some(out.report.scores[best].score));
}

#[test]
fn report_agrees_with_the_stagewise_pipeline() {
    let stack = small_series(4);
    let params = StackParams::default();
    let out = sbs_stack(&stack, &params).unwrap();

    let maps = blur_detection_maps(stack.slices(), &params.hifst).unwrap();
    let scores = score_maps(&maps);
    assert_eq!(out.report.scores, scores);
    assert_eq!(out.report.selected, select_top_k(&scores, params.k).unwrap());
    let mut ascending = out.report.selected.clone();
    ascending.sort_unstable();
    assert_eq!(out.report.fused_order, ascending);
    assert_eq!(out.maps.len(), stack.z_count());
}

#[test]
fn runs_are_bit_reproducible() {
    let stack = small_series(5);
    let params = StackParams { align: true, ..StackParams::default() };
    let a = sbs_stack(&stack, &params).unwrap();
    let b = sbs_stack(&stack, &params).unwrap();
    assert_eq!(a.image, b.image);
    assert_eq!(serde_json::to_string(&a.report).unwrap(), serde_json::to_string(&b.report).unwrap());
    assert_eq!(a.report.reference, Some(a.report.selected[0]));
}

#[test]
fn thread_count_does_not_change_results() {
    let stack = small_series(6);
    let params = StackParams::default();
    let one = sbs_core::par::with_threads(1, || sbs_stack(&stack, &params).unwrap());
    let three = sbs_core::par::with_threads(3, || sbs_stack(&stack, &params).unwrap());
    assert_eq!(one.image, three.image);
    assert_eq!(one.report, three.report);
}

/// Fraction of interior pixels of the fused pair equal to the sharp source,
/// where each slice keeps one half sharp and defocuses the other.
fn half_sharp_agreement(seed: u64, defocus_sigma: f32) -> f64 {
    let (w, h) = (96, 64);
    let sharp = render_pattern(Pattern::Blobs, w, h, seed);
    let blurred = defocus(&sharp, defocus_sigma).unwrap();
    let half = |sharp_left: bool| {
        Image::from_fn(w, h, |x, y| if (x < w / 2) == sharp_left { sharp.get(x, y) } else { blurred.get(x, y) })
            .unwrap()
    };
    let stack = ZStack::from_slices(vec![half(true), half(false)]).unwrap();
    let fused = laplacian_fuse(&stack, StackParams::default().fusion_sigma).unwrap();

    // Interior: away from the frame and from the seam between halves.
    let margin = 4;
    let (mut total, mut equal) = (0, 0);
    for y in margin..h - margin {
        for x in margin..w - margin {
            if x.abs_diff(w / 2) < margin {
                continue;
            }
            total += 1;
            equal += usize::from(fused.get(x, y) == sharp.get(x, y));
        }
    }
    equal as f64 / total as f64
}

#[test]
fn two_half_sharp_slices_fuse_to_the_sharp_source() {
    // Fully defocused halves. With milder defocus (sigma 3-4) the wider
    // Laplacian skirt of a blurred edge wins 6-10 % of pixels next to edges.
    for seed in 11..16 {
        let agreement = half_sharp_agreement(seed, 6.0);
        assert!(agreement >= 0.95, "seed {seed}: {agreement:.3}");
    }
}

#[test]
fn selection_recovers_the_sharp_run() {
    let series = FocalSeries { width: 96, height: 96, seed: 21, ..FocalSeries::default() };
    let (stack, truth) = generate_zstack(&series.to_spec().unwrap()).unwrap();
    let out = sbs_stack(&stack, &StackParams::default()).unwrap();
    assert_eq!(out.report.fused_order, truth.sharp_slices());
}

#[test]
fn identical_slices_align_to_identity() {
    let img = render_pattern(Pattern::Blobs, 96, 96, 12);
    let stack = ZStack::from_slices(vec![img.clone(), img.clone(), img]).unwrap();
    let out = align_slices(&stack, 1, &AlignParams::default()).unwrap();
    for t in &out.transforms {
        let (tx, ty) = t.offset();
        assert!(tx.abs() <= 0.25 && ty.abs() <= 0.25, "{t:?}");
    }
    assert!(out.warnings.is_empty());
}

#[test]
fn shifted_slice_is_registered_back() {
    let img = render_pattern(Pattern::Blobs, 128, 128, 13);
    let moved = shift_image(&img, 3, -2);
    let stack = ZStack::from_slices(vec![img, moved]).unwrap();
    let out = align_slices(&stack, 0, &AlignParams::default()).unwrap();
    let t = &out.transforms[1];
    assert_ne!(t.model, TransformModel::Identity);
    let (tx, ty) = t.offset();
    assert!((tx + 3.0).abs() <= 0.5 && (ty - 2.0).abs() <= 0.5, "{t:?}");
}

#[test]
fn invalid_parameters_are_rejected() {
    let stack = small_series(7);
    for params in [
        StackParams { k: 0, ..StackParams::default() },
        StackParams { k: 16, ..StackParams::default() },
        StackParams { fusion_sigma: 0.0, ..StackParams::default() },
        StackParams { hifst: HifstParams { sigma: 0.0, ..HifstParams::default() }, ..StackParams::default() },
    ] {
        assert!(matches!(sbs_stack(&stack, &params), Err(sbs_core::Error::Param(_))));
    }
}
