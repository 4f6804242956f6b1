use std::path::PathBuf;

use sbs_core::image_io::{load_image, load_stack, save_png16, save_png8, ManifestEntry, StackManifest, StackSource};
use sbs_core::loss_numerics::{load_prob_batch, save_prob_batch, ProbMap};
use sbs_core::pfm::{read_float_map, save_float_map};
use sbs_core::Image;
use tempfile::TempDir;

fn ramp(w: usize, h: usize, phase: usize) -> Image {
    Image::from_fn(w, h, |x, y| ((x * 3 + y * 5 + phase) % 11) as f32 / 10.0).unwrap()
}

#[test]
fn directory_stacks_load_in_file_name_order() {
    let tmp = TempDir::new().unwrap();
    // Written out of order; a non-image file must be ignored.
    for z in [2usize, 0, 1] {
        save_png16(&ramp(9, 7, z), tmp.path().join(format!("slice_{z:02}.png"))).unwrap();
    }
    std::fs::write(tmp.path().join("notes.txt"), "not an image").unwrap();

    let stack = load_stack(&StackSource::from_path(tmp.path()).unwrap()).unwrap();
    assert_eq!(stack.z_count(), 3);
    for z in 0..3 {
        let want = ramp(9, 7, z);
        let max_err = stack.slice(z).data().iter().zip(want.data()).map(|(a, b)| (a - b).abs()).fold(0f32, f32::max);
        assert!(max_err <= 0.5 / 65535.0 + 1e-7, "slice {z}: {max_err}");
    }
}

#[test]
fn manifests_override_file_order_and_resolve_relative_paths() {
    let tmp = TempDir::new().unwrap();
    let sub = tmp.path().join("raw");
    std::fs::create_dir(&sub).unwrap();
    save_png8(&ramp(6, 6, 0), sub.join("b.png")).unwrap();
    save_png8(&ramp(6, 6, 4), sub.join("a.png")).unwrap();
    let manifest = StackManifest::new(
        vec![
            ManifestEntry { z: 1, path: PathBuf::from("raw/a.png") },
            ManifestEntry { z: 0, path: PathBuf::from("raw/b.png") },
        ],
        tmp.path(),
    )
    .unwrap();
    let path = tmp.path().join("manifest.json");
    manifest.write(&path).unwrap();

    let stack = load_stack(&StackSource::from_path(&path).unwrap()).unwrap();
    assert_eq!(stack.slice(0), &load_image(sub.join("b.png")).unwrap());
    assert_eq!(stack.slice(1), &load_image(sub.join("a.png")).unwrap());

    let gap = vec![
        ManifestEntry { z: 0, path: PathBuf::from("x.png") },
        ManifestEntry { z: 2, path: PathBuf::from("y.png") },
    ];
    assert!(StackManifest::new(gap, tmp.path()).is_err());
}

#[test]
#[allow(clippy::approx_constant)] // 0.63662 is a sample value, not 2/π
fn float_maps_round_trip_bit_exactly() {
    let tmp = TempDir::new().unwrap();
    let mut data: Vec<f32> = (0..35).map(|i| (i as f32 * 0.731).sin().abs()).collect();
    data[0] = 0.63662;
    data[1] = f32::MIN_POSITIVE / 4.0; // subnormal
    data[2] = 1.0 - f32::EPSILON / 2.0;
    let img = Image::new(7, 5, data).unwrap();
    let p = tmp.path().join("m.pfm");
    save_float_map(&img, &p).unwrap();
    let back = read_float_map(&p).unwrap();
    assert_eq!(back.dims(), (7, 5));
    let same = img.data().iter().zip(back.data()).all(|(a, b)| a.to_bits() == b.to_bits());
    assert!(same);

    // Images are luminance in [0, 1]; anything else is rejected on read.
    let raw = Image::from_raw(2, 2, vec![0.0, 2.5, 0.0, 0.0]).unwrap();
    save_float_map(&raw, &p).unwrap();
    assert!(matches!(read_float_map(&p), Err(sbs_core::Error::Validation(_))));
}

#[test]
fn eight_bit_quantization_error_is_half_a_code() {
    let tmp = TempDir::new().unwrap();
    let img = Image::from_fn(16, 16, |x, y| (x * 16 + y) as f32 / 255.0 * 0.999).unwrap();
    let p = tmp.path().join("q.png");
    save_png8(&img, &p).unwrap();
    let back = load_image(&p).unwrap();
    for (a, b) in img.data().iter().zip(back.data()) {
        assert!((0.0..=1.0).contains(b));
        assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
    }
}

#[test]
fn probability_batches_round_trip() {
    let tmp = TempDir::new().unwrap();
    let item = |shift: f64| {
        let data = (0..12)
            .flat_map(|i| {
                let p = ((i as f64 * 0.37 + shift).sin() * 0.5 + 0.5).clamp(0.0, 1.0);
                [p, 1.0 - p]
            })
            .collect();
        ProbMap::new(4, 3, 2, data).unwrap()
    };
    let batch = vec![item(0.0), item(1.3)];
    let p = tmp.path().join("b.pfmstack");
    save_prob_batch(&batch, &p).unwrap();
    let back = load_prob_batch(&p).unwrap();
    assert_eq!(back.len(), 2);
    for (a, b) in batch.iter().zip(&back) {
        assert_eq!(a.dims(), b.dims());
        for (pa, pb) in a.pixels().zip(b.pixels()) {
            for (x, y) in pa.iter().zip(pb) {
                assert!((x - y).abs() < 1e-7);
            }
        }
    }
}

#[test]
fn missing_files_are_io_errors() {
    let tmp = TempDir::new().unwrap();
    assert!(load_image(tmp.path().join("none.png")).unwrap_err().is_io());
    assert!(StackSource::from_path(tmp.path().join("none.json")).unwrap_err().is_io());
}
