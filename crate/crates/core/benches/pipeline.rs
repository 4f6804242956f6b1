//! Sequential vs data-parallel execution of the hot stages.
//!
//! Each benchmark runs once on a single worker and once on the default pool.
//! Building with `--no-default-features` swaps in the sequential fallback; the
//! group names carry the active mode so both runs can be kept side by side:
//!
//!     cargo bench -p sbs-core
//!     cargo bench -p sbs-core --no-default-features

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sbs_core::blur_map::{blur_detection_map, blur_detection_maps, HifstParams};
use sbs_core::focus_stack::{laplacian_fuse, sbs_stack, StackParams};
use sbs_core::image_io::ZStack;
use sbs_core::par::{current_threads, with_threads};
use sbs_core::synth::{generate_zstack, render_pattern, FocalSeries, Pattern};

const MODE: &str = if cfg!(feature = "parallel") { "parallel" } else { "sequential" };

fn stack(side: usize) -> ZStack {
    let series = FocalSeries { width: side, height: side, seed: 7, ..FocalSeries::default() };
    generate_zstack(&series.to_spec().unwrap()).unwrap().0
}

/// (label, worker count) pairs: one worker, then the whole default pool.
fn pools() -> Vec<(String, usize)> {
    let all = current_threads();
    let mut v = vec![("1-thread".to_owned(), 1)];
    if all > 1 {
        v.push((format!("{all}-threads"), all));
    }
    v
}

fn blur_maps(c: &mut Criterion) {
    let params = HifstParams::default();
    let mut g = c.benchmark_group(format!("blur_map/{MODE}"));
    g.sample_size(10).measurement_time(Duration::from_secs(20));

    let single = render_pattern(Pattern::Blobs, 256, 256, 3);
    let stack = stack(128);
    for (label, threads) in pools() {
        g.bench_function(BenchmarkId::new("single_256", &label), |b| {
            b.iter(|| with_threads(threads, || blur_detection_map(black_box(&single), &params).unwrap()))
        });
        g.bench_function(BenchmarkId::new("stack_15x128", &label), |b| {
            b.iter(|| with_threads(threads, || blur_detection_maps(black_box(stack.slices()), &params).unwrap()))
        });
    }
    g.finish();
}

fn fusion(c: &mut Criterion) {
    let stack = stack(256);
    let mut g = c.benchmark_group(format!("fusion/{MODE}"));
    g.sample_size(20);
    for (label, threads) in pools() {
        g.bench_function(BenchmarkId::new("laplacian_fuse_15x256", &label), |b| {
            b.iter(|| with_threads(threads, || laplacian_fuse(black_box(&stack), 1.0).unwrap()))
        });
    }
    g.finish();
}

fn end_to_end(c: &mut Criterion) {
    let stack = stack(128);
    let params = StackParams::default();
    let mut g = c.benchmark_group(format!("sbs_stack/{MODE}"));
    g.sample_size(10).measurement_time(Duration::from_secs(30));
    for (label, threads) in pools() {
        g.bench_function(BenchmarkId::new("k8_15x128", &label), |b| {
            b.iter(|| with_threads(threads, || sbs_stack(black_box(&stack), &params).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, blur_maps, fusion, end_to_end);
criterion_main!(benches);
