//! Numeric defaults in one place.

/// Denoising Gaussian std-dev before gradient computation, pixels.
pub const DENOISE_SIGMA: f64 = 0.5;
/// Patch scales `m` (patch sizes 7, 15, 31).
pub const SCALE_COUNT: usize = 3;
/// Entropy neighbourhood side.
pub const ENTROPY_PATCH: usize = 7;
pub const SMOOTHING_RADIUS: usize = 8;
pub const SMOOTHING_EPS: f64 = 1e-3;

/// Slices kept for fusion.
pub const TOP_K: usize = 8;
/// Pre-Laplacian blur in fusion, pixels.
pub const FUSION_SIGMA: f64 = 1.0;
pub const RANSAC_SEED: u64 = 42;
pub const RANSAC_ITERATIONS: usize = 1000;
pub const RANSAC_INLIER_PX: f64 = 2.0;
pub const LOWE_RATIO: f32 = 0.75;
/// Below this many translation inliers an affine model is fitted instead.
pub const MIN_TRANSLATION_INLIERS: usize = 10;
/// Below this many matches a slice keeps the identity transform.
pub const MIN_MATCHES: usize = 4;

/// Pixel confidence gate of the consistency loss.
pub const CONSISTENCY_TAU: f64 = 0.8;
/// Weight of the unsupervised loss term.
pub const LOSS_LAMBDA: f64 = 0.1;
/// Floor applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;
/// Stability threshold for reliable-sample selection.
pub const STABILITY_TAU: f64 = 0.8;
