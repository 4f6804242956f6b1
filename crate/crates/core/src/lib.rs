//! Selective blurry-slice stacking for z-stack microscopy.
//!
//! Each slice of a z-stack gets a per-pixel blur detection map
//! ([`blur_map`]); slices are ranked by their cumulative in-focus mass and the
//! top `k` are kept ([`slice_select`]); the kept slices are fused by picking,
//! per pixel, the slice with the strongest Laplacian response
//! ([`focus_stack`]). [`loss_numerics`] and [`selftrain_select`] hold the
//! numeric pieces of the accompanying semi-supervised training scheme, and
//! [`synth`] generates z-stacks with known ground truth.

// `!(x > 0.0)` is used on purpose in validation so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blur_map;
pub mod config;
pub mod error;
pub mod filters;
pub mod focus_stack;
pub mod image;
pub mod image_io;
pub mod loss_numerics;
pub mod par;
pub mod pfm;
pub mod selftrain_select;
pub mod slice_select;
pub mod synth;

pub use error::{Error, Result};
pub use image::Image;
