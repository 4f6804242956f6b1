use crate::error::Result;
use crate::filters::{gaussian_filter, laplacian};
use crate::image::Image;
use crate::image_io::ZStack;
use crate::par;

/// Per-pixel focus measure: `|∇²(G_σ * img)|`. Requires `sigma > 0`.
pub fn focus_measure(img: &Image, sigma: f64) -> Result<Image> {
    Ok(laplacian(&gaussian_filter(img, sigma)?).map(f32::abs))
}

/// Index of the slice with the strongest focus measure at every pixel; ties go
/// to the lower index.
pub fn focus_index(stack: &ZStack, sigma: f64) -> Result<Vec<usize>> {
    let (w, h) = stack.dims();
    let mut best = vec![f32::NEG_INFINITY; w * h];
    let mut index = vec![0usize; w * h];
    for (z, slice) in stack.slices().iter().enumerate() {
        let m = focus_measure(slice, sigma)?;
        for ((b, i), &v) in best.iter_mut().zip(index.iter_mut()).zip(m.data()) {
            if v > *b {
                *b = v;
                *i = z;
            }
        }
    }
    Ok(index)
}

/// All-in-focus composite: every output pixel is copied from the slice with
/// the strongest Laplacian response at that pixel.
pub fn laplacian_fuse(stack: &ZStack, sigma: f64) -> Result<Image> {
    let (w, h) = stack.dims();
    let index = focus_index(stack, sigma)?;
    let mut out = vec![0f32; w * h];
    par::for_each_row(&mut out, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = stack.slice(index[y * w + x]).get(x, y);
        }
    });
    Image::new(w, h, out)
}
