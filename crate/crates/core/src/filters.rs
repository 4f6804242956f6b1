//! Separable Gaussian smoothing, box means, the guided filter and the 3×3
//! Laplacian. Borders are mirror-padded with the edge sample repeated.

use crate::error::{Error, Result};
use crate::image::{mirror, Image};
use crate::par;

/// Unit-sum 1-D Gaussian taps of radius `ceil(3σ)`.
///
/// The outer product of these taps is the sampled 2-D kernel
/// `exp(-(x² + y²) / 2σ²) / (2πσ²)` renormalized to sum 1.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f32>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!("gaussian sigma must be > 0, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius).map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|t| (t / sum) as f32).collect())
}

/// Sampled value of the continuous 2-D Gaussian density at `(x, y)`.
pub fn gaussian_density(x: f64, y: f64, sigma: f64) -> f64 {
    (-(x * x + y * y) / (2.0 * sigma * sigma)).exp() / (2.0 * std::f64::consts::PI * sigma * sigma)
}

/// Gaussian smoothing of a `[0, 1]` image; the result is clamped to `[0, 1]`.
pub fn gaussian_filter(img: &Image, sigma: f64) -> Result<Image> {
    let kernel = gaussian_kernel(sigma)?;
    Ok(convolve_separable(img, &kernel).clamp01())
}

/// Symmetric separable convolution with mirror borders. No clamping.
pub(crate) fn convolve_separable(img: &Image, kernel: &[f32]) -> Image {
    let (w, h) = img.dims();
    let r = (kernel.len() / 2) as isize;
    let src = img.data();

    let mut tmp = vec![0f32; w * h];
    par::for_each_row(&mut tmp, w, |y, out| {
        let row = &src[y * w..(y + 1) * w];
        let padded: Vec<f32> = (-r..w as isize + r).map(|i| row[mirror(i, w)]).collect();
        for (x, o) in out.iter_mut().enumerate() {
            *o = kernel.iter().zip(&padded[x..x + kernel.len()]).map(|(k, v)| k * v).sum();
        }
    });

    let mut out = vec![0f32; w * h];
    par::for_each_row(&mut out, w, |y, orow| {
        for (k, &kv) in kernel.iter().enumerate() {
            let sy = mirror(y as isize + k as isize - r, h);
            let srow = &tmp[sy * w..(sy + 1) * w];
            for (o, s) in orow.iter_mut().zip(srow) {
                *o += kv * s;
            }
        }
    });
    Image::from_parts(w, h, out)
}

/// Mean over the `(2r+1)²` window around every pixel, mirror-padded,
/// accumulated in f64.
pub(crate) fn box_mean(data: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let ri = r as isize;
    let n = (2 * r + 1) as f64;
    let mut horiz = vec![0f64; w * h];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        let out = &mut horiz[y * w..(y + 1) * w];
        let mut acc: f64 = (-ri..=ri).map(|i| row[mirror(i, w)]).sum();
        for x in 0..w {
            out[x] = acc;
            acc += row[mirror(x as isize + ri + 1, w)] - row[mirror(x as isize - ri, w)];
        }
    }
    let mut out = vec![0f64; w * h];
    for y in 0..h {
        let orow = &mut out[y * w..(y + 1) * w];
        for dy in -ri..=ri {
            let sy = mirror(y as isize + dy, h);
            for (o, s) in orow.iter_mut().zip(&horiz[sy * w..(sy + 1) * w]) {
                *o += s;
            }
        }
        for o in orow.iter_mut() {
            *o /= n * n;
        }
    }
    out
}

/// Edge-preserving guided filter of `input`, steered by `guide`.
///
/// Per window: `a = cov(I, p) / (var(I) + eps)`, `b = mean(p) - a·mean(I)`,
/// output `mean(a)·I + mean(b)`.
pub fn guided_filter(input: &Image, guide: &Image, radius: usize, eps: f64) -> Result<Image> {
    if !input.same_dims(guide) {
        return Err(Error::param(format!(
            "guided filter input {:?} and guide {:?} differ in size",
            input.dims(),
            guide.dims()
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param(format!("guided filter eps must be > 0, got {eps}")));
    }
    let (w, h) = input.dims();
    let p: Vec<f64> = input.data().iter().map(|&v| v as f64).collect();
    let g: Vec<f64> = guide.data().iter().map(|&v| v as f64).collect();
    let gp: Vec<f64> = g.iter().zip(&p).map(|(a, b)| a * b).collect();
    let gg: Vec<f64> = g.iter().map(|a| a * a).collect();

    let [mean_g, mean_p, mean_gp, mean_gg] = {
        let mut it = par::map_slice(&[&g, &p, &gp, &gg], |d| box_mean(d, w, h, radius)).into_iter();
        [(); 4].map(|_| it.next().expect("four means"))
    };

    let mut a = vec![0f64; w * h];
    let mut b = vec![0f64; w * h];
    for i in 0..w * h {
        let var = mean_gg[i] - mean_g[i] * mean_g[i];
        let cov = mean_gp[i] - mean_g[i] * mean_p[i];
        a[i] = cov / (var + eps);
        b[i] = mean_p[i] - a[i] * mean_g[i];
    }
    let mean_a = box_mean(&a, w, h, radius);
    let mean_b = box_mean(&b, w, h, radius);
    let out = (0..w * h).map(|i| (mean_a[i] * g[i] + mean_b[i]) as f32).collect();
    Ok(Image::from_parts(w, h, out))
}

/// Response to `[[0,1,0],[1,-4,1],[0,1,0]]` with mirror borders. Signed.
pub fn laplacian(img: &Image) -> Image {
    let (w, h) = img.dims();
    let src = img.data();
    let mut out = vec![0f32; w * h];
    par::for_each_row(&mut out, w, |y, orow| {
        let up = mirror(y as isize - 1, h);
        let down = mirror(y as isize + 1, h);
        let row = &src[y * w..(y + 1) * w];
        for (x, o) in orow.iter_mut().enumerate() {
            let left = row[mirror(x as isize - 1, w)];
            let right = row[mirror(x as isize + 1, w)];
            *o = src[up * w + x] + src[down * w + x] + left + right - 4.0 * row[x];
        }
    });
    Image::from_parts(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn impulse(n: usize) -> Image {
        Image::from_fn(n, n, |x, y| if x == n / 2 && y == n / 2 { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn kernel_radius_and_normalization() {
        let k = gaussian_kernel(0.5).unwrap();
        assert_eq!(k.len(), 5);
        assert_abs_diff_eq!(k.iter().sum::<f32>(), 1.0, epsilon = 1e-6);
        assert_eq!(gaussian_kernel(1.0).unwrap().len(), 7);
        assert!(gaussian_kernel(0.0).is_err());
        assert!(gaussian_kernel(-1.0).is_err());
    }

    #[test]
    fn unnormalized_density_at_origin() {
        assert_abs_diff_eq!(gaussian_density(0.0, 0.0, 0.5), std::f64::consts::FRAC_2_PI, epsilon = 1e-12);
    }

    #[test]
    fn impulse_center_equals_normalized_2d_kernel() {
        // Oracle: evaluate the 2-D density on the (2r+1)^2 grid, renormalize.
        let sigma = 0.5;
        let r = 2i32;
        let total: f64 =
            (-r..=r).flat_map(|y| (-r..=r).map(move |x| gaussian_density(x as f64, y as f64, sigma))).sum();
        let expected = gaussian_density(0.0, 0.0, sigma) / total;
        let out = gaussian_filter(&impulse(9), sigma).unwrap();
        assert_abs_diff_eq!(out.get(4, 4) as f64, expected, epsilon = 1e-6);
        assert_abs_diff_eq!(expected, 0.618694, epsilon = 1e-6);
        let diag = gaussian_density(1.0, 1.0, sigma) / total;
        assert_abs_diff_eq!(out.get(5, 5) as f64, diag, epsilon = 1e-6);
    }

    #[test]
    fn impulse_response_is_rotation_symmetric() {
        let out = gaussian_filter(&impulse(11), 1.3).unwrap();
        for y in 0..11 {
            for x in 0..11 {
                // 90° rotation about the center (5,5): (x,y) -> (10-y, x)
                assert_abs_diff_eq!(out.get(x, y), out.get(10 - y, x), epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn constant_is_fixed_point() {
        let img = Image::filled(7, 5, 0.37).unwrap();
        let out = gaussian_filter(&img, 2.0).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.37).abs() < 1e-6));
        let gf = guided_filter(&img, &img, 3, 1e-3).unwrap();
        assert!(gf.data().iter().all(|&v| (v - 0.37).abs() < 1e-6));
    }

    #[test]
    fn box_mean_matches_brute_force() {
        let (w, h, r) = (6, 4, 2);
        let data: Vec<f64> = (0..w * h).map(|i| ((i * 37) % 11) as f64).collect();
        let fast = box_mean(&data, w, h, r);
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for dy in -(r as isize)..=r as isize {
                    for dx in -(r as isize)..=r as isize {
                        s += data[mirror(y as isize + dy, h) * w + mirror(x as isize + dx, w)];
                    }
                }
                assert_abs_diff_eq!(fast[y * w + x], s / 25.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn guided_filter_keeps_edges_of_its_guide() {
        // Step edge guide, noisy-ish input equal to the guide: output keeps the step.
        let img = Image::from_fn(20, 8, |x, _| if x < 10 { 0.1 } else { 0.9 }).unwrap();
        let out = guided_filter(&img, &img, 4, 1e-4).unwrap();
        assert!(out.get(8, 4) < 0.2 && out.get(11, 4) > 0.8);
    }

    #[test]
    fn laplacian_of_linear_ramp_is_zero_inside() {
        let img = Image::from_fn(6, 6, |x, y| (x as f32 + 2.0 * y as f32) / 20.0).unwrap();
        let lap = laplacian(&img);
        for y in 1..5 {
            for x in 1..5 {
                assert_abs_diff_eq!(lap.get(x, y), 0.0, epsilon = 1e-6);
            }
        }
    }
}
