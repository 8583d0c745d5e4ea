//! Bilinear spatial resampling. Depth and channel axes are never resampled.

use ndarray::{Array3, Array4, ArrayView3, Axis};

/// Precomputed 1D interpolation taps for one output axis.
fn axis_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    // Half-pixel centers, edges clamped. (lo, hi, frac): out = (1-frac)*in[lo] + frac*in[hi].
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|i| {
            let src = (i as f64 + 0.5) * scale - 0.5;
            let src = src.clamp(0.0, (n_in - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(n_in - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

fn resize_slice(src: &ArrayView3<'_, f64>, out_h: usize, out_w: usize) -> Array3<f64> {
    let (h, w, c) = src.dim();
    if h == out_h && w == out_w {
        return src.to_owned();
    }
    let th = axis_taps(h, out_h);
    let tw = axis_taps(w, out_w);
    let mut out = Array3::<f64>::zeros((out_h, out_w, c));
    for (oh, &(h0, h1, fh)) in th.iter().enumerate() {
        for (ow, &(w0, w1, fw)) in tw.iter().enumerate() {
            for ch in 0..c {
                let top = (1.0 - fw) * src[[h0, w0, ch]] + fw * src[[h0, w1, ch]];
                let bot = (1.0 - fw) * src[[h1, w0, ch]] + fw * src[[h1, w1, ch]];
                out[[oh, ow, ch]] = (1.0 - fh) * top + fh * bot;
            }
        }
    }
    out
}

/// Resizes the `(H, W)` axes of a `(D, H, W, C)` tensor; `D` and `C` pass
/// through untouched. Same-size inputs are returned verbatim, so a resize to
/// the identity shape is exact.
pub fn resize_bilinear_hw(data: &Array4<f64>, out_h: usize, out_w: usize) -> Array4<f64> {
    let (d, h, w, c) = data.dim();
    if h == out_h && w == out_w {
        return data.clone();
    }
    let mut out = Array4::<f64>::zeros((d, out_h, out_w, c));
    for di in 0..d {
        let slice = data.index_axis(Axis(0), di);
        out.index_axis_mut(Axis(0), di)
            .assign(&resize_slice(&slice, out_h, out_w));
    }
    out
}

/// Bilinear resize of a single `(H, W, C)` image.
pub fn resize_image_bilinear(img: &Array3<f64>, out_h: usize, out_w: usize) -> Array3<f64> {
    resize_slice(&img.view(), out_h, out_w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_resize_is_exact() {
        let x = Array4::from_shape_fn((2, 5, 7, 3), |(d, h, w, c)| {
            (d * 1000 + h * 100 + w * 10 + c) as f64
        });
        let y = resize_bilinear_hw(&x, 5, 7);
        assert_eq!(x, y);
    }

    #[test]
    fn constant_stays_constant() {
        let x = Array4::from_elem((1, 4, 4, 1), 0.25);
        let y = resize_bilinear_hw(&x, 9, 3);
        for &v in y.iter() {
            assert_abs_diff_eq!(v, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn upscale_preserves_linear_ramp_interior() {
        // A linear ramp along W stays linear under bilinear interpolation.
        let x = Array4::from_shape_fn((1, 1, 4, 1), |(_, _, w, _)| w as f64);
        let y = resize_bilinear_hw(&x, 1, 8);
        // interior samples follow (i + 0.5) * 0.5 - 0.5
        for i in 1..7 {
            let expect = ((i as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, 3.0);
            assert_abs_diff_eq!(y[[0, 0, i, 0]], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn range_is_preserved() {
        let x = Array4::from_shape_fn((1, 6, 6, 1), |(_, h, w, _)| {
            if (h + w) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        });
        let y = resize_bilinear_hw(&x, 13, 5);
        for &v in y.iter() {
            assert!((-1.0..=1.0).contains(&v));
        }
    }
}
