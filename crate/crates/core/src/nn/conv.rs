//! 3D convolution and fractional-strided (transposed) convolution, lowered
//! to GEMM via im2col/col2im. Depth is axis 0; kernels, strides and padding
//! are given per axis as `[depth, height, width]`.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{GradStore, Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Spatial padding fill rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PadMode {
    Zero,
    /// Mirror without repeating the edge sample.
    Reflect,
}

/// Initialization used across the stack: zero-mean gaussian, sigma 0.02,
/// zero biases.
pub(crate) const WEIGHT_SIGMA: f64 = 0.02;

fn gaussian_array2<T: Real>(rows: usize, cols: usize, rng: &mut Stream) -> Array2<T> {
    Array2::from_shape_fn((rows, cols), |_| T::from_f64(WEIGHT_SIGMA * rng.gaussian()))
}

/// Source index for padded position `i` (may be negative / past the end).
/// `None` means the tap reads the zero-fill region.
fn pad_lookup(i: isize, n: usize, mode: PadMode) -> Option<usize> {
    if i >= 0 && (i as usize) < n {
        return Some(i as usize);
    }
    match mode {
        PadMode::Zero => None,
        PadMode::Reflect => {
            if n == 1 {
                return Some(0);
            }
            let mut i = i;
            let n = n as isize;
            loop {
                if i < 0 {
                    i = -i;
                } else if i >= n {
                    i = 2 * (n - 1) - i;
                } else {
                    return Some(i as usize);
                }
            }
        }
    }
}

/// Per-axis gather table: entry `[tap * out_len + out_idx]` is the input
/// index feeding that (tap, output) pair, or `usize::MAX` for zero fill.
fn axis_table(n: usize, k: usize, s: usize, p: usize, out_len: usize, mode: PadMode) -> Vec<usize> {
    let mut table = vec![usize::MAX; k * out_len];
    for tap in 0..k {
        for o in 0..out_len {
            let i = (o * s) as isize - p as isize + tap as isize;
            if let Some(src) = pad_lookup(i, n, mode) {
                table[tap * out_len + o] = src;
            }
        }
    }
    table
}

fn conv_out_len(n: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    let padded = n + 2 * p;
    if padded < k {
        return None;
    }
    Some((padded - k) / s + 1)
}

/// A bias-carrying 3D convolution.
#[derive(Debug, Clone)]
pub struct Conv3d<T> {
    name: String,
    in_ch: usize,
    out_ch: usize,
    kernel: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
    pad_mode: PadMode,
    /// `[k_d * k_h * k_w * in_ch, out_ch]`, taps major, channel minor.
    weight: Array2<T>,
    bias: Array1<T>,
}

impl<T: Real> Conv3d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        in_ch: usize,
        out_ch: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        pad: [usize; 3],
        pad_mode: PadMode,
        rng: &mut Stream,
    ) -> Self {
        let k = kernel[0] * kernel[1] * kernel[2] * in_ch;
        Self {
            name: name.into(),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            pad_mode,
            weight: gaussian_array2(k, out_ch, rng),
            bias: Array1::zeros(out_ch),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    pub fn weight_name(&self) -> String {
        format!("{}.w", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.name)
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub(crate) fn weight_mut(&mut self) -> &mut Array2<T> {
        &mut self.weight
    }

    pub(crate) fn bias_mut(&mut self) -> &mut Array1<T> {
        &mut self.bias
    }

    pub(crate) fn weight(&self) -> &Array2<T> {
        &self.weight
    }

    pub(crate) fn bias(&self) -> &Array1<T> {
        &self.bias
    }

    /// Output extents for an input of the given extents.
    pub fn out_shape(&self, dims: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            out[a] = conv_out_len(dims[a], self.kernel[a], self.stride[a], self.pad[a])
                .ok_or_else(|| {
                    Error::Shape(format!(
                        "{}: input extent {} too small for kernel {} with padding {} on axis {a}",
                        self.name, dims[a], self.kernel[a], self.pad[a]
                    ))
                })?;
            if out[a] == 0 {
                return Err(Error::Shape(format!(
                    "{}: empty output on axis {a} for input extent {}",
                    self.name, dims[a]
                )));
            }
        }
        Ok(out)
    }

    fn im2col(&self, x: &Tensor<T>, out: [usize; 3]) -> Array2<T> {
        let (d, h, w, c) = x.dim();
        let [od, oh, ow] = out;
        let [kd, kh, kw] = self.kernel;
        let table_d = axis_table(d, kd, self.stride[0], self.pad[0], od, self.pad_mode);
        let table_h = axis_table(h, kh, self.stride[1], self.pad[1], oh, self.pad_mode);
        let table_w = axis_table(w, kw, self.stride[2], self.pad[2], ow, self.pad_mode);
        let k_total = kd * kh * kw * c;
        let m = od * oh * ow;
        let mut cols = Array2::<T>::zeros((m, k_total));
        let xs = x.as_slice().expect("standard layout");
        let cs = cols.as_slice_mut().expect("standard layout");
        for odi in 0..od {
            for ohi in 0..oh {
                for owi in 0..ow {
                    let row = ((odi * oh) + ohi) * ow + owi;
                    let row_off = row * k_total;
                    for ki in 0..kd {
                        let Some(&id) = table_d.get(ki * od + odi) else { continue };
                        if id == usize::MAX {
                            continue;
                        }
                        for kj in 0..kh {
                            let ih = table_h[kj * oh + ohi];
                            if ih == usize::MAX {
                                continue;
                            }
                            for kk in 0..kw {
                                let iw = table_w[kk * ow + owi];
                                if iw == usize::MAX {
                                    continue;
                                }
                                let src = ((id * h + ih) * w + iw) * c;
                                let dst = row_off + (((ki * kh) + kj) * kw + kk) * c;
                                cs[dst..dst + c].copy_from_slice(&xs[src..src + c]);
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`Self::im2col`]: scatter-adds column gradients back onto
    /// the input grid. Reflected taps accumulate into their source samples.
    fn col2im(&self, dcols: &Array2<T>, in_dims: (usize, usize, usize, usize)) -> Tensor<T> {
        let (d, h, w, c) = in_dims;
        let [kd, kh, kw] = self.kernel;
        let m = dcols.nrows();
        let k_total = dcols.ncols();
        // recover output extents from m is ambiguous; recompute
        let out = self
            .out_shape([d, h, w])
            .expect("col2im shapes already validated in forward");
        let [od, oh, ow] = out;
        debug_assert_eq!(m, od * oh * ow);
        let table_d = axis_table(d, kd, self.stride[0], self.pad[0], od, self.pad_mode);
        let table_h = axis_table(h, kh, self.stride[1], self.pad[1], oh, self.pad_mode);
        let table_w = axis_table(w, kw, self.stride[2], self.pad[2], ow, self.pad_mode);
        let mut dx = Tensor::<T>::zeros((d, h, w, c));
        let dxs = dx.as_slice_mut().expect("standard layout");
        let ds = dcols.as_slice().expect("standard layout");
        for odi in 0..od {
            for ohi in 0..oh {
                for owi in 0..ow {
                    let row = ((odi * oh) + ohi) * ow + owi;
                    let row_off = row * k_total;
                    for ki in 0..kd {
                        let id = table_d[ki * od + odi];
                        if id == usize::MAX {
                            continue;
                        }
                        for kj in 0..kh {
                            let ih = table_h[kj * oh + ohi];
                            if ih == usize::MAX {
                                continue;
                            }
                            for kk in 0..kw {
                                let iw = table_w[kk * ow + owi];
                                if iw == usize::MAX {
                                    continue;
                                }
                                let dst = ((id * h + ih) * w + iw) * c;
                                let src = row_off + (((ki * kh) + kj) * kw + kk) * c;
                                for ci in 0..c {
                                    dxs[dst + ci] = dxs[dst + ci] + ds[src + ci];
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (d, h, w, c) = x.dim();
        if c != self.in_ch {
            return Err(Error::Shape(format!(
                "{}: expected {} input channels, got {c}",
                self.name, self.in_ch
            )));
        }
        let out = self.out_shape([d, h, w])?;
        let cols = self.im2col(x, out);
        let mut y2 = cols.dot(&self.weight);
        for mut row in y2.rows_mut() {
            for (v, &b) in row.iter_mut().zip(self.bias.iter()) {
                *v = *v + b;
            }
        }
        Ok(y2
            .into_shape_with_order((out[0], out[1], out[2], self.out_ch))
            .expect("row-major reshape"))
    }

    /// Backward pass: accumulates `{name}.w` / `{name}.b` into `grads` and
    /// returns the input gradient when requested.
    pub fn backward(
        &self,
        x: &Tensor<T>,
        d_out: &Tensor<T>,
        grads: &mut GradStore<T>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let (od, oh, ow, oc) = d_out.dim();
        debug_assert_eq!(oc, self.out_ch);
        let m = od * oh * ow;
        let d2 = d_out
            .view()
            .into_shape_with_order((m, oc))
            .expect("row-major reshape");
        let cols = self.im2col(x, [od, oh, ow]);
        let dw = cols.t().dot(&d2);
        let db = d2.sum_axis(Axis(0));
        grads.accumulate(&self.weight_name(), dw.into_dyn());
        grads.accumulate(&self.bias_name(), db.into_dyn());
        if need_dx {
            let dcols = d2.dot(&self.weight.t());
            Some(self.col2im(&dcols, x.dim()))
        } else {
            None
        }
    }
}

/// Fractional-strided convolution (the learnable upsampler). Output extent
/// per axis is `(n - 1) * s - 2p + k + output_padding`.
#[derive(Debug, Clone)]
pub struct ConvTranspose3d<T> {
    name: String,
    in_ch: usize,
    out_ch: usize,
    kernel: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
    output_padding: [usize; 3],
    /// `[in_ch, k_d * k_h * k_w * out_ch]`, taps major, channel minor.
    weight: Array2<T>,
    bias: Array1<T>,
}

impl<T: Real> ConvTranspose3d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        in_ch: usize,
        out_ch: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        pad: [usize; 3],
        output_padding: [usize; 3],
        rng: &mut Stream,
    ) -> Self {
        for a in 0..3 {
            assert!(
                output_padding[a] < stride[a].max(1),
                "output padding must be smaller than stride"
            );
        }
        let k = kernel[0] * kernel[1] * kernel[2] * out_ch;
        Self {
            name: name.into(),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            output_padding,
            weight: gaussian_array2(in_ch, k, rng),
            bias: Array1::zeros(out_ch),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn weight_name(&self) -> String {
        format!("{}.w", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.name)
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub(crate) fn weight_mut(&mut self) -> &mut Array2<T> {
        &mut self.weight
    }

    pub(crate) fn bias_mut(&mut self) -> &mut Array1<T> {
        &mut self.bias
    }

    pub(crate) fn weight(&self) -> &Array2<T> {
        &self.weight
    }

    pub(crate) fn bias(&self) -> &Array1<T> {
        &self.bias
    }

    pub fn out_shape(&self, dims: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let grown = (dims[a] - 1) * self.stride[a] + self.kernel[a] + self.output_padding[a];
            let trim = 2 * self.pad[a];
            if grown <= trim {
                return Err(Error::Shape(format!(
                    "{}: transposed conv on axis {a} collapses (extent {})",
                    self.name, dims[a]
                )));
            }
            out[a] = grown - trim;
        }
        Ok(out)
    }

    /// Output grid index for (input index, tap), or None when the tap lands
    /// in the trimmed padding margin.
    #[inline]
    fn out_index(&self, axis: usize, i: usize, tap: usize, n_out: usize) -> Option<usize> {
        let o = (i * self.stride[axis] + tap) as isize - self.pad[axis] as isize;
        (o >= 0 && (o as usize) < n_out).then_some(o as usize)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (d, h, w, c) = x.dim();
        if c != self.in_ch {
            return Err(Error::Shape(format!(
                "{}: expected {} input channels, got {c}",
                self.name, self.in_ch
            )));
        }
        let [od, oh, ow] = self.out_shape([d, h, w])?;
        let m = d * h * w;
        let x2 = x
            .view()
            .into_shape_with_order((m, c))
            .expect("row-major reshape");
        let cols = x2.dot(&self.weight); // (m, taps * out_ch)
        let [kd, kh, kw] = self.kernel;
        let oc = self.out_ch;
        let mut y = Tensor::<T>::zeros((od, oh, ow, oc));
        {
            let ys = y.as_slice_mut().expect("standard layout");
            let cs = cols.as_slice().expect("standard layout");
            let row_w = kd * kh * kw * oc;
            for id in 0..d {
                for ih in 0..h {
                    for iw in 0..w {
                        let row_off = (((id * h) + ih) * w + iw) * row_w;
                        for ki in 0..kd {
                            let Some(odi) = self.out_index(0, id, ki, od) else { continue };
                            for kj in 0..kh {
                                let Some(ohi) = self.out_index(1, ih, kj, oh) else { continue };
                                for kk in 0..kw {
                                    let Some(owi) = self.out_index(2, iw, kk, ow) else {
                                        continue;
                                    };
                                    let dst = ((odi * oh + ohi) * ow + owi) * oc;
                                    let src = row_off + (((ki * kh) + kj) * kw + kk) * oc;
                                    for ci in 0..oc {
                                        ys[dst + ci] = ys[dst + ci] + cs[src + ci];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        {
            let ys = y.as_slice_mut().expect("standard layout");
            for pos in 0..(od * oh * ow) {
                let off = pos * oc;
                for (ci, &b) in self.bias.iter().enumerate() {
                    ys[off + ci] = ys[off + ci] + b;
                }
            }
        }
        Ok(y)
    }

    pub fn backward(
        &self,
        x: &Tensor<T>,
        d_out: &Tensor<T>,
        grads: &mut GradStore<T>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let (d, h, w, c) = x.dim();
        let (od, oh, ow, oc) = d_out.dim();
        let [kd, kh, kw] = self.kernel;
        let m = d * h * w;
        let row_w = kd * kh * kw * oc;
        // Gather upstream gradients into im2col layout over *input* positions.
        let mut gcols = Array2::<T>::zeros((m, row_w));
        {
            let gs = gcols.as_slice_mut().expect("standard layout");
            let ds = d_out.as_slice().expect("standard layout");
            for id in 0..d {
                for ih in 0..h {
                    for iw in 0..w {
                        let row_off = (((id * h) + ih) * w + iw) * row_w;
                        for ki in 0..kd {
                            let Some(odi) = self.out_index(0, id, ki, od) else { continue };
                            for kj in 0..kh {
                                let Some(ohi) = self.out_index(1, ih, kj, oh) else { continue };
                                for kk in 0..kw {
                                    let Some(owi) = self.out_index(2, iw, kk, ow) else {
                                        continue;
                                    };
                                    let src = ((odi * oh + ohi) * ow + owi) * oc;
                                    let dst = row_off + (((ki * kh) + kj) * kw + kk) * oc;
                                    gs[dst..dst + oc].copy_from_slice(&ds[src..src + oc]);
                                }
                            }
                        }
                    }
                }
            }
        }
        let x2 = x
            .view()
            .into_shape_with_order((m, c))
            .expect("row-major reshape");
        let dw = x2.t().dot(&gcols);
        let db = d_out
            .view()
            .into_shape_with_order((od * oh * ow, oc))
            .expect("row-major reshape")
            .sum_axis(Axis(0));
        grads.accumulate(&self.weight_name(), dw.into_dyn());
        grads.accumulate(&self.bias_name(), db.into_dyn());
        if need_dx {
            let dx2 = gcols.dot(&self.weight.t());
            Some(
                dx2.into_shape_with_order((d, h, w, c))
                    .expect("row-major reshape"),
            )
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{Array2, Array4};

    fn line(vals: &[f64]) -> Tensor<f64> {
        Array4::from_shape_vec((1, 1, vals.len(), 1), vals.to_vec()).unwrap()
    }

    fn ones_conv(kernel_w: usize, pad: usize, mode: PadMode) -> Conv3d<f64> {
        let mut rng = Stream::new(0, 0);
        let mut c = Conv3d::new(
            "c",
            1,
            1,
            [1, 1, kernel_w],
            [1, 1, 1],
            [0, 0, pad],
            mode,
            &mut rng,
        );
        c.weight_mut().fill(1.0);
        c
    }

    #[test]
    fn zero_padded_box_filter() {
        let conv = ones_conv(3, 1, PadMode::Zero);
        let y = conv.forward(&line(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(y.dim(), (1, 1, 3, 1));
        assert_abs_diff_eq!(y[[0, 0, 0, 0]], 3.0);
        assert_abs_diff_eq!(y[[0, 0, 1, 0]], 6.0);
        assert_abs_diff_eq!(y[[0, 0, 2, 0]], 5.0);
    }

    #[test]
    fn reflect_padded_box_filter() {
        let conv = ones_conv(3, 1, PadMode::Reflect);
        let y = conv.forward(&line(&[1.0, 2.0, 3.0])).unwrap();
        // mirrored neighbours: [2,1,2] [1,2,3] [2,3,2]
        assert_abs_diff_eq!(y[[0, 0, 0, 0]], 5.0);
        assert_abs_diff_eq!(y[[0, 0, 1, 0]], 6.0);
        assert_abs_diff_eq!(y[[0, 0, 2, 0]], 7.0);
    }

    #[test]
    fn stride_two_shapes() {
        let mut rng = Stream::new(0, 0);
        let conv = Conv3d::<f64>::new(
            "c",
            1,
            4,
            [3, 3, 3],
            [1, 2, 2],
            [1, 1, 1],
            PadMode::Zero,
            &mut rng,
        );
        let x = Array4::zeros((5, 8, 8, 1));
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.dim(), (5, 4, 4, 4));
    }

    #[test]
    fn too_small_input_errors() {
        let conv = ones_conv(5, 0, PadMode::Zero);
        assert!(conv.forward(&line(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn transposed_doubles_spatial_extent() {
        let mut rng = Stream::new(0, 0);
        let tc = ConvTranspose3d::<f64>::new(
            "t",
            2,
            3,
            [3, 3, 3],
            [1, 2, 2],
            [1, 1, 1],
            [0, 1, 1],
            &mut rng,
        );
        let x = Array4::zeros((5, 4, 4, 2));
        let y = tc.forward(&x).unwrap();
        assert_eq!(y.dim(), (5, 8, 8, 3));
    }

    /// Convolution is linear, so finite differences of a linear functional
    /// of the output are exact up to roundoff. This pins both grads.
    fn gradcheck_conv(pad_mode: PadMode, stride: [usize; 3]) {
        let mut rng = Stream::new(42, 1);
        let conv = Conv3d::<f64>::new(
            "c",
            2,
            3,
            [3, 3, 3],
            stride,
            [1, 1, 1],
            pad_mode,
            &mut rng,
        );
        let x = Array4::from_shape_fn((3, 6, 6, 2), |_| rng.gaussian());
        let y = conv.forward(&x).unwrap();
        let probe = Array4::from_shape_fn(y.dim(), |_| rng.gaussian());
        let loss = |c: &Conv3d<f64>, x: &Tensor<f64>| {
            c.forward(x)
                .unwrap()
                .iter()
                .zip(probe.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };

        let mut grads = GradStore::new();
        let dx = conv.backward(&x, &probe, &mut grads, true).unwrap();

        // input gradient
        let mut x_pert = x.clone();
        let eps = 1e-5;
        for idx in [[0, 0, 0, 0], [1, 3, 2, 1], [2, 5, 5, 0]] {
            let base = x_pert[idx];
            x_pert[idx] = base + eps;
            let up = loss(&conv, &x_pert);
            x_pert[idx] = base - eps;
            let dn = loss(&conv, &x_pert);
            x_pert[idx] = base;
            let fd = (up - dn) / (2.0 * eps);
            assert_abs_diff_eq!(dx[idx], fd, epsilon = 1e-6);
        }

        // weight gradient
        let dw = grads.get("c.w").unwrap().clone();
        let mut conv_pert = conv.clone();
        for (i, j) in [(0, 0), (13, 2), (53, 1)] {
            let base = conv_pert.weight()[[i, j]];
            conv_pert.weight_mut()[[i, j]] = base + eps;
            let up = loss(&conv_pert, &x);
            conv_pert.weight_mut()[[i, j]] = base - eps;
            let dn = loss(&conv_pert, &x);
            conv_pert.weight_mut()[[i, j]] = base;
            let fd = (up - dn) / (2.0 * eps);
            assert_abs_diff_eq!(dw[[i, j]], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        gradcheck_conv(PadMode::Zero, [1, 1, 1]);
        gradcheck_conv(PadMode::Reflect, [1, 1, 1]);
        gradcheck_conv(PadMode::Zero, [1, 2, 2]);
    }

    #[test]
    fn transposed_conv_gradients_match_finite_differences() {
        let mut rng = Stream::new(7, 1);
        let tc = ConvTranspose3d::<f64>::new(
            "t",
            3,
            2,
            [3, 3, 3],
            [1, 2, 2],
            [1, 1, 1],
            [0, 1, 1],
            &mut rng,
        );
        let x = Array4::from_shape_fn((2, 3, 3, 3), |_| rng.gaussian());
        let y = tc.forward(&x).unwrap();
        assert_eq!(y.dim(), (2, 6, 6, 2));
        let probe = Array4::from_shape_fn(y.dim(), |_| rng.gaussian());
        let loss = |t: &ConvTranspose3d<f64>, x: &Tensor<f64>| {
            t.forward(x)
                .unwrap()
                .iter()
                .zip(probe.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };
        let mut grads = GradStore::new();
        let dx = tc.backward(&x, &probe, &mut grads, true).unwrap();
        let eps = 1e-5;

        let mut xp = x.clone();
        for idx in [[0, 0, 0, 0], [1, 2, 1, 2], [1, 0, 2, 1]] {
            let base = xp[idx];
            xp[idx] = base + eps;
            let up = loss(&tc, &xp);
            xp[idx] = base - eps;
            let dn = loss(&tc, &xp);
            xp[idx] = base;
            assert_abs_diff_eq!(dx[idx], (up - dn) / (2.0 * eps), epsilon = 1e-6);
        }

        let dw = grads.get("t.w").unwrap().clone();
        let mut tp = tc.clone();
        for (i, j) in [(0, 0), (2, 17), (1, 40)] {
            let base = tp.weight()[[i, j]];
            tp.weight_mut()[[i, j]] = base + eps;
            let up = loss(&tp, &x);
            tp.weight_mut()[[i, j]] = base - eps;
            let dn = loss(&tp, &x);
            tp.weight_mut()[[i, j]] = base;
            assert_abs_diff_eq!(dw[[i, j]], (up - dn) / (2.0 * eps), epsilon = 1e-6);
        }
    }

    #[test]
    fn bias_gradient_is_output_sum() {
        let mut rng = Stream::new(1, 1);
        let conv = Conv3d::<f64>::new(
            "c",
            1,
            2,
            [1, 1, 1],
            [1, 1, 1],
            [0, 0, 0],
            PadMode::Zero,
            &mut rng,
        );
        let x = Array4::from_elem((1, 2, 2, 1), 1.0);
        let d_out = Array4::from_elem((1, 2, 2, 2), 0.5);
        let mut grads = GradStore::new();
        conv.backward(&x, &d_out, &mut grads, false);
        let db = grads.get("c.b").unwrap();
        assert_abs_diff_eq!(db[[0]], 2.0);
        assert_abs_diff_eq!(db[[1]], 2.0);
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = Stream::new(0, 0);
        let mut conv = Conv3d::<f64>::new(
            "c",
            1,
            1,
            [1, 1, 1],
            [1, 1, 1],
            [0, 0, 0],
            PadMode::Zero,
            &mut rng,
        );
        conv.weight_mut().assign(&Array2::from_elem((1, 1), 1.0));
        let x = Array4::from_shape_fn((2, 3, 3, 1), |(d, h, w, _)| (d * 9 + h * 3 + w) as f64);
        let y = conv.forward(&x).unwrap();
        assert_eq!(x, y);
    }
}
