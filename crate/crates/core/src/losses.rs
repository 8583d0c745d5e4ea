//! The four training loss terms and their weighted combination.
//!
//! Adversarial (BCE on patch logits, computed in the numerically stable
//! logit form), cycle consistency (L1), channel-adapted identity (L1 through
//! the generator with luminance/replication adapters bridging the 1<->3
//! channel asymmetry), and an edge-preserving gradient loss on forward
//! differences of luminance. Every term also exposes its analytic gradient;
//! those gradients are what the trainer backpropagates, and they are checked
//! against central finite differences in the tests and acceptance suite.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{Generator, PatchLogitMap};
use crate::nn::{Real, Tensor};
use crate::volume::LUMA_WEIGHTS;

/// Scalar weights of the four-term generator objective. The cycle and
/// identity defaults follow the cited convention (identity at half the
/// cycle weight); the gradient term defaults to a neutral 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_adv: f64,
    pub w_cyc: f64,
    pub w_id: f64,
    pub w_grad: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_adv: 1.0,
            w_cyc: 10.0,
            w_id: 5.0,
            w_grad: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("w_adv", self.w_adv),
            ("w_cyc", self.w_cyc),
            ("w_id", self.w_id),
            ("w_grad", self.w_grad),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("loss weight {name} = {v} invalid")));
            }
        }
        Ok(())
    }
}

/// Per-iteration loss diagnostics. Field order is the CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub adv_g: f64,
    pub adv_f: f64,
    pub cyc_x: f64,
    pub cyc_y: f64,
    pub id_g: f64,
    pub id_f: f64,
    pub grad_g: f64,
    pub grad_f: f64,
    pub d_x: f64,
    pub d_y: f64,
}

impl LossReport {
    pub const CSV_HEADER: &'static str =
        "iter,adv_g,adv_f,cyc_x,cyc_y,id_g,id_f,grad_g,grad_f,d_x,d_y";

    pub fn csv_row(&self, iter: u64) -> String {
        format!(
            "{iter},{},{},{},{},{},{},{},{},{},{}",
            self.adv_g,
            self.adv_f,
            self.cyc_x,
            self.cyc_y,
            self.id_g,
            self.id_f,
            self.grad_g,
            self.grad_f,
            self.d_x,
            self.d_y
        )
    }

    /// Name of the first non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [
            ("adv_g", self.adv_g),
            ("adv_f", self.adv_f),
            ("cyc_x", self.cyc_x),
            ("cyc_y", self.cyc_y),
            ("id_g", self.id_g),
            ("id_f", self.id_f),
            ("grad_g", self.grad_g),
            ("grad_f", self.grad_f),
            ("d_x", self.d_x),
            ("d_y", self.d_y),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// Stable binary cross-entropy against a constant target over all patch
/// logits: mean of `max(z,0) - z*y + ln(1 + exp(-|z|))`.
pub fn adversarial_loss<T: Real>(logits: &PatchLogitMap<T>, target_real: bool) -> f64 {
    let y = if target_real { 1.0 } else { 0.0 };
    let mut acc = 0.0;
    for &z in logits.iter() {
        let z = z.to_f64();
        acc += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
    }
    acc / logits.len() as f64
}

/// [`adversarial_loss`] plus its gradient w.r.t. the logits:
/// `(sigmoid(z) - y) / n`.
pub fn adversarial_loss_grad<T: Real>(
    logits: &PatchLogitMap<T>,
    target_real: bool,
) -> (f64, Tensor<T>) {
    let y = if target_real { 1.0 } else { 0.0 };
    let inv_n = 1.0 / logits.len() as f64;
    let grad = logits.mapv(|z| {
        let z = z.to_f64();
        T::from_f64((sigmoid(z) - y) * inv_n)
    });
    (adversarial_loss(logits, target_real), grad)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "loss operands differ in shape: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Mean absolute elementwise difference.
pub fn cycle_loss<T: Real>(original: &Tensor<T>, reconstructed: &Tensor<T>) -> Result<f64> {
    check_same_shape(original, reconstructed)?;
    let acc: f64 = original
        .iter()
        .zip(reconstructed.iter())
        .map(|(&a, &b)| (a.to_f64() - b.to_f64()).abs())
        .sum();
    Ok(acc / original.len() as f64)
}

/// [`cycle_loss`] plus the gradient w.r.t. `reconstructed`:
/// `sign(reconstructed - original) / n` (zero on ties).
pub fn cycle_loss_grad<T: Real>(
    original: &Tensor<T>,
    reconstructed: &Tensor<T>,
) -> Result<(f64, Tensor<T>)> {
    check_same_shape(original, reconstructed)?;
    let inv_n = 1.0 / original.len() as f64;
    let mut grad = Tensor::<T>::zeros(original.dim());
    let mut acc = 0.0;
    for ((g, &a), &b) in grad.iter_mut().zip(original.iter()).zip(reconstructed.iter()) {
        let d = b.to_f64() - a.to_f64();
        acc += d.abs();
        *g = T::from_f64(d.signum_or_zero() * inv_n);
    }
    Ok((acc * inv_n, grad))
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

/// Collapses a tensor to single-channel luminance. One-channel input passes
/// through; three channels combine with Rec.601 weights.
pub fn luminance<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (d, h, w, c) = x.dim();
    match c {
        1 => Ok(x.clone()),
        3 => {
            let wr = T::from_f64(LUMA_WEIGHTS[0]);
            let wg = T::from_f64(LUMA_WEIGHTS[1]);
            let wb = T::from_f64(LUMA_WEIGHTS[2]);
            let mut out = Tensor::<T>::zeros((d, h, w, 1));
            for ((di, hi, wi, _), o) in out.indexed_iter_mut() {
                *o = wr * x[[di, hi, wi, 0]] + wg * x[[di, hi, wi, 1]] + wb * x[[di, hi, wi, 2]];
            }
            Ok(out)
        }
        _ => Err(Error::Shape(format!("luminance needs 1 or 3 channels, got {c}"))),
    }
}

/// Spreads a luminance gradient back over the channels of the original
/// tensor shape (adjoint of [`luminance`]).
fn luminance_backward<T: Real>(d_lum: &Tensor<T>, channels: usize) -> Tensor<T> {
    let (d, h, w, _) = d_lum.dim();
    match channels {
        1 => d_lum.clone(),
        3 => {
            let mut out = Tensor::<T>::zeros((d, h, w, 3));
            for ((di, hi, wi, ci), o) in out.indexed_iter_mut() {
                *o = T::from_f64(LUMA_WEIGHTS[ci]) * d_lum[[di, hi, wi, 0]];
            }
            out
        }
        _ => unreachable!("luminance validated channels"),
    }
}

/// Replicates a single channel into three (adapter for identity loss).
pub fn replicate<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (d, h, w, c) = x.dim();
    if c != 1 {
        return Err(Error::Shape(format!("replicate needs 1 channel, got {c}")));
    }
    let mut out = Tensor::<T>::zeros((d, h, w, 3));
    for ((di, hi, wi, _), &v) in x.indexed_iter() {
        out[[di, hi, wi, 0]] = v;
        out[[di, hi, wi, 1]] = v;
        out[[di, hi, wi, 2]] = v;
    }
    Ok(out)
}

/// Edge-preservation loss: L1 distance between forward differences of the
/// luminances of `source` and `translated`, along H and along W. An axis
/// with extent 1 contributes no difference pairs; if both spatial axes are
/// degenerate there is nothing to compare and the call errors.
pub fn gradient_loss<T: Real>(source: &Tensor<T>, translated: &Tensor<T>) -> Result<f64> {
    Ok(gradient_loss_impl(source, translated, false)?.0)
}

/// [`gradient_loss`] plus gradients w.r.t. both inputs.
pub fn gradient_loss_grad<T: Real>(
    source: &Tensor<T>,
    translated: &Tensor<T>,
) -> Result<(f64, Tensor<T>, Tensor<T>)> {
    let (loss, grads) = gradient_loss_impl(source, translated, true)?;
    let (gs, gt) = grads.expect("grads requested");
    Ok((loss, gs, gt))
}

type GradPair<T> = Option<(Tensor<T>, Tensor<T>)>;

fn gradient_loss_impl<T: Real>(
    source: &Tensor<T>,
    translated: &Tensor<T>,
    want_grads: bool,
) -> Result<(f64, GradPair<T>)> {
    let (sd, sh, sw, sc) = source.dim();
    let (td, th, tw, tc) = translated.dim();
    if (sd, sh, sw) != (td, th, tw) {
        return Err(Error::Shape(format!(
            "gradient loss needs matching (D, H, W): {:?} vs {:?}",
            (sd, sh, sw),
            (td, th, tw)
        )));
    }
    if sh < 2 && sw < 2 {
        return Err(Error::Shape(
            "gradient loss undefined: both spatial extents below 2".into(),
        ));
    }
    let ls = luminance(source)?;
    let lt = luminance(translated)?;

    let mut loss = 0.0;
    let mut dls = want_grads.then(|| Tensor::<T>::zeros(ls.dim()));
    let mut dlt = want_grads.then(|| Tensor::<T>::zeros(lt.dim()));

    // axis: 1 = H, 2 = W
    for axis in [1usize, 2] {
        let n_axis = if axis == 1 { sh } else { sw };
        if n_axis < 2 {
            continue;
        }
        let count =
            sd * (if axis == 1 { sh - 1 } else { sh }) * (if axis == 2 { sw - 1 } else { sw });
        let inv_n = 1.0 / count as f64;
        let mut term = 0.0;
        let (h_hi, w_hi) = if axis == 1 { (sh - 1, sw) } else { (sh, sw - 1) };
        for di in 0..sd {
            for hi in 0..h_hi {
                for wi in 0..w_hi {
                    let (h2, w2) = if axis == 1 { (hi + 1, wi) } else { (hi, wi + 1) };
                    let ds = ls[[di, h2, w2, 0]].to_f64() - ls[[di, hi, wi, 0]].to_f64();
                    let dt = lt[[di, h2, w2, 0]].to_f64() - lt[[di, hi, wi, 0]].to_f64();
                    let e = ds - dt;
                    term += e.abs();
                    if let (Some(gs), Some(gt)) = (dls.as_mut(), dlt.as_mut()) {
                        let s = T::from_f64(e.signum_or_zero() * inv_n);
                        gs[[di, h2, w2, 0]] = gs[[di, h2, w2, 0]] + s;
                        gs[[di, hi, wi, 0]] = gs[[di, hi, wi, 0]] - s;
                        gt[[di, h2, w2, 0]] = gt[[di, h2, w2, 0]] - s;
                        gt[[di, hi, wi, 0]] = gt[[di, hi, wi, 0]] + s;
                    }
                }
            }
        }
        loss += term * inv_n;
    }

    let grads = if want_grads {
        let gs = luminance_backward(&dls.unwrap(), sc);
        let gt = luminance_backward(&dlt.unwrap(), tc);
        Some((gs, gt))
    } else {
        None
    };
    Ok((loss, grads))
}

/// Channel-adapted identity loss. For a 1-to-3 generator this is
/// `L1(G(luminance(y)), y)`; for a 3-to-1 generator `L1(F(replicate(x)), x)`.
/// `target` must live in the generator's *output* domain.
pub fn identity_loss<T: Real>(g: &Generator<T>, target: &Tensor<T>) -> Result<f64> {
    let c = target.dim().3;
    if c != g.config().out_channels {
        return Err(Error::Shape(format!(
            "identity target has {c} channels but generator outputs {}",
            g.config().out_channels
        )));
    }
    let adapted = identity_adapter(g, target)?;
    let pred = g.forward(&adapted)?;
    cycle_loss(target, &pred)
}

/// The domain adapter feeding the identity path: collapses or replicates
/// channels so `target` becomes a valid generator input.
pub fn identity_adapter<T: Real>(g: &Generator<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    match (g.config().in_channels, g.config().out_channels) {
        (1, 3) => luminance(target),
        (3, 1) => replicate(target),
        _ => unreachable!("configs validate the 1<->3 pairing"),
    }
}

/// Weighted sum of the four generator-side term pairs.
pub fn generator_objective(parts: &LossReport, w: &LossWeights) -> f64 {
    w.w_adv * (parts.adv_g + parts.adv_f)
        + w.w_cyc * (parts.cyc_x + parts.cyc_y)
        + w.w_id * (parts.id_g + parts.id_f)
        + w.w_grad * (parts.grad_g + parts.grad_f)
}

/// Two-sided discriminator objective, halved to balance generator and
/// discriminator step sizes.
pub fn discriminator_objective<T: Real>(
    real_logits: &PatchLogitMap<T>,
    fake_logits: &PatchLogitMap<T>,
) -> f64 {
    0.5 * (adversarial_loss(real_logits, true) + adversarial_loss(fake_logits, false))
}

/// [`discriminator_objective`] plus gradients w.r.t. both logit maps.
pub fn discriminator_objective_grad<T: Real>(
    real_logits: &PatchLogitMap<T>,
    fake_logits: &PatchLogitMap<T>,
) -> (f64, Tensor<T>, Tensor<T>) {
    let (lr, mut gr) = adversarial_loss_grad(real_logits, true);
    let (lf, mut gf) = adversarial_loss_grad(fake_logits, false);
    let half = T::from_f64(0.5);
    gr.mapv_inplace(|v| v * half);
    gf.mapv_inplace(|v| v * half);
    (0.5 * (lr + lf), gr, gf)
}

/// Depth-mean projection of a tensor in `[-1, 1]` to `[0, 1]`; the tensor
/// analogue of the fundus projection used for in-loop diagnostics.
pub fn project_mean<T: Real>(x: &Tensor<T>) -> ndarray::Array3<f64> {
    let (d, h, w, c) = x.dim();
    let mut out = ndarray::Array3::<f64>::zeros((h, w, c));
    for slice in x.axis_iter(Axis(0)) {
        out.zip_mut_with(&slice, |o, &v| *o += (v.to_f64() + 1.0) * 0.5);
    }
    out / d as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{Arch, GeneratorConfig};
    use crate::rng::Stream;
    use approx::assert_abs_diff_eq;
    use ndarray::Array4;

    fn randn(shape: (usize, usize, usize, usize), seed: u64) -> Tensor<f64> {
        let mut rng = Stream::new(seed, 3);
        Array4::from_shape_fn(shape, |_| rng.gaussian())
    }

    #[test]
    fn adversarial_fixed_points() {
        let zeros = Array4::<f64>::zeros((1, 2, 2, 1));
        assert_abs_diff_eq!(
            adversarial_loss(&zeros, true),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        let confident = Array4::<f64>::from_elem((1, 1, 1, 1), 20.0);
        let l = adversarial_loss(&confident, true);
        assert!(l < 1e-8 && l > 0.0, "{l}");
        assert_abs_diff_eq!(l, (-20.0f64).exp().ln_1p(), epsilon = 1e-15);
    }

    #[test]
    fn adversarial_symmetry() {
        let z = randn((2, 3, 3, 1), 1);
        let neg = z.mapv(|v| -v);
        assert_abs_diff_eq!(
            adversarial_loss(&z, true),
            adversarial_loss(&neg, false),
            epsilon = 1e-12
        );
    }

    #[test]
    fn adversarial_gradient_matches_finite_differences() {
        let z = randn((1, 2, 3, 1), 2);
        for target in [true, false] {
            let (_, g) = adversarial_loss_grad(&z, target);
            let eps = 1e-6;
            let mut zp = z.clone();
            for idx in [[0, 0, 0, 0], [0, 1, 2, 0]] {
                let base = zp[idx];
                zp[idx] = base + eps;
                let up = adversarial_loss(&zp, target);
                zp[idx] = base - eps;
                let dn = adversarial_loss(&zp, target);
                zp[idx] = base;
                assert_abs_diff_eq!(g[idx], (up - dn) / (2.0 * eps), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn cycle_loss_basics() {
        let a = randn((2, 2, 2, 1), 3);
        assert_abs_diff_eq!(cycle_loss(&a, &a).unwrap(), 0.0);
        let b = a.mapv(|v| v + 0.25);
        assert_abs_diff_eq!(cycle_loss(&a, &b).unwrap(), 0.25, epsilon = 1e-12);
        // brute-force oracle
        let c = randn((2, 2, 2, 1), 4);
        let mut acc = 0.0;
        for (x, y) in a.iter().zip(c.iter()) {
            acc += (x - y).abs();
        }
        assert_abs_diff_eq!(cycle_loss(&a, &c).unwrap(), acc / 8.0, epsilon = 1e-12);
        assert!(cycle_loss(&a, &randn((2, 2, 2, 3), 5)).is_err());
    }

    #[test]
    fn cycle_gradient_matches_finite_differences() {
        let a = randn((1, 2, 2, 1), 6);
        let b = randn((1, 2, 2, 1), 7);
        let (_, g) = cycle_loss_grad(&a, &b).unwrap();
        let eps = 1e-6;
        let mut bp = b.clone();
        for idx in [[0, 0, 0, 0], [0, 1, 1, 0]] {
            let base = bp[idx];
            bp[idx] = base + eps;
            let up = cycle_loss(&a, &bp).unwrap();
            bp[idx] = base - eps;
            let dn = cycle_loss(&a, &bp).unwrap();
            bp[idx] = base;
            assert_abs_diff_eq!(g[idx], (up - dn) / (2.0 * eps), epsilon = 1e-8);
        }
    }

    #[test]
    fn gradient_loss_fixed_points() {
        let s = randn((2, 3, 4, 3), 8);
        // translated = source (same luminance) -> 0
        assert_abs_diff_eq!(gradient_loss(&s, &s).unwrap(), 0.0);
        // both constant (different constants) -> 0
        let c1 = Array4::<f64>::from_elem((1, 3, 3, 1), 0.7);
        let c2 = Array4::<f64>::from_elem((1, 3, 3, 1), -0.2);
        assert_abs_diff_eq!(gradient_loss(&c1, &c2).unwrap(), 0.0);
    }

    #[test]
    fn gradient_loss_hand_computed_line() {
        // (1, 1, 4) step vs flat: W-diffs [0,1,0] vs [0,0,0] -> mean 1/3.
        let s = Array4::from_shape_vec((1, 1, 4, 1), vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let t = Array4::<f64>::zeros((1, 1, 4, 1));
        assert_abs_diff_eq!(gradient_loss(&s, &t).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_loss_constant_shift_invariance() {
        let s = randn((2, 3, 3, 1), 9);
        let t = randn((2, 3, 3, 1), 10);
        let base = gradient_loss(&s, &t).unwrap();
        let shifted = gradient_loss(&s.mapv(|v| v + 0.4), &t.mapv(|v| v + 0.4)).unwrap();
        assert_abs_diff_eq!(base, shifted, epsilon = 1e-12);
    }

    #[test]
    fn gradient_loss_rejects_degenerate_grid() {
        let a = Array4::<f64>::zeros((3, 1, 1, 1));
        assert!(gradient_loss(&a, &a).is_err());
    }

    #[test]
    fn gradient_loss_gradients_match_finite_differences() {
        let s = randn((1, 3, 3, 3), 11);
        let t = randn((1, 3, 3, 1), 12);
        let (_, gs, gt) = gradient_loss_grad(&s, &t).unwrap();
        let eps = 1e-6;
        let mut sp = s.clone();
        for idx in [[0, 0, 0, 0], [0, 1, 2, 1], [0, 2, 2, 2]] {
            let base = sp[idx];
            sp[idx] = base + eps;
            let up = gradient_loss(&sp, &t).unwrap();
            sp[idx] = base - eps;
            let dn = gradient_loss(&sp, &t).unwrap();
            sp[idx] = base;
            assert_abs_diff_eq!(gs[idx], (up - dn) / (2.0 * eps), epsilon = 1e-7);
        }
        let mut tp = t.clone();
        for idx in [[0, 0, 1, 0], [0, 2, 0, 0]] {
            let base = tp[idx];
            tp[idx] = base + eps;
            let up = gradient_loss(&s, &tp).unwrap();
            tp[idx] = base - eps;
            let dn = gradient_loss(&s, &tp).unwrap();
            tp[idx] = base;
            assert_abs_diff_eq!(gt[idx], (up - dn) / (2.0 * eps), epsilon = 1e-7);
        }
    }

    #[test]
    fn identity_loss_composes_public_ops() {
        let cfg = GeneratorConfig {
            n_downsampling: 2,
            n_res_blocks: 1,
            base_width: 2,
            arch: Arch::Resnet,
            ..GeneratorConfig::default()
        };
        let mut rng = Stream::new(13, 0);
        let g = Generator::<f64>::build(&cfg, "g", &mut rng).unwrap();
        let y = randn((2, 4, 4, 3), 14).mapv(|v| v.tanh());
        let direct = identity_loss(&g, &y).unwrap();
        let composed = {
            let lum = luminance(&y).unwrap();
            let pred = g.forward(&lum).unwrap();
            cycle_loss(&y, &pred).unwrap()
        };
        assert_abs_diff_eq!(direct, composed, epsilon = 1e-12);
    }

    #[test]
    fn identity_loss_checks_target_domain() {
        let cfg = GeneratorConfig {
            n_downsampling: 2,
            n_res_blocks: 1,
            base_width: 2,
            ..GeneratorConfig::default()
        };
        let mut rng = Stream::new(15, 0);
        let g = Generator::<f64>::build(&cfg, "g", &mut rng).unwrap();
        let wrong = randn((2, 4, 4, 1), 16);
        assert!(identity_loss(&g, &wrong).is_err());
    }

    #[test]
    fn identity_loss_zero_at_exact_fixed_point() {
        // A mapping that replicates luminance is a fixed point on
        // achromatic targets; emulate the generator with the adapters to
        // pin the algebra without training a network into that state.
        let v = randn((2, 3, 3, 1), 17).mapv(|x| x.tanh());
        let y = replicate(&v).unwrap();
        let lum = luminance(&y).unwrap();
        let pred = replicate(&lum).unwrap();
        assert_abs_diff_eq!(cycle_loss(&y, &pred).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn objective_arithmetic() {
        let zero = LossReport::default();
        assert_abs_diff_eq!(generator_objective(&zero, &LossWeights::default()), 0.0);

        let ones = LossReport {
            adv_g: 1.0,
            adv_f: 1.0,
            cyc_x: 1.0,
            cyc_y: 1.0,
            id_g: 1.0,
            id_f: 1.0,
            grad_g: 1.0,
            grad_f: 1.0,
            d_x: 1.0,
            d_y: 1.0,
        };
        assert_abs_diff_eq!(generator_objective(&ones, &LossWeights::default()), 34.0);
        let adv_only = LossWeights {
            w_adv: 1.0,
            w_cyc: 0.0,
            w_id: 0.0,
            w_grad: 0.0,
        };
        assert_abs_diff_eq!(generator_objective(&ones, &adv_only), 2.0);
    }

    #[test]
    fn objective_is_linear_in_weights() {
        let parts = LossReport {
            adv_g: 0.3,
            adv_f: 0.7,
            cyc_x: 1.2,
            cyc_y: 0.4,
            id_g: 0.9,
            id_f: 0.1,
            grad_g: 0.5,
            grad_f: 0.2,
            d_x: 0.0,
            d_y: 0.0,
        };
        let w1 = LossWeights {
            w_adv: 1.0,
            w_cyc: 2.0,
            w_id: 3.0,
            w_grad: 4.0,
        };
        let w2 = LossWeights {
            w_adv: 0.5,
            w_cyc: 0.1,
            w_id: 0.0,
            w_grad: 2.0,
        };
        let sum = LossWeights {
            w_adv: w1.w_adv + w2.w_adv,
            w_cyc: w1.w_cyc + w2.w_cyc,
            w_id: w1.w_id + w2.w_id,
            w_grad: w1.w_grad + w2.w_grad,
        };
        assert_abs_diff_eq!(
            generator_objective(&parts, &sum),
            generator_objective(&parts, &w1) + generator_objective(&parts, &w2),
            epsilon = 1e-12
        );
    }

    #[test]
    fn discriminator_objective_matches_composition() {
        let real = randn((1, 2, 2, 1), 18);
        let fake = randn((1, 2, 2, 1), 19);
        let d = discriminator_objective(&real, &fake);
        let manual = 0.5 * (adversarial_loss(&real, true) + adversarial_loss(&fake, false));
        assert_abs_diff_eq!(d, manual, epsilon = 1e-15);
        let zeros = Array4::<f64>::zeros((1, 1, 1, 1));
        assert_abs_diff_eq!(
            discriminator_objective(&zeros, &zeros),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
    }
}
