//! Layer sum type and sequential execution with an external activation tape.

use ndarray::{ArrayViewD, ArrayViewMutD};

use super::norm::NormCache;
use super::{Conv3d, ConvTranspose3d, GradStore, InstanceNorm, Real, Tensor};
use crate::error::Result;

pub enum Layer<T> {
    Conv(Conv3d<T>),
    ConvT(ConvTranspose3d<T>),
    Norm(InstanceNorm<T>),
    Relu,
    LeakyRelu(f64),
    Tanh,
}

/// Per-layer activation cache for one forward pass.
pub enum LayerCache<T> {
    Input(Tensor<T>),
    Norm(NormCache<T>),
    /// Tanh caches its output; the others cache their input.
    Output(Tensor<T>),
}

impl<T: Real> Layer<T> {
    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv(c) => c.param_count(),
            Layer::ConvT(c) => c.param_count(),
            Layer::Norm(n) => n.param_count(),
            _ => 0,
        }
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(&str, ArrayViewD<'_, T>)) {
        match self {
            Layer::Conv(c) => {
                f(&c.weight_name(), c.weight().view().into_dyn());
                f(&c.bias_name(), c.bias().view().into_dyn());
            }
            Layer::ConvT(c) => {
                f(&c.weight_name(), c.weight().view().into_dyn());
                f(&c.bias_name(), c.bias().view().into_dyn());
            }
            Layer::Norm(n) => {
                let name = n.name().to_string();
                if let Some((gamma, beta)) = n.affine() {
                    f(&format!("{name}.gamma"), gamma.view().into_dyn());
                    f(&format!("{name}.beta"), beta.view().into_dyn());
                }
            }
            _ => {}
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, T>)) {
        match self {
            Layer::Conv(c) => {
                let wn = c.weight_name();
                let bn = c.bias_name();
                f(&wn, c.weight_mut().view_mut().into_dyn());
                f(&bn, c.bias_mut().view_mut().into_dyn());
            }
            Layer::ConvT(c) => {
                let wn = c.weight_name();
                let bn = c.bias_name();
                f(&wn, c.weight_mut().view_mut().into_dyn());
                f(&bn, c.bias_mut().view_mut().into_dyn());
            }
            Layer::Norm(n) => {
                let name = n.name().to_string();
                if let Some((gamma, beta)) = n.affine_mut() {
                    f(&format!("{name}.gamma"), gamma.view_mut().into_dyn());
                    f(&format!("{name}.beta"), beta.view_mut().into_dyn());
                }
            }
            _ => {}
        }
    }
}

/// Runs `layers` in order. When `tape` is given, per-layer caches are pushed
/// onto it so [`seq_backward`] can walk the pass in reverse; without a tape
/// this is a pure inference pass.
pub fn seq_forward<T: Real>(
    layers: &[Layer<T>],
    mut x: Tensor<T>,
    mut tape: Option<&mut Vec<LayerCache<T>>>,
) -> Result<Tensor<T>> {
    for layer in layers {
        match layer {
            Layer::Conv(c) => {
                let y = c.forward(&x)?;
                if let Some(t) = tape.as_deref_mut() {
                    t.push(LayerCache::Input(x));
                }
                x = y;
            }
            Layer::ConvT(c) => {
                let y = c.forward(&x)?;
                if let Some(t) = tape.as_deref_mut() {
                    t.push(LayerCache::Input(x));
                }
                x = y;
            }
            Layer::Norm(n) => {
                let (y, cache) = n.forward(&x);
                if let Some(t) = tape.as_deref_mut() {
                    t.push(LayerCache::Norm(cache));
                }
                x = y;
            }
            Layer::Relu => {
                let y = x.mapv(|v| if v > T::zero() { v } else { T::zero() });
                if let Some(t) = tape.as_deref_mut() {
                    t.push(LayerCache::Input(x));
                }
                x = y;
            }
            Layer::LeakyRelu(slope) => {
                let a = T::from_f64(*slope);
                let y = x.mapv(|v| if v > T::zero() { v } else { a * v });
                if let Some(t) = tape.as_deref_mut() {
                    t.push(LayerCache::Input(x));
                }
                x = y;
            }
            Layer::Tanh => {
                let y = x.mapv(|v| v.tanh());
                if let Some(t) = tape.as_deref_mut() {
                    t.push(LayerCache::Output(y.clone()));
                }
                x = y;
            }
        }
    }
    Ok(x)
}

/// Walks the tape in reverse, accumulating parameter gradients. Returns the
/// gradient w.r.t. the sequence input, or `None` when `need_dx` is false
/// (the input-gradient GEMM of the first layer is then skipped).
pub fn seq_backward<T: Real>(
    layers: &[Layer<T>],
    tape: &[LayerCache<T>],
    mut d_out: Tensor<T>,
    grads: &mut GradStore<T>,
    need_dx: bool,
) -> Option<Tensor<T>> {
    debug_assert_eq!(layers.len(), tape.len(), "tape/layer length mismatch");
    for (i, (layer, cache)) in layers.iter().zip(tape.iter()).enumerate().rev() {
        let want = need_dx || i > 0;
        match (layer, cache) {
            (Layer::Conv(c), LayerCache::Input(x)) => {
                let dx = c.backward(x, &d_out, grads, want);
                if !want {
                    return None;
                }
                d_out = dx.expect("dx requested");
            }
            (Layer::ConvT(c), LayerCache::Input(x)) => {
                let dx = c.backward(x, &d_out, grads, want);
                if !want {
                    return None;
                }
                d_out = dx.expect("dx requested");
            }
            (Layer::Norm(n), LayerCache::Norm(cache)) => {
                d_out = n.backward(cache, &d_out, grads);
            }
            (Layer::Relu, LayerCache::Input(x)) => {
                d_out.zip_mut_with(x, |g, &v| {
                    if v <= T::zero() {
                        *g = T::zero();
                    }
                });
            }
            (Layer::LeakyRelu(slope), LayerCache::Input(x)) => {
                let a = T::from_f64(*slope);
                d_out.zip_mut_with(x, |g, &v| {
                    if v <= T::zero() {
                        *g = *g * a;
                    }
                });
            }
            (Layer::Tanh, LayerCache::Output(y)) => {
                d_out.zip_mut_with(y, |g, &v| *g = *g * (T::one() - v * v));
            }
            _ => unreachable!("cache kind does not match layer kind"),
        }
    }
    Some(d_out)
}

pub fn seq_visit_params<T: Real>(
    layers: &[Layer<T>],
    f: &mut dyn FnMut(&str, ArrayViewD<'_, T>),
) {
    for layer in layers {
        layer.visit_params(f);
    }
}

pub fn seq_visit_params_mut<T: Real>(
    layers: &mut [Layer<T>],
    f: &mut dyn FnMut(&str, ArrayViewMutD<'_, T>),
) {
    for layer in layers {
        layer.visit_params_mut(f);
    }
}
