//! Minimal 3D convolutional network machinery with explicit backprop.
//!
//! Layers cache nothing inside themselves: a forward pass writes per-layer
//! activations into an external tape owned by the caller, and the matching
//! backward pass consumes that tape while accumulating parameter gradients
//! into a [`GradStore`] keyed by parameter name. This lets one network run
//! several tape-tracked forwards per training step (cycle paths, identity
//! paths) before any backward, and makes inference allocation-light by
//! passing no tape at all.
//!
//! Tensors are `(depth, height, width, channel)`, matching the volume model.
//! Convolutions are lowered to GEMM via im2col; with the `blas` feature the
//! GEMMs run on the system BLAS, otherwise on ndarray's built-in kernels.

mod conv;
mod layer;
mod norm;

pub use conv::{Conv3d, ConvTranspose3d, PadMode};
pub use layer::{
    seq_backward, seq_forward, seq_visit_params, seq_visit_params_mut, Layer, LayerCache,
};
pub use norm::{InstanceNorm, NormKind};

use ndarray::{Array4, ArrayD, ArrayViewMutD};
use std::collections::BTreeMap;

use crate::volume::{Domain, Volume};

/// Scalar type of the network stack. `f32` is the production dtype; `f64`
/// exists for finite-difference verification, where single precision sits
/// at the noise floor of the checks.
pub trait Real:
    num_traits::Float
    + num_traits::NumCast
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    const DTYPE: &'static str;

    fn from_f64(x: f64) -> Self {
        num_traits::cast(x).expect("finite f64 fits any Real")
    }

    fn to_f64(self) -> f64 {
        num_traits::cast(self).expect("Real fits f64")
    }

    fn to_le_bytes_vec(slice: &[Self]) -> Vec<u8>;
    fn from_le_bytes_vec(bytes: &[u8]) -> Option<Vec<Self>>;
}

impl Real for f32 {
    const DTYPE: &'static str = "f32";

    fn to_le_bytes_vec(slice: &[Self]) -> Vec<u8> {
        slice.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    fn from_le_bytes_vec(bytes: &[u8]) -> Option<Vec<Self>> {
        if bytes.len() % 4 != 0 {
            return None;
        }
        Some(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        )
    }
}

impl Real for f64 {
    const DTYPE: &'static str = "f64";

    fn to_le_bytes_vec(slice: &[Self]) -> Vec<u8> {
        slice.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    fn from_le_bytes_vec(bytes: &[u8]) -> Option<Vec<Self>> {
        if bytes.len() % 8 != 0 {
            return None;
        }
        Some(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
                .collect(),
        )
    }
}

/// Network activation tensor: `(D, H, W, C)`.
pub type Tensor<T> = Array4<T>;

/// Named parameter gradients accumulated during backward passes. BTreeMap
/// keeps iteration order deterministic, which the optimizer and checkpoint
/// layers rely on.
#[derive(Debug, Clone)]
pub struct GradStore<T> {
    map: BTreeMap<String, ArrayD<T>>,
}

impl<T: Real> GradStore<T> {
    pub fn new() -> Self {
        Self {
            map: BTreeMap::new(),
        }
    }

    /// Adds `g` into the slot for `name`, creating it if absent.
    pub fn accumulate(&mut self, name: &str, g: ArrayD<T>) {
        match self.map.get_mut(name) {
            Some(slot) => *slot = slot.clone() + g,
            None => {
                self.map.insert(name.to_string(), g);
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<T>> {
        self.map.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ArrayD<T>)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn clear(&mut self) {
        self.map.clear();
    }
}

impl<T: Real> Default for GradStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Visitor interface over a module's named parameters. Names are unique
/// within a training setup (network name prefixes guarantee it).
pub trait Module<T: Real> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, T>));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, T>));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, p| n += p.len());
        n
    }

    /// True when every parameter is finite.
    fn params_finite(&self) -> bool {
        let mut ok = true;
        self.visit_params(&mut |_, p| ok &= p.iter().all(|v| v.is_finite()));
        ok
    }
}

/// Adam with bias correction. State slots are keyed by parameter name and
/// materialize lazily on first update.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    slots: BTreeMap<String, AdamSlot<T>>,
}

#[derive(Debug, Clone)]
struct AdamSlot<T> {
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            slots: BTreeMap::new(),
        }
    }

    /// Advances the shared timestep. Call once per optimizer step, before
    /// the per-parameter updates of that step.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    pub fn timestep(&self) -> u64 {
        self.t
    }

    pub fn update(&mut self, name: &str, grad: &ArrayD<T>, mut param: ArrayViewMutD<'_, T>) {
        debug_assert!(self.t > 0, "begin_step before update");
        let n = param.len();
        debug_assert_eq!(grad.len(), n, "grad/param size mismatch for {name}");
        let slot = self.slots.entry(name.to_string()).or_insert_with(|| AdamSlot {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        });
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one = T::one();
        let corr1 = T::from_f64(1.0 - self.beta1.powi(self.t as i32));
        let corr2 = T::from_f64(1.0 - self.beta2.powi(self.t as i32));
        let lr = T::from_f64(self.lr);
        let eps = T::from_f64(self.eps);
        for ((p, g), (m, v)) in param
            .iter_mut()
            .zip(grad.iter())
            .zip(slot.m.iter_mut().zip(slot.v.iter_mut()))
        {
            *m = b1 * *m + (one - b1) * *g;
            *v = b2 * *v + (one - b2) * *g * *g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }

    /// Serialized view of the optimizer state, sorted by name.
    pub fn state(&self) -> impl Iterator<Item = (&String, &[T], &[T])> {
        self.slots.iter().map(|(k, s)| (k, &s.m[..], &s.v[..]))
    }

    pub fn restore_slot(&mut self, name: &str, m: Vec<T>, v: Vec<T>) {
        self.slots.insert(name.to_string(), AdamSlot { m, v });
    }

    pub fn set_timestep(&mut self, t: u64) {
        self.t = t;
    }
}

/// Converts a volume into a network tensor of the given dtype.
pub fn tensor_from_volume<T: Real>(v: &Volume) -> Tensor<T> {
    v.data().mapv(|x| T::from_f64(x))
}

/// Converts a network output back into a volume. The caller asserts the
/// values are already in `[-1, 1]` (tanh heads guarantee this); values are
/// clamped against representation drift at the boundary.
pub fn volume_from_tensor<T: Real>(t: &Tensor<T>, domain: Domain) -> Volume {
    let data = t.mapv(|x| x.to_f64().clamp(-1.0, 1.0));
    Volume::new_unchecked(data, domain)
}
