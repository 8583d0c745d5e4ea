//! Instance normalization: per-sample, per-channel standardization over the
//! spatial axes. Identical at train and inference time, which is what makes
//! single-image translation behave consistently between the two.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::{GradStore, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    Instance,
    /// No normalization layer at this position.
    None,
}

const EPS: f64 = 1e-5;

/// Instance norm over `(D, H, W)` per channel. Learned affine parameters are
/// optional and off by default.
#[derive(Debug, Clone)]
pub struct InstanceNorm<T> {
    name: String,
    channels: usize,
    affine: Option<(Array1<T>, Array1<T>)>, // (gamma, beta)
}

/// Forward-pass byproducts needed by the backward pass.
#[derive(Debug, Clone)]
pub struct NormCache<T> {
    pub x_hat: Tensor<T>,
    pub inv_std: Array1<T>,
}

impl<T: Real> InstanceNorm<T> {
    pub fn new(name: impl Into<String>, channels: usize, affine: bool) -> Self {
        Self {
            name: name.into(),
            channels,
            affine: affine.then(|| (Array1::from_elem(channels, T::one()), Array1::zeros(channels))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn param_count(&self) -> usize {
        self.affine.as_ref().map_or(0, |_| 2 * self.channels)
    }

    pub(crate) fn affine_mut(&mut self) -> Option<(&mut Array1<T>, &mut Array1<T>)> {
        self.affine.as_mut().map(|(g, b)| (g, b))
    }

    pub(crate) fn affine(&self) -> Option<(&Array1<T>, &Array1<T>)> {
        self.affine.as_ref().map(|(g, b)| (g, b))
    }

    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, NormCache<T>) {
        let (d, h, w, c) = x.dim();
        debug_assert_eq!(c, self.channels);
        let n = (d * h * w) as f64;
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        let xs = x.as_slice().expect("standard layout");
        for pos in 0..(d * h * w) {
            let off = pos * c;
            for (ci, m) in mean.iter_mut().enumerate() {
                *m = *m + xs[off + ci];
            }
        }
        let inv_n = T::from_f64(1.0 / n);
        for m in mean.iter_mut() {
            *m = *m * inv_n;
        }
        for pos in 0..(d * h * w) {
            let off = pos * c;
            for (ci, v) in var.iter_mut().enumerate() {
                let t = xs[off + ci] - mean[ci];
                *v = *v + t * t;
            }
        }
        let inv_std: Array1<T> = var
            .iter()
            .map(|&v| T::one() / (v * inv_n + T::from_f64(EPS)).sqrt())
            .collect();

        let mut x_hat = Tensor::<T>::zeros(x.dim());
        {
            let hs = x_hat.as_slice_mut().expect("standard layout");
            for pos in 0..(d * h * w) {
                let off = pos * c;
                for ci in 0..c {
                    hs[off + ci] = (xs[off + ci] - mean[ci]) * inv_std[ci];
                }
            }
        }
        let y = match &self.affine {
            None => x_hat.clone(),
            Some((gamma, beta)) => {
                let mut y = x_hat.clone();
                let ys = y.as_slice_mut().expect("standard layout");
                for pos in 0..(d * h * w) {
                    let off = pos * c;
                    for ci in 0..c {
                        ys[off + ci] = ys[off + ci] * gamma[ci] + beta[ci];
                    }
                }
                y
            }
        };
        (y, NormCache { x_hat, inv_std })
    }

    pub fn backward(
        &self,
        cache: &NormCache<T>,
        d_out: &Tensor<T>,
        grads: &mut GradStore<T>,
    ) -> Tensor<T> {
        let (d, h, w, c) = d_out.dim();
        let n = d * h * w;
        let inv_n = T::from_f64(1.0 / n as f64);
        let hs = cache.x_hat.as_slice().expect("standard layout");
        let ds = d_out.as_slice().expect("standard layout");

        // Affine gradients and the effective upstream on x_hat.
        let mut d_hat_scale = vec![T::one(); c];
        if let Some((gamma, _)) = &self.affine {
            let mut dgamma = vec![T::zero(); c];
            let mut dbeta = vec![T::zero(); c];
            for pos in 0..n {
                let off = pos * c;
                for ci in 0..c {
                    dgamma[ci] = dgamma[ci] + ds[off + ci] * hs[off + ci];
                    dbeta[ci] = dbeta[ci] + ds[off + ci];
                }
            }
            grads.accumulate(
                &format!("{}.gamma", self.name),
                Array1::from_vec(dgamma).into_dyn(),
            );
            grads.accumulate(
                &format!("{}.beta", self.name),
                Array1::from_vec(dbeta).into_dyn(),
            );
            for ci in 0..c {
                d_hat_scale[ci] = gamma[ci];
            }
        }

        // dx = inv_std * (dxh - mean(dxh) - x_hat * mean(dxh * x_hat))
        let mut sum_dh = vec![T::zero(); c];
        let mut sum_dh_h = vec![T::zero(); c];
        for pos in 0..n {
            let off = pos * c;
            for ci in 0..c {
                let dh = ds[off + ci] * d_hat_scale[ci];
                sum_dh[ci] = sum_dh[ci] + dh;
                sum_dh_h[ci] = sum_dh_h[ci] + dh * hs[off + ci];
            }
        }
        let mut dx = Tensor::<T>::zeros((d, h, w, c));
        {
            let dxs = dx.as_slice_mut().expect("standard layout");
            for pos in 0..n {
                let off = pos * c;
                for ci in 0..c {
                    let dh = ds[off + ci] * d_hat_scale[ci];
                    dxs[off + ci] = cache.inv_std[ci]
                        * (dh - sum_dh[ci] * inv_n - hs[off + ci] * (sum_dh_h[ci] * inv_n));
                }
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::rng::Stream;
    use ndarray::Array4;

    #[test]
    fn output_is_standardized_per_channel() {
        let mut rng = Stream::new(5, 0);
        let x = Array4::from_shape_fn((2, 4, 4, 3), |_| rng.gaussian() * 3.0 + 1.5);
        let norm = InstanceNorm::<f64>::new("n", 3, false);
        let (y, _) = norm.forward(&x);
        for ci in 0..3 {
            let vals: Vec<f64> = y
                .indexed_iter()
                .filter(|((_, _, _, c), _)| *c == ci)
                .map(|(_, &v)| v)
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(var, 1.0, epsilon = 1e-4);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Stream::new(6, 0);
        let x = Array4::from_shape_fn((1, 3, 3, 2), |_| rng.gaussian());
        let probe = Array4::from_shape_fn((1, 3, 3, 2), |_| rng.gaussian());
        for affine in [false, true] {
            let norm = InstanceNorm::<f64>::new("n", 2, affine);
            let loss = |x: &Tensor<f64>| {
                let (y, _) = norm.forward(x);
                y.iter().zip(probe.iter()).map(|(a, b)| a * b).sum::<f64>()
            };
            let (_, cache) = norm.forward(&x);
            let mut grads = GradStore::new();
            let dx = norm.backward(&cache, &probe, &mut grads);
            let eps = 1e-6;
            let mut xp = x.clone();
            for idx in [[0, 0, 0, 0], [0, 2, 1, 1], [0, 1, 2, 0]] {
                let base = xp[idx];
                xp[idx] = base + eps;
                let up = loss(&xp);
                xp[idx] = base - eps;
                let dn = loss(&xp);
                xp[idx] = base;
                assert_abs_diff_eq!(dx[idx], (up - dn) / (2.0 * eps), epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn affine_gradients_match_finite_differences() {
        let mut rng = Stream::new(9, 0);
        let x = Array4::from_shape_fn((1, 4, 2, 2), |_| rng.gaussian());
        let probe = Array4::from_shape_fn((1, 4, 2, 2), |_| rng.gaussian());
        let mut norm = InstanceNorm::<f64>::new("n", 2, true);
        let (_, cache) = norm.forward(&x);
        let mut grads = GradStore::new();
        norm.backward(&cache, &probe, &mut grads);
        let dgamma = grads.get("n.gamma").unwrap().clone();
        let eps = 1e-6;
        for ci in 0..2 {
            let (gamma, _) = norm.affine_mut().unwrap();
            gamma[ci] = gamma[ci] + eps;
            let up = {
                let (y, _) = norm.forward(&x);
                y.iter().zip(probe.iter()).map(|(a, b)| a * b).sum::<f64>()
            };
            let (gamma, _) = norm.affine_mut().unwrap();
            gamma[ci] = gamma[ci] - 2.0 * eps;
            let dn = {
                let (y, _) = norm.forward(&x);
                y.iter().zip(probe.iter()).map(|(a, b)| a * b).sum::<f64>()
            };
            let (gamma, _) = norm.affine_mut().unwrap();
            gamma[ci] = gamma[ci] + eps;
            assert_abs_diff_eq!(dgamma[[ci]], (up - dn) / (2.0 * eps), epsilon = 1e-5);
        }
    }
}
