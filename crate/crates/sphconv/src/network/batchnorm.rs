//! Batch normalization over ragged per-sample activation matrices.
//!
//! Trees differ in node count, so train-mode statistics are pooled per
//! channel over the concatenation of all samples' rows at a layer. The
//! single-matrix entry points ([`batchnorm_train`], [`batchnorm_eval`],
//! [`batchnorm_backward`]) are the pooled versions applied to one matrix.

use ndarray::{Array1, Array2};

use crate::real::Real;

pub const BN_EPSILON: f64 = 1e-5;
/// `running ← momentum·running + (1 − momentum)·batch`.
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel scale/shift plus running statistics for eval mode.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<F: Real> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
    pub running_mean: Array1<F>,
    pub running_var: Array1<F>,
}

impl<F: Real> BatchNorm<F> {
    /// γ = 1, β = 0, running mean 0 / variance 1. Eval before any training
    /// step therefore normalizes against the initialized statistics.
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn update_running(&mut self, mean: &Array1<F>, var: &Array1<F>) {
        let m = F::from_f64(BN_MOMENTUM);
        let k = F::from_f64(1.0 - BN_MOMENTUM);
        self.running_mean.zip_mut_with(mean, |r, &b| *r = *r * m + b * k);
        self.running_var.zip_mut_with(var, |r, &b| *r = *r * m + b * k);
    }
}

/// Pooled batch statistics: biased per-channel mean/variance over all rows.
#[derive(Clone, Debug)]
pub struct BnStats<F: Real> {
    pub mean: Array1<F>,
    pub var: Array1<F>,
    pub inv_std: Array1<F>,
    pub rows: usize,
}

/// Two-pass per-channel mean and biased variance over the concatenation of
/// all matrices' rows. Summation order is fixed, so results are deterministic
/// regardless of how callers parallelize around this.
pub fn pooled_stats<F: Real>(xs: &[&Array2<F>]) -> BnStats<F> {
    let channels = xs[0].ncols();
    let rows: usize = xs.iter().map(|x| x.nrows()).sum();
    let inv_n = F::from_f64(1.0 / rows as f64);
    let mut mean = Array1::<F>::zeros(channels);
    for x in xs {
        for row in x.rows() {
            mean.zip_mut_with(&row, |m, &v| *m += v);
        }
    }
    mean.mapv_inplace(|m| m * inv_n);
    let mut var = Array1::<F>::zeros(channels);
    for x in xs {
        for row in x.rows() {
            for (c, &v) in row.iter().enumerate() {
                let d = v - mean[c];
                var[c] += d * d;
            }
        }
    }
    var.mapv_inplace(|v| v * inv_n);
    let eps = F::from_f64(BN_EPSILON);
    let inv_std = var.mapv(|v| F::one() / (v + eps).sqrt());
    BnStats { mean, var, inv_std, rows }
}

/// Normalize one sample's rows against pooled stats:
/// `x̂ = (x − μ)·inv_std`, `y = γ·x̂ + β`. Returns `(y, x̂)`.
pub fn normalize_train<F: Real>(
    x: &Array2<F>,
    bn: &BatchNorm<F>,
    stats: &BnStats<F>,
) -> (Array2<F>, Array2<F>) {
    let mut xhat = x.clone();
    for mut row in xhat.rows_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = (*v - stats.mean[c]) * stats.inv_std[c];
        }
    }
    let mut y = xhat.clone();
    for mut row in y.rows_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = bn.gamma[c] * *v + bn.beta[c];
        }
    }
    (y, xhat)
}

/// Eval-mode normalization against running statistics.
pub fn normalize_eval<F: Real>(x: &Array2<F>, bn: &BatchNorm<F>) -> Array2<F> {
    let eps = F::from_f64(BN_EPSILON);
    let inv_std: Array1<F> = bn.running_var.mapv(|v| F::one() / (v + eps).sqrt());
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = bn.gamma[c] * (*v - bn.running_mean[c]) * inv_std[c] + bn.beta[c];
        }
    }
    y
}

/// Backward through pooled train-mode normalization.
///
/// With `N` pooled rows, `dx̂ = dy·γ` and
/// `dx = inv_std/N · (N·dx̂ − Σdx̂ − x̂·Σ(dx̂·x̂))`,
/// where the sums run per channel over all samples' rows. Also returns
/// `dγ = Σ dy·x̂` and `dβ = Σ dy`.
pub fn bn_backward_pooled<F: Real>(
    dys: &[Array2<F>],
    xhats: &[&Array2<F>],
    bn: &BatchNorm<F>,
    stats: &BnStats<F>,
) -> (Vec<Array2<F>>, Array1<F>, Array1<F>) {
    let channels = bn.channels();
    let n = F::from_f64(stats.rows as f64);
    let mut dgamma = Array1::<F>::zeros(channels);
    let mut dbeta = Array1::<F>::zeros(channels);
    let mut sum_dxhat = Array1::<F>::zeros(channels);
    let mut sum_dxhat_xhat = Array1::<F>::zeros(channels);
    for (dy, xhat) in dys.iter().zip(xhats) {
        for (dy_row, xh_row) in dy.rows().into_iter().zip(xhat.rows()) {
            for c in 0..channels {
                let d = dy_row[c];
                let xh = xh_row[c];
                dgamma[c] += d * xh;
                dbeta[c] += d;
                let dxh = d * bn.gamma[c];
                sum_dxhat[c] += dxh;
                sum_dxhat_xhat[c] += dxh * xh;
            }
        }
    }
    let dxs = dys
        .iter()
        .zip(xhats)
        .map(|(dy, xhat)| {
            let mut dx = Array2::<F>::zeros(dy.dim());
            for ((mut dx_row, dy_row), xh_row) in
                dx.rows_mut().into_iter().zip(dy.rows()).zip(xhat.rows())
            {
                for c in 0..channels {
                    let dxh = dy_row[c] * bn.gamma[c];
                    dx_row[c] = stats.inv_std[c] / n
                        * (n * dxh - sum_dxhat[c] - xh_row[c] * sum_dxhat_xhat[c]);
                }
            }
            dx
        })
        .collect();
    (dxs, dgamma, dbeta)
}

/// Cache from a train-mode forward needed by [`batchnorm_backward`].
pub struct BnForwardCache<F: Real> {
    pub stats: BnStats<F>,
    pub xhat: Array2<F>,
}

/// Single-matrix train-mode batch normalization; updates the running
/// statistics in place with momentum [`BN_MOMENTUM`].
pub fn batchnorm_train<F: Real>(
    x: &Array2<F>,
    bn: &mut BatchNorm<F>,
) -> (Array2<F>, BnForwardCache<F>) {
    let stats = pooled_stats(&[x]);
    let (y, xhat) = normalize_train(x, bn, &stats);
    bn.update_running(&stats.mean, &stats.var);
    (y, BnForwardCache { stats, xhat })
}

/// Single-matrix eval-mode batch normalization.
pub fn batchnorm_eval<F: Real>(x: &Array2<F>, bn: &BatchNorm<F>) -> Array2<F> {
    normalize_eval(x, bn)
}

/// Single-matrix backward; returns `(dx, dγ, dβ)`.
pub fn batchnorm_backward<F: Real>(
    dy: &Array2<F>,
    cache: &BnForwardCache<F>,
    bn: &BatchNorm<F>,
) -> (Array2<F>, Array1<F>, Array1<F>) {
    let (mut dxs, dgamma, dbeta) = bn_backward_pooled(
        std::slice::from_ref(dy),
        &[&cache.xhat],
        bn,
        &cache.stats,
    );
    (dxs.pop().unwrap(), dgamma, dbeta)
}
