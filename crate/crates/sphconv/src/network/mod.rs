//! Layered model over a [`NetworkPlan`]: spherical convolutions along
//! parent→child edges, batch normalization and ReLU between layers, and a
//! fully connected softmax classifier on the root feature.
//!
//! Layer `l` computes, per neuron `i` with children `N(i)` in layer `l − 1`,
//!
//! ```text
//! z_i = (1/|N(i)|) · Σ_{j ∈ N(i)} W_κ(i,j) · a_j  +  b
//! ```
//!
//! where κ is the kernel bin of the displacement from the neuron's location
//! to the child's. Layers 1..L−1 apply batch norm then ReLU; layer L applies
//! ReLU only. One kernel is shared by all neurons of a layer, so congruent
//! neighborhoods produce identical pre-activations wherever they sit.
//!
//! A minibatch is a list of plans with different node counts: convolutions
//! run per sample (in parallel under [`ExecMode::Parallel`]) while batch-norm
//! statistics are pooled over the concatenation of all samples' neurons at
//! each layer. Forward never mutates the model; train-mode batch statistics
//! are recorded on the [`Tape`] and folded into the running statistics by
//! [`ModelParams::absorb_bn_stats`] at step time.

pub mod batchnorm;
pub mod loss;

use ndarray::linalg::general_mat_vec_mul;
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use thiserror::Error;

use crate::exec::{map_items, ExecMode};
use crate::geometry::Point3;
use crate::kernel::{ConfigError, KernelConfig, SphericalKernel};
use crate::octree::{layer_radius_for, NetworkPlan, PlanLayer};
use crate::real::Real;

pub use batchnorm::{
    batchnorm_backward, batchnorm_eval, batchnorm_train, BatchNorm, BnForwardCache, BnStats,
};
pub use loss::loss_softmax_ce;

use crate::geometry::BoundingCube;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("model expects {model} hidden layers, plan has {plan}")]
    LayerCountMismatch { model: usize, plan: usize },
    #[error("layer {layer}: channel mismatch, expected {expected}, got {got}")]
    ChannelMismatch { layer: usize, expected: usize, got: usize },
    #[error("layer {layer}: plan radius {plan_radius} does not match kernel radius {kernel_radius}")]
    RadiusMismatch { layer: usize, plan_radius: f64, kernel_radius: f64 },
    #[error("plan's final layer has {0} neurons; classification needs exactly one root")]
    RootNotUnique(usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("stale or mismatched tape: {0}")]
    MismatchedTape(String),
    #[error("backward requires a train-mode tape")]
    EvalTape,
    #[error("kernel config: {0}")]
    Config(#[from] ConfigError),
    #[error("model must have at least one hidden layer and two classes")]
    BadShape,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Azimuth × elevation × radial bin counts for the per-layer kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KernelShape {
    pub n: usize,
    pub p: usize,
    pub q: usize,
}

impl Default for KernelShape {
    fn default() -> Self {
        KernelShape { n: 8, p: 2, q: 3 }
    }
}

/// All learnable state: one spherical kernel per hidden layer, batch-norm
/// parameters for every layer but the last, and the classifier head.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<F: Real> {
    depth: usize,
    channels: Vec<usize>,
    num_classes: usize,
    kernels: Vec<SphericalKernel<F>>,
    bn: Vec<BatchNorm<F>>,
    fc_weight: Array2<F>,
    fc_bias: Array1<F>,
}

/// Channel widths used in the full-scale configuration.
pub const DEFAULT_CHANNELS: [usize; 8] = [32, 32, 64, 64, 128, 128, 256, 512];
/// Input feature width: raw (x, y, z) coordinates.
pub const INPUT_CHANNELS: usize = 3;

impl<F: Real> ModelParams<F> {
    /// Initialize a model for octrees of the given depth. Layer `l` gets a
    /// uniform kernel with sphere radius `ρ_l = 2^(l−L−1) · 2√3` (the plan
    /// radius for clouds normalized to `[−1, 1]³`).
    pub fn init<R: Rng + ?Sized>(
        depth: usize,
        channels: &[usize],
        shape: KernelShape,
        num_classes: usize,
        rng: &mut R,
    ) -> Result<Self, NetworkError> {
        if depth == 0 || channels.len() != depth || num_classes < 2 {
            return Err(NetworkError::BadShape);
        }
        let mut kernels = Vec::with_capacity(depth);
        for l in 1..=depth {
            let rho = layer_radius_for(BoundingCube::unit(), l, depth);
            let config = KernelConfig::preset_uniform(shape.n, shape.p, shape.q, rho)?;
            let in_ch = if l == 1 { INPUT_CHANNELS } else { channels[l - 2] };
            kernels.push(SphericalKernel::init(config, in_ch, channels[l - 1], rng));
        }
        let bn = channels[..depth - 1].iter().map(|&c| BatchNorm::new(c)).collect();
        let limit = (6.0 / (channels[depth - 1] + num_classes) as f64).sqrt();
        let fc_weight = Array2::from_shape_simple_fn((num_classes, channels[depth - 1]), || {
            F::from_f64(rng.gen_range(-limit..=limit))
        });
        let fc_bias = Array1::zeros(num_classes);
        Ok(ModelParams {
            depth,
            channels: channels.to_vec(),
            num_classes,
            kernels,
            bn,
            fc_weight,
            fc_bias,
        })
    }

    /// Assemble from explicit parts (checkpoint loading).
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        depth: usize,
        channels: Vec<usize>,
        num_classes: usize,
        kernels: Vec<SphericalKernel<F>>,
        bn: Vec<BatchNorm<F>>,
        fc_weight: Array2<F>,
        fc_bias: Array1<F>,
    ) -> Self {
        ModelParams { depth, channels, num_classes, kernels, bn, fc_weight, fc_bias }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn kernels(&self) -> &[SphericalKernel<F>] {
        &self.kernels
    }

    pub fn kernels_mut(&mut self) -> &mut [SphericalKernel<F>] {
        &mut self.kernels
    }

    pub fn bn(&self) -> &[BatchNorm<F>] {
        &self.bn
    }

    pub fn bn_mut(&mut self) -> &mut [BatchNorm<F>] {
        &mut self.bn
    }

    pub fn fc_weight(&self) -> &Array2<F> {
        &self.fc_weight
    }

    pub fn fc_weight_mut(&mut self) -> &mut Array2<F> {
        &mut self.fc_weight
    }

    pub fn fc_bias(&self) -> &Array1<F> {
        &self.fc_bias
    }

    pub fn fc_bias_mut(&mut self) -> &mut Array1<F> {
        &mut self.fc_bias
    }

    /// Number of scalar parameters.
    pub fn num_params(&self) -> usize {
        self.param_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Named views of every parameter tensor, in a fixed order shared with
    /// [`ParamGrads::tensors`].
    pub fn param_tensors(&self) -> Vec<(String, &[F])> {
        let mut out = Vec::new();
        for (l, k) in self.kernels.iter().enumerate() {
            for (kappa, w) in k.weights().iter().enumerate() {
                out.push((format!("layer{}.kernel.w{}", l + 1, kappa), w.as_slice().unwrap()));
            }
            out.push((format!("layer{}.kernel.bias", l + 1), k.bias().as_slice().unwrap()));
        }
        for (l, bn) in self.bn.iter().enumerate() {
            out.push((format!("layer{}.bn.gamma", l + 1), bn.gamma.as_slice().unwrap()));
            out.push((format!("layer{}.bn.beta", l + 1), bn.beta.as_slice().unwrap()));
        }
        out.push(("fc.weight".to_string(), self.fc_weight.as_slice().unwrap()));
        out.push(("fc.bias".to_string(), self.fc_bias.as_slice().unwrap()));
        out
    }

    /// Mutable variant of [`ModelParams::param_tensors`].
    pub fn param_tensors_mut(&mut self) -> Vec<(String, &mut [F])> {
        let mut out: Vec<(String, &mut [F])> = Vec::new();
        for (l, k) in self.kernels.iter_mut().enumerate() {
            let (weights, bias) = k.weights_bias_mut();
            for (kappa, w) in weights.iter_mut().enumerate() {
                out.push((format!("layer{}.kernel.w{}", l + 1, kappa), w.as_slice_mut().unwrap()));
            }
            out.push((format!("layer{}.kernel.bias", l + 1), bias.as_slice_mut().unwrap()));
        }
        for (l, bn) in self.bn.iter_mut().enumerate() {
            out.push((format!("layer{}.bn.gamma", l + 1), bn.gamma.as_slice_mut().unwrap()));
            out.push((format!("layer{}.bn.beta", l + 1), bn.beta.as_slice_mut().unwrap()));
        }
        out.push(("fc.weight".to_string(), self.fc_weight.as_slice_mut().unwrap()));
        out.push(("fc.bias".to_string(), self.fc_bias.as_slice_mut().unwrap()));
        out
    }

    fn check_plan(&self, plan: &NetworkPlan) -> Result<(), NetworkError> {
        if plan.depth() != self.depth {
            return Err(NetworkError::LayerCountMismatch { model: self.depth, plan: plan.depth() });
        }
        for l in 1..=self.depth {
            let kernel_radius = self.kernels[l - 1].config().rho();
            let plan_radius = plan.layer(l).radius;
            if (plan_radius - kernel_radius).abs() > 1e-9 * kernel_radius.max(1.0) {
                return Err(NetworkError::RadiusMismatch { layer: l, plan_radius, kernel_radius });
            }
        }
        let root = plan.layer(self.depth).num_neurons();
        if root != 1 {
            return Err(NetworkError::RootNotUnique(root));
        }
        Ok(())
    }

    /// Forward pass for one sample; batch of one. See [`Self::batch_forward`].
    pub fn forward(
        &self,
        plan: &NetworkPlan,
        mode: Mode,
    ) -> Result<(Array1<F>, Tape<F>), NetworkError> {
        let (mut logits, tape) = self.batch_forward(&[plan], mode, ExecMode::Sequential)?;
        Ok((logits.pop().unwrap(), tape))
    }

    /// Forward pass over a minibatch of plans.
    ///
    /// Layer-0 features are the raw normalized xyz coordinates. In train mode
    /// batch-norm statistics are pooled over all samples' neurons at each
    /// layer and recorded on the tape; in eval mode the running statistics
    /// are used and results are per-sample deterministic.
    pub fn batch_forward(
        &self,
        plans: &[&NetworkPlan],
        mode: Mode,
        exec: ExecMode,
    ) -> Result<(Vec<Array1<F>>, Tape<F>), NetworkError> {
        if plans.is_empty() {
            return Err(NetworkError::EmptyBatch);
        }
        for plan in plans {
            self.check_plan(plan)?;
        }
        let depth = self.depth;
        let mut samples: Vec<SampleTape<F>> = plans
            .iter()
            .map(|plan| SampleTape {
                input: xyz_features(plan.layer(0).locations.as_slice()),
                layers: Vec::with_capacity(depth),
                logits: Array1::zeros(self.num_classes),
            })
            .collect();
        let mut bn_stats: Vec<Option<BnStats<F>>> = vec![None; depth.saturating_sub(1)];

        for l in 1..=depth {
            let kernel = &self.kernels[l - 1];
            // Convolutions are independent per sample.
            let conv: Vec<(Array2<F>, Vec<u32>)> = {
                let inputs: Vec<(&NetworkPlan, &Array2<F>)> = plans
                    .iter()
                    .zip(&samples)
                    .map(|(plan, s)| {
                        (*plan, if l == 1 { &s.input } else { &s.layers[l - 2].a })
                    })
                    .collect();
                map_items(exec, &inputs, |(plan, a_in)| {
                    conv_layer(kernel, plan.layer(l), &plan.layer(l - 1).locations, a_in)
                })
            };

            let zs: Vec<Array2<F>> = conv.iter().map(|(z, _)| z.clone()).collect();
            let (ys, xhats): (Vec<Array2<F>>, Vec<Option<Array2<F>>>) = if l < depth {
                let bn = &self.bn[l - 1];
                match mode {
                    Mode::Train => {
                        let refs: Vec<&Array2<F>> = zs.iter().collect();
                        let stats = batchnorm::pooled_stats(&refs);
                        let pairs = map_items(exec, &zs, |z| {
                            let (y, xhat) = batchnorm::normalize_train(z, bn, &stats);
                            (y, Some(xhat))
                        });
                        bn_stats[l - 1] = Some(stats);
                        pairs.into_iter().unzip()
                    }
                    Mode::Eval => {
                        let ys = map_items(exec, &zs, |z| batchnorm::normalize_eval(z, bn));
                        let n = ys.len();
                        (ys, vec![None; n])
                    }
                }
            } else {
                let n = zs.len();
                (zs.clone(), vec![None; n])
            };

            for (idx, ((z, kappas), (y, xhat))) in
                conv.into_iter().zip(ys.into_iter().zip(xhats)).enumerate()
            {
                let a = y.mapv(|v| v.max(F::zero()));
                let layer = plans[idx].layer(l);
                let neighbor_counts =
                    (0..layer.num_neurons()).map(|i| layer.neighbor_count(i) as u32).collect();
                samples[idx].layers.push(LayerTape {
                    kappas,
                    neighbor_counts,
                    z,
                    xhat,
                    post_bn: y,
                    a,
                });
            }
        }

        let mut logits_out = Vec::with_capacity(plans.len());
        for s in samples.iter_mut() {
            let root = s.layers[depth - 1].a.row(0);
            let mut logits = self.fc_bias.clone();
            general_mat_vec_mul(F::one(), &self.fc_weight, &root, F::one(), &mut logits);
            s.logits = logits.clone();
            logits_out.push(logits);
        }

        Ok((logits_out, Tape { mode, samples, bn_stats }))
    }

    /// Fold the tape's train-mode batch statistics into the running
    /// statistics (momentum [`batchnorm::BN_MOMENTUM`]). Call once per
    /// optimizer step; forward itself never mutates the model.
    pub fn absorb_bn_stats(&mut self, tape: &Tape<F>) {
        for (l, stats) in tape.bn_stats.iter().enumerate() {
            if let Some(stats) = stats {
                self.bn[l].update_running(&stats.mean, &stats.var);
            }
        }
    }

    /// Backward pass for one sample; see [`Self::batch_backward`].
    pub fn backward(
        &self,
        tape: &Tape<F>,
        plan: &NetworkPlan,
        logit_grad: &Array1<F>,
    ) -> Result<ParamGrads<F>, NetworkError> {
        self.batch_backward(tape, &[plan], std::slice::from_ref(logit_grad), ExecMode::Sequential)
    }

    /// Backward pass over the minibatch recorded on `tape`.
    ///
    /// Returns parameter gradients SUMMED over samples (callers divide by the
    /// batch size for an average). For every edge with bin κ,
    /// `∂L/∂W_κ += (1/|N_i|)·δ_i·a_jᵀ` and `∂L/∂a_j += (1/|N_i|)·W_κᵀ·δ_i`;
    /// `∂L/∂b = Σ_i δ_i`. Batch-norm backward runs pooled over the batch,
    /// matching the forward statistics.
    pub fn batch_backward(
        &self,
        tape: &Tape<F>,
        plans: &[&NetworkPlan],
        logit_grads: &[Array1<F>],
        exec: ExecMode,
    ) -> Result<ParamGrads<F>, NetworkError> {
        if tape.mode != Mode::Train {
            return Err(NetworkError::EvalTape);
        }
        if tape.samples.len() != plans.len() || logit_grads.len() != plans.len() {
            return Err(NetworkError::MismatchedTape(format!(
                "tape holds {} samples, got {} plans and {} logit grads",
                tape.samples.len(),
                plans.len(),
                logit_grads.len()
            )));
        }
        for (s, plan) in tape.samples.iter().zip(plans) {
            if s.layers.len() != self.depth || plan.depth() != self.depth {
                return Err(NetworkError::MismatchedTape("layer count differs".into()));
            }
            for l in 1..=self.depth {
                if s.layers[l - 1].a.nrows() != plan.layer(l).num_neurons()
                    || s.layers[l - 1].kappas.len() != plan.layer(l).num_edges()
                {
                    return Err(NetworkError::MismatchedTape(format!(
                        "layer {l} shape differs from plan"
                    )));
                }
            }
        }

        let depth = self.depth;
        let mut grads = ParamGrads::zeros_like(self);

        // Classifier backward; the root feature is the single layer-L neuron.
        let mut das: Vec<Array2<F>> = Vec::with_capacity(plans.len());
        for (s, dlogits) in tape.samples.iter().zip(logit_grads) {
            let root = s.layers[depth - 1].a.row(0);
            outer_acc(&mut grads.fc_weight, F::one(), dlogits.view(), root);
            grads.fc_bias.zip_mut_with(dlogits, |g, &d| *g += d);
            let mut da_root = Array2::zeros((1, self.channels[depth - 1]));
            general_mat_vec_mul(
                F::one(),
                &self.fc_weight.t(),
                &dlogits.view(),
                F::one(),
                &mut da_root.row_mut(0),
            );
            das.push(da_root);
        }

        for l in (1..=depth).rev() {
            // ReLU backward: zero where the pre-activation was non-positive.
            let mut dys: Vec<Array2<F>> = das
                .iter()
                .zip(&tape.samples)
                .map(|(da, s)| {
                    let mut dy = da.clone();
                    dy.zip_mut_with(&s.layers[l - 1].post_bn, |d, &y| {
                        if y <= F::zero() {
                            *d = F::zero();
                        }
                    });
                    dy
                })
                .collect();

            let dzs: Vec<Array2<F>> = if l < depth {
                let stats = tape.bn_stats[l - 1]
                    .as_ref()
                    .ok_or_else(|| NetworkError::MismatchedTape("missing bn stats".into()))?;
                let xhats: Vec<&Array2<F>> = tape
                    .samples
                    .iter()
                    .map(|s| {
                        s.layers[l - 1]
                            .xhat
                            .as_ref()
                            .ok_or_else(|| NetworkError::MismatchedTape("missing xhat".into()))
                    })
                    .collect::<Result<_, _>>()?;
                let (dzs, dgamma, dbeta) =
                    batchnorm::bn_backward_pooled(&dys, &xhats, &self.bn[l - 1], stats);
                grads.bn[l - 1].gamma += &dgamma;
                grads.bn[l - 1].beta += &dbeta;
                dzs
            } else {
                std::mem::take(&mut dys)
            };

            // Per-sample convolution backward, reduced in sample order.
            let kernel = &self.kernels[l - 1];
            let inputs: Vec<(usize, &Array2<F>)> = (0..plans.len())
                .map(|s| {
                    let a_in = if l == 1 {
                        &tape.samples[s].input
                    } else {
                        &tape.samples[s].layers[l - 2].a
                    };
                    (s, a_in)
                })
                .collect();
            let partials: Vec<(KernelGrads<F>, Array2<F>)> =
                map_items(exec, &inputs, |&(s, a_in)| {
                    conv_backward(
                        kernel,
                        plans[s].layer(l),
                        &tape.samples[s].layers[l - 1].kappas,
                        a_in,
                        &dzs[s],
                    )
                });
            let mut next_das = Vec::with_capacity(plans.len());
            for (partial, da_prev) in partials {
                grads.kernels[l - 1].accumulate(&partial);
                next_das.push(da_prev);
            }
            das = next_das;
        }

        Ok(grads)
    }
}

/// Layer-0 feature matrix: one row of `(x, y, z)` per raw point.
fn xyz_features<F: Real>(points: &[Point3]) -> Array2<F> {
    let mut a = Array2::zeros((points.len(), INPUT_CHANNELS));
    for (i, p) in points.iter().enumerate() {
        a[[i, 0]] = F::from_f64(p.x);
        a[[i, 1]] = F::from_f64(p.y);
        a[[i, 2]] = F::from_f64(p.z);
    }
    a
}

/// One layer's spherical convolution for one sample: bin every edge, then
/// `z_i = (1/|N_i|)·Σ W_κ·a_j + b` via accumulated mat-vec products.
pub fn conv_layer<F: Real>(
    kernel: &SphericalKernel<F>,
    layer: &PlanLayer,
    below: &[Point3],
    a_in: &Array2<F>,
) -> (Array2<F>, Vec<u32>) {
    let m = layer.num_neurons();
    let out_ch = kernel.out_channels();
    debug_assert_eq!(a_in.ncols(), kernel.in_channels());
    let cfg = kernel.config();
    let weights = kernel.weights();
    let mut z = Array2::<F>::zeros((m, out_ch));
    let mut kappas = vec![0u32; layer.num_edges()];
    for i in 0..m {
        let center = layer.locations[i];
        let range = layer.edge_range(i);
        let inv = F::from_f64(1.0 / range.len() as f64);
        let mut zrow = z.row_mut(i);
        for e in range {
            let j = layer.children[e] as usize;
            let bin = cfg.assign_bin_unchecked(center, below[j]);
            kappas[e] = bin.kappa() as u32;
            general_mat_vec_mul(F::one(), &weights[bin.kappa()], &a_in.row(j), F::one(), &mut zrow);
        }
        zrow.mapv_inplace(|v| v * inv);
        zrow += &kernel.bias().view();
    }
    (z, kappas)
}

/// Backward of [`conv_layer`] for one sample: per-bin weight gradients, bias
/// gradient, and the gradient w.r.t. the child activations.
fn conv_backward<F: Real>(
    kernel: &SphericalKernel<F>,
    layer: &PlanLayer,
    kappas: &[u32],
    a_in: &Array2<F>,
    dz: &Array2<F>,
) -> (KernelGrads<F>, Array2<F>) {
    let mut grads = KernelGrads::zeros(
        kernel.config().bin_count(),
        kernel.out_channels(),
        kernel.in_channels(),
    );
    let mut da = Array2::<F>::zeros(a_in.dim());
    let weights = kernel.weights();
    for i in 0..layer.num_neurons() {
        let range = layer.edge_range(i);
        let inv = F::from_f64(1.0 / range.len() as f64);
        let dzrow = dz.row(i);
        grads.bias.zip_mut_with(&dzrow, |g, &d| *g += d);
        for e in range {
            let j = layer.children[e] as usize;
            let kappa = kappas[e] as usize;
            outer_acc(&mut grads.weights[kappa], inv, dzrow, a_in.row(j));
            general_mat_vec_mul(inv, &weights[kappa].t(), &dzrow, F::one(), &mut da.row_mut(j));
        }
    }
    (grads, da)
}

/// `dw += scale · u vᵀ` on contiguous storage.
fn outer_acc<F: Real>(dw: &mut Array2<F>, scale: F, u: ArrayView1<F>, v: ArrayView1<F>) {
    let (rows, cols) = dw.dim();
    let dws = dw.as_slice_mut().expect("standard layout");
    let us = u.as_slice().expect("contiguous row");
    let vs = v.as_slice().expect("contiguous row");
    for r in 0..rows {
        let s = scale * us[r];
        let drow = &mut dws[r * cols..(r + 1) * cols];
        for (d, &vc) in drow.iter_mut().zip(vs) {
            *d += s * vc;
        }
    }
}

/// Per-layer cache recorded by the forward pass.
#[derive(Clone, Debug)]
pub struct LayerTape<F: Real> {
    /// Bin index per edge, aligned with the plan layer's CSR edge order.
    pub kappas: Vec<u32>,
    /// `|N(i)|` per neuron.
    pub neighbor_counts: Vec<u32>,
    /// Pre-activations `z` (post averaging + bias, pre batch-norm).
    pub z: Array2<F>,
    /// Normalized pre-affine values; present on train-mode tapes below the
    /// last layer.
    pub xhat: Option<Array2<F>>,
    /// Post-batch-norm, pre-ReLU values (equals `z` on the last layer).
    pub post_bn: Array2<F>,
    /// Post-ReLU activations, the next layer's input.
    pub a: Array2<F>,
}

/// Everything the forward pass caches for one sample.
#[derive(Clone, Debug)]
pub struct SampleTape<F: Real> {
    pub input: Array2<F>,
    pub layers: Vec<LayerTape<F>>,
    pub logits: Array1<F>,
}

/// Forward cache for a minibatch, including the pooled train-mode batch-norm
/// statistics per hidden layer below the last.
#[derive(Clone, Debug)]
pub struct Tape<F: Real> {
    pub mode: Mode,
    pub samples: Vec<SampleTape<F>>,
    pub bn_stats: Vec<Option<BnStats<F>>>,
}

/// Gradients for one kernel's weight bank.
#[derive(Clone, Debug)]
pub struct KernelGrads<F: Real> {
    pub weights: Vec<Array2<F>>,
    pub bias: Array1<F>,
}

impl<F: Real> KernelGrads<F> {
    fn zeros(bins: usize, out_ch: usize, in_ch: usize) -> Self {
        KernelGrads {
            weights: (0..bins).map(|_| Array2::zeros((out_ch, in_ch))).collect(),
            bias: Array1::zeros(out_ch),
        }
    }

    fn accumulate(&mut self, other: &KernelGrads<F>) {
        for (w, o) in self.weights.iter_mut().zip(&other.weights) {
            *w += o;
        }
        self.bias += &other.bias;
    }
}

/// Gradients for batch-norm scale/shift.
#[derive(Clone, Debug)]
pub struct BnGrads<F: Real> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
}

/// Gradients for every parameter tensor, mirroring [`ModelParams`]' layout.
/// Also reused as the optimizer's velocity buffer.
#[derive(Clone, Debug)]
pub struct ParamGrads<F: Real> {
    pub kernels: Vec<KernelGrads<F>>,
    pub bn: Vec<BnGrads<F>>,
    pub fc_weight: Array2<F>,
    pub fc_bias: Array1<F>,
}

impl<F: Real> ParamGrads<F> {
    pub fn zeros_like(params: &ModelParams<F>) -> Self {
        ParamGrads {
            kernels: params
                .kernels
                .iter()
                .map(|k| {
                    KernelGrads::zeros(k.config().bin_count(), k.out_channels(), k.in_channels())
                })
                .collect(),
            bn: params
                .bn
                .iter()
                .map(|bn| BnGrads {
                    gamma: Array1::zeros(bn.channels()),
                    beta: Array1::zeros(bn.channels()),
                })
                .collect(),
            fc_weight: Array2::zeros(params.fc_weight.dim()),
            fc_bias: Array1::zeros(params.fc_bias.len()),
        }
    }

    /// Scale every tensor by `s` (e.g. 1/batch for averaging).
    pub fn scale(&mut self, s: F) {
        for (_, t) in self.tensors_mut() {
            for v in t {
                *v *= s;
            }
        }
    }

    /// Named tensor views in the same fixed order as
    /// [`ModelParams::param_tensors`].
    pub fn tensors(&self) -> Vec<(String, &[F])> {
        let mut out = Vec::new();
        for (l, k) in self.kernels.iter().enumerate() {
            for (kappa, w) in k.weights.iter().enumerate() {
                out.push((format!("layer{}.kernel.w{}", l + 1, kappa), w.as_slice().unwrap()));
            }
            out.push((format!("layer{}.kernel.bias", l + 1), k.bias.as_slice().unwrap()));
        }
        for (l, bn) in self.bn.iter().enumerate() {
            out.push((format!("layer{}.bn.gamma", l + 1), bn.gamma.as_slice().unwrap()));
            out.push((format!("layer{}.bn.beta", l + 1), bn.beta.as_slice().unwrap()));
        }
        out.push(("fc.weight".to_string(), self.fc_weight.as_slice().unwrap()));
        out.push(("fc.bias".to_string(), self.fc_bias.as_slice().unwrap()));
        out
    }

    /// Mutable variant of [`ParamGrads::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [F])> {
        let mut out: Vec<(String, &mut [F])> = Vec::new();
        for (l, k) in self.kernels.iter_mut().enumerate() {
            for (kappa, w) in k.weights.iter_mut().enumerate() {
                out.push((format!("layer{}.kernel.w{}", l + 1, kappa), w.as_slice_mut().unwrap()));
            }
            out.push((format!("layer{}.kernel.bias", l + 1), k.bias.as_slice_mut().unwrap()));
        }
        for (l, bn) in self.bn.iter_mut().enumerate() {
            out.push((format!("layer{}.bn.gamma", l + 1), bn.gamma.as_slice_mut().unwrap()));
            out.push((format!("layer{}.bn.beta", l + 1), bn.beta.as_slice_mut().unwrap()));
        }
        out.push(("fc.weight".to_string(), self.fc_weight.as_slice_mut().unwrap()));
        out.push(("fc.bias".to_string(), self.fc_bias.as_slice_mut().unwrap()));
        out
    }
}
