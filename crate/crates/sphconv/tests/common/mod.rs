//! Shared test oracles, deliberately independent of the library's fast
//! paths: plain-loop reference forward pass, linear-scan bin assignment, and
//! a finite-difference gradient harness.

#![allow(dead_code)]

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sphconv::geometry::{Point3, PointCloud};
use sphconv::kernel::KernelConfig;
use sphconv::network::{loss_softmax_ce, KernelShape, Mode, ModelParams};
use sphconv::octree::{build_octree, NetworkPlan};
use sphconv::ExecMode;

pub fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            Point3::new(
                rng.gen_range(-1.0..=1.0),
                rng.gen_range(-1.0..=1.0),
                rng.gen_range(-1.0..=1.0),
            )
        })
        .collect()
}

/// Model with randomized batch-norm state and biases so eval-mode comparisons
/// exercise every parameter.
pub fn random_model(
    depth: usize,
    channels: &[usize],
    classes: usize,
    seed: u64,
) -> ModelParams<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model =
        ModelParams::init(depth, channels, KernelShape { n: 4, p: 2, q: 2 }, classes, &mut rng)
            .unwrap();
    for kernel in model.kernels_mut() {
        for v in kernel.bias_mut().iter_mut() {
            *v = rng.gen_range(-0.2..0.2);
        }
    }
    for bn in model.bn_mut() {
        for v in bn.gamma.iter_mut() {
            *v = rng.gen_range(0.5..1.5);
        }
        for v in bn.beta.iter_mut() {
            *v = rng.gen_range(-0.3..0.3);
        }
        for v in bn.running_mean.iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        for v in bn.running_var.iter_mut() {
            *v = rng.gen_range(0.25..2.0);
        }
    }
    for v in model.fc_bias_mut().iter_mut() {
        *v = rng.gen_range(-0.2..0.2);
    }
    model
}

pub fn plan_for(cloud: &PointCloud, depth: usize) -> NetworkPlan {
    build_octree(cloud, depth).unwrap().to_network_plan(cloud).unwrap()
}

/// Linear-scan bin assignment: same conventions as the spec prose (half-open
/// intervals, last interval right-closed, radial clamp for outliers), written
/// without binary search or shared helpers.
pub fn reference_bin(cfg: &KernelConfig, center: Point3, child: Point3) -> usize {
    let dx = child.x - center.x;
    let dy = child.y - center.y;
    let dz = child.z - center.z;
    if dx == 0.0 && dy == 0.0 && dz == 0.0 {
        return 0;
    }
    let r = (dx * dx + dy * dy + dz * dz).sqrt();
    let theta = dy.atan2(dx);
    let phi = (dz / r).clamp(-1.0, 1.0).asin();

    fn scan(edges: &[f64], x: f64) -> usize {
        let bins = edges.len() - 1;
        for k in 1..=bins {
            if x >= edges[k - 1] && (x < edges[k] || k == bins) {
                return k;
            }
        }
        1
    }

    let n = cfg.num_theta_bins();
    let p = cfg.num_phi_bins();
    let q = cfg.num_r_bins();
    let k_theta = scan(cfg.theta_edges(), theta);
    let k_phi = scan(cfg.phi_edges(), phi);
    let k_r = if r > cfg.rho() { q } else { scan(cfg.r_edges(), r) };
    k_theta + (k_phi - 1) * n + (k_r - 1) * n * p
}

/// Naive dense eval-mode forward: explicit loops over neurons, children and
/// channels, batch norm from running statistics, ReLU, and the classifier.
pub fn reference_forward_eval(plan: &NetworkPlan, model: &ModelParams<f64>) -> Vec<f64> {
    let depth = model.depth();
    let mut acts: Vec<Vec<f64>> = plan
        .layer(0)
        .locations
        .iter()
        .map(|p| vec![p.x, p.y, p.z])
        .collect();

    for l in 1..=depth {
        let kernel = &model.kernels()[l - 1];
        let cfg = kernel.config();
        let out_ch = kernel.out_channels();
        let in_ch = kernel.in_channels();
        let layer = plan.layer(l);
        let below = &plan.layer(l - 1).locations;
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(layer.num_neurons());
        for i in 0..layer.num_neurons() {
            let center = layer.locations[i];
            let children = layer.children_of(i);
            let mut z = vec![0.0; out_ch];
            for &j in children {
                let kappa = reference_bin(cfg, center, below[j as usize]);
                let w = &kernel.weights()[kappa];
                for o in 0..out_ch {
                    let mut acc = 0.0;
                    for c in 0..in_ch {
                        acc += w[[o, c]] * acts[j as usize][c];
                    }
                    z[o] += acc;
                }
            }
            for (o, zo) in z.iter_mut().enumerate() {
                *zo = *zo / children.len() as f64 + kernel.bias()[o];
            }
            let y: Vec<f64> = if l < depth {
                let bn = &model.bn()[l - 1];
                (0..out_ch)
                    .map(|c| {
                        bn.gamma[c] * (z[c] - bn.running_mean[c])
                            / (bn.running_var[c] + 1e-5).sqrt()
                            + bn.beta[c]
                    })
                    .collect()
            } else {
                z
            };
            next.push(y.into_iter().map(|v| v.max(0.0)).collect());
        }
        acts = next;
    }

    let root = &acts[0];
    let classes = model.num_classes();
    (0..classes)
        .map(|k| {
            let mut acc = model.fc_bias()[k];
            for (c, &a) in root.iter().enumerate() {
                acc += model.fc_weight()[[k, c]] * a;
            }
            acc
        })
        .collect()
}

/// Mean softmax cross-entropy over a batch, train mode.
pub fn batch_loss(model: &ModelParams<f64>, plans: &[&NetworkPlan], labels: &[usize]) -> f64 {
    let (logits, _) = model.batch_forward(plans, Mode::Train, ExecMode::Sequential).unwrap();
    logits
        .iter()
        .zip(labels)
        .map(|(l, &y)| loss_softmax_ce(l, y).unwrap().0)
        .sum::<f64>()
        / labels.len() as f64
}

/// Smallest |pre-ReLU| value anywhere in a train-mode forward; finite
/// differences are only trustworthy when no activation sits within the
/// perturbation's reach of the ReLU kink.
pub fn min_pre_relu_magnitude(
    model: &ModelParams<f64>,
    plans: &[&NetworkPlan],
) -> f64 {
    let (_, tape) = model.batch_forward(plans, Mode::Train, ExecMode::Sequential).unwrap();
    tape.samples
        .iter()
        .flat_map(|s| s.layers.iter())
        .flat_map(|l| l.post_bn.iter())
        .fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

/// Central finite differences against the analytic batch gradient; returns
/// the max relative error per parameter group.
pub fn fd_max_rel_err(
    model: &mut ModelParams<f64>,
    plans: &[&NetworkPlan],
    labels: &[usize],
    h: f64,
) -> Vec<(String, f64)> {
    let (logits, tape) =
        model.batch_forward(plans, Mode::Train, ExecMode::Sequential).unwrap();
    let logit_grads: Vec<Array1<f64>> = logits
        .iter()
        .zip(labels)
        .map(|(l, &y)| loss_softmax_ce(l, y).unwrap().1)
        .collect();
    let mut grads = model.batch_backward(&tape, plans, &logit_grads, ExecMode::Sequential).unwrap();
    grads.scale(1.0 / labels.len() as f64);

    let group_sizes: Vec<(String, usize)> = model
        .param_tensors()
        .into_iter()
        .map(|(name, t)| (name, t.len()))
        .collect();
    let mut result = Vec::with_capacity(group_sizes.len());
    for (g, (name, len)) in group_sizes.iter().enumerate() {
        let mut max_rel: f64 = 0.0;
        for k in 0..*len {
            let original = model.param_tensors()[g].1[k];
            model.param_tensors_mut()[g].1[k] = original + h;
            let up = batch_loss(model, plans, labels);
            model.param_tensors_mut()[g].1[k] = original - h;
            let down = batch_loss(model, plans, labels);
            model.param_tensors_mut()[g].1[k] = original;
            let fd = (up - down) / (2.0 * h);
            let analytic = grads.tensors()[g].1[k];
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6);
            max_rel = max_rel.max(rel);
        }
        result.push((name.clone(), max_rel));
    }
    result
}
