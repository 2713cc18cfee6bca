//! SGD training with the step-decay schedule, data augmentation, and
//! evaluation.
//!
//! Augmentation (when enabled) statically expands the training set by the
//! replication factor: replica 0 is the untouched sample, the others apply
//! random subsampling, a random azimuth rotation and per-point Gaussian
//! translation noise. Each augmented instance gets its own octree, rebuilt
//! from its own cloud.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::checkpoint::{save_checkpoint, CheckpointError};
use crate::data::LabeledCloud;
use crate::exec::{map_items, ExecMode};
use crate::geometry::{Point3, PointCloud};
use crate::network::{loss_softmax_ce, Mode, ModelParams, NetworkError, ParamGrads};
use crate::octree::{build_octree, NetworkPlan, OctreeError};
use crate::real::Real;
use crate::rng::derive_rng;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("subsampling would leave {left} points, need at least {minimum}")]
    TooFewPoints { left: usize, minimum: usize },
    #[error("non-finite loss ({loss}) at epoch {epoch}, batch {batch}")]
    NumericFailure { epoch: usize, batch: usize, loss: f64 },
    #[error(transparent)]
    Octree(#[from] OctreeError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// SGD hyperparameters and run controls.
///
/// `momentum`/`weight_decay` default to the conventional 0.9 / 5e-4 reading;
/// `strict_paper` instead uses a literal momentum of 5e-4 with no weight
/// decay for exact reproduction of the published recipe.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub strict_paper: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub exec: ExecMode,
    /// When set, history CSV and periodic checkpoints are written here.
    pub out_dir: Option<PathBuf>,
    /// Checkpoint every N epochs (0 = only the final one).
    pub checkpoint_every: usize,
    /// Evaluate the validation split every N epochs (0 = never).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            strict_paper: false,
            batch_size: 16,
            epochs: 100,
            seed: 0,
            exec: ExecMode::Parallel,
            out_dir: None,
            checkpoint_every: 0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn effective_momentum(&self) -> f64 {
        if self.strict_paper {
            0.0005
        } else {
            self.momentum
        }
    }

    pub fn effective_weight_decay(&self) -> f64 {
        if self.strict_paper {
            0.0
        } else {
            self.weight_decay
        }
    }
}

/// Step-decay schedule (1-based epochs): `lr0` through epoch 50, then one
/// decade down, then another decade every 20 epochs.
pub fn lr_at_epoch(epoch: usize, lr0: f64) -> f64 {
    debug_assert!(epoch >= 1);
    let decades = if epoch <= 50 { 0 } else { 1 + (epoch - 51) / 20 };
    lr0 / 10.0_f64.powi(decades as i32)
}

/// Augmentation parameters: random subsampling, azimuth rotation up to
/// `rotation_max`, per-point translation noise, and the dataset replication
/// factor.
#[derive(Clone, Debug)]
pub struct AugmentConfig {
    pub subsample: bool,
    /// Keep-fraction range for subsampling (inclusive).
    pub keep_fraction: (f64, f64),
    /// Maximum |rotation| about the gravity (z) axis, radians.
    pub rotation_max: f64,
    /// Std. dev. of the i.i.d. per-point translation noise.
    pub translation_sigma: f64,
    /// Total instances per sample, counting the original.
    pub replication: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            subsample: true,
            keep_fraction: (0.8, 1.0),
            rotation_max: std::f64::consts::FRAC_PI_6,
            translation_sigma: 0.02,
            replication: 5,
        }
    }
}

pub fn rotate_z(p: Point3, angle: f64) -> Point3 {
    let (s, c) = angle.sin_cos();
    Point3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z)
}

const MIN_POINTS_AFTER_SUBSAMPLE: usize = 8;

/// Apply subsampling (optional), then rotation by `θ ~ U(−max, max)` about z,
/// then i.i.d. Gaussian translation noise per point. The result is NOT
/// re-normalized: the noise is per-point jitter and rotation preserves the
/// centroid.
pub fn augment<R: Rng + ?Sized>(
    cloud: &PointCloud,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<PointCloud, TrainError> {
    let mut points: Vec<Point3> = if cfg.subsample {
        let frac = rng.gen_range(cfg.keep_fraction.0..=cfg.keep_fraction.1);
        let keep = ((cloud.len() as f64 * frac).round() as usize).min(cloud.len());
        if keep < MIN_POINTS_AFTER_SUBSAMPLE {
            return Err(TrainError::TooFewPoints {
                left: keep,
                minimum: MIN_POINTS_AFTER_SUBSAMPLE,
            });
        }
        let mut chosen = rand::seq::index::sample(rng, cloud.len(), keep).into_vec();
        chosen.sort_unstable();
        chosen.into_iter().map(|i| cloud.points[i]).collect()
    } else {
        cloud.points.clone()
    };

    let angle = if cfg.rotation_max > 0.0 {
        rng.gen_range(-cfg.rotation_max..=cfg.rotation_max)
    } else {
        0.0
    };
    if angle != 0.0 {
        for p in &mut points {
            *p = rotate_z(*p, angle);
        }
    }

    if cfg.translation_sigma > 0.0 {
        let noise = rand_distr::Normal::new(0.0, cfg.translation_sigma).unwrap();
        use rand_distr::Distribution;
        for p in &mut points {
            *p = *p
                + Point3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng));
        }
    }
    Ok(PointCloud::new(points))
}

/// Per-epoch record emitted to the history CSV.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

pub fn write_history_csv<W: Write>(w: &mut W, history: &[EpochStats]) -> io::Result<()> {
    writeln!(w, "epoch,lr,train_loss,train_acc,val_acc")?;
    for h in history {
        match h.val_acc {
            Some(v) => writeln!(w, "{},{},{},{},{}", h.epoch, h.lr, h.train_loss, h.train_acc, v)?,
            None => writeln!(w, "{},{},{},{},", h.epoch, h.lr, h.train_loss, h.train_acc)?,
        }
    }
    Ok(())
}

/// One SGD-with-momentum step: `v ← μ·v − lr·(g + wd·w)`, `w ← w + v`.
pub fn sgd_step<F: Real>(
    model: &mut ModelParams<F>,
    grads: &ParamGrads<F>,
    velocity: &mut ParamGrads<F>,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    let lr = F::from_f64(lr);
    let mu = F::from_f64(momentum);
    let wd = F::from_f64(weight_decay);
    let gs = grads.tensors();
    let mut vs = velocity.tensors_mut();
    for (((_, w), (gn, g)), (vn, v)) in
        model.param_tensors_mut().into_iter().zip(gs.iter()).zip(vs.iter_mut())
    {
        debug_assert_eq!(gn, vn);
        for k in 0..w.len() {
            let grad = g[k] + wd * w[k];
            v[k] = mu * v[k] - lr * grad;
            w[k] += v[k];
        }
    }
}

/// Build the octree-derived plan for one (possibly augmented) instance.
fn prepare_instance(
    cloud: &PointCloud,
    depth: usize,
) -> Result<NetworkPlan, TrainError> {
    let tree = build_octree(cloud, depth)?;
    Ok(tree.to_network_plan(cloud)?)
}

/// Run SGD over the training set.
///
/// Fully reproducible for a fixed seed: epoch shuffles and per-instance
/// augmentations use derived RNG streams, and gradient reduction follows
/// sample order regardless of the execution mode.
pub fn train<F: Real>(
    mut model: ModelParams<F>,
    train_set: &[LabeledCloud],
    val_set: Option<&[LabeledCloud]>,
    cfg: &TrainConfig,
    aug: Option<&AugmentConfig>,
) -> Result<(ModelParams<F>, Vec<EpochStats>), TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let depth = model.depth();
    let replication = aug.map(|a| a.replication.max(1)).unwrap_or(1);
    let instances: Vec<(usize, usize)> = (0..train_set.len())
        .flat_map(|s| (0..replication).map(move |r| (s, r)))
        .collect();

    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir)?;
    }
    let momentum = cfg.effective_momentum();
    let weight_decay = cfg.effective_weight_decay();
    let mut velocity = ParamGrads::zeros_like(&model);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let lr = lr_at_epoch(epoch, cfg.lr0);
        let mut order = instances.clone();
        order.shuffle(&mut derive_rng(cfg.seed, &[0xE0, epoch as u64]));

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch_no, batch) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let prepared: Vec<Result<(NetworkPlan, usize), TrainError>> =
                map_items(cfg.exec, batch, |&(s, replica)| {
                    let sample = &train_set[s];
                    let cloud = if replica == 0 {
                        sample.cloud.clone()
                    } else {
                        let mut rng =
                            derive_rng(cfg.seed, &[0xA6, s as u64, replica as u64]);
                        augment(&sample.cloud, aug.unwrap(), &mut rng)?
                    };
                    Ok((prepare_instance(&cloud, depth)?, sample.label))
                });
            let mut plans = Vec::with_capacity(batch.len());
            let mut labels = Vec::with_capacity(batch.len());
            for item in prepared {
                let (plan, label) = item?;
                plans.push(plan);
                labels.push(label);
            }
            let plan_refs: Vec<&NetworkPlan> = plans.iter().collect();

            let (logits, tape) = model.batch_forward(&plan_refs, Mode::Train, cfg.exec)?;
            let mut logit_grads: Vec<Array1<F>> = Vec::with_capacity(batch.len());
            let mut batch_loss = 0.0;
            for (logit, &label) in logits.iter().zip(&labels) {
                let (loss, grad) = loss_softmax_ce(logit, label)?;
                batch_loss += loss.to_f64_lossy();
                logit_grads.push(grad);
                let pred = argmax(logit);
                if pred == label {
                    correct += 1;
                }
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::NumericFailure {
                    epoch,
                    batch: batch_no,
                    loss: batch_loss,
                });
            }
            loss_sum += batch_loss;

            let mut grads = model.batch_backward(&tape, &plan_refs, &logit_grads, cfg.exec)?;
            grads.scale(F::from_f64(1.0 / batch.len() as f64));
            model.absorb_bn_stats(&tape);
            sgd_step(&mut model, &grads, &mut velocity, lr, momentum, weight_decay);
        }

        let train_loss = loss_sum / order.len() as f64;
        let train_acc = correct as f64 / order.len() as f64;
        let val_acc = match (val_set, cfg.eval_every) {
            (Some(vs), every) if every > 0 && epoch % every == 0 => {
                Some(evaluate(vs, &model, cfg.exec)?.instance_acc)
            }
            _ => None,
        };
        history.push(EpochStats { epoch, lr, train_loss, train_acc, val_acc });

        if let Some(dir) = &cfg.out_dir {
            let mut f = fs::File::create(dir.join("history.csv"))?;
            write_history_csv(&mut f, &history)?;
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                save_checkpoint(dir.join(format!("checkpoint_epoch{epoch:04}.bin")), &model)?;
            }
        }
    }

    if let Some(dir) = &cfg.out_dir {
        save_checkpoint(dir.join("model.bin"), &model)?;
    }
    Ok((model, history))
}

fn argmax<F: Real>(logits: &Array1<F>) -> usize {
    let mut best = 0;
    for k in 1..logits.len() {
        if logits[k] > logits[best] {
            best = k;
        }
    }
    best
}

/// Accuracy summary over a labeled split.
#[derive(Clone, Debug)]
pub struct Evaluation {
    /// Fraction of samples classified correctly.
    pub instance_acc: f64,
    /// Unweighted mean of per-class recalls, over classes present in the
    /// split.
    pub class_acc: f64,
    /// `confusion[true][predicted]`; rows sum to per-class sample counts.
    pub confusion: Vec<Vec<usize>>,
    /// Classes absent from the split (excluded from `class_acc`).
    pub missing_classes: Vec<usize>,
    pub total: usize,
}

impl Evaluation {
    /// Derive the accuracy summary from a confusion matrix
    /// (`confusion[true][predicted]`). Classes with no samples are excluded
    /// from the class accuracy and listed in `missing_classes`.
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Evaluation {
        let classes = confusion.len();
        let total: usize = confusion.iter().map(|row| row.iter().sum::<usize>()).sum();
        let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
        let mut recalls = Vec::new();
        let mut missing = Vec::new();
        for c in 0..classes {
            let row: usize = confusion[c].iter().sum();
            if row == 0 {
                missing.push(c);
            } else {
                recalls.push(confusion[c][c] as f64 / row as f64);
            }
        }
        let class_acc = if recalls.is_empty() {
            0.0
        } else {
            recalls.iter().sum::<f64>() / recalls.len() as f64
        };
        Evaluation {
            instance_acc: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            class_acc,
            confusion,
            missing_classes: missing,
            total,
        }
    }
}

pub fn evaluate<F: Real>(
    split: &[LabeledCloud],
    model: &ModelParams<F>,
    exec: ExecMode,
) -> Result<Evaluation, TrainError> {
    if split.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let classes = model.num_classes();
    let depth = model.depth();
    let preds: Vec<Result<(usize, usize), TrainError>> = map_items(exec, split, |sample| {
        let plan = prepare_instance(&sample.cloud, depth)?;
        let (logits, _) = model.forward(&plan, Mode::Eval)?;
        Ok((sample.label, argmax(&logits)))
    });
    let mut confusion = vec![vec![0usize; classes]; classes];
    for p in preds {
        let (label, pred) = p?;
        confusion[label][pred] += 1;
    }
    Ok(Evaluation::from_confusion(confusion))
}
