//! Training-loop behavior: schedule, determinism, optimization sanity,
//! augmentation contracts, and evaluation definitions.

mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{plan_for, random_cloud, random_model};
use sphconv::data::LabeledCloud;
use sphconv::geometry::{Point3, PointCloud};
use sphconv::network::{loss_softmax_ce, Mode};
use sphconv::training::{
    augment, evaluate, lr_at_epoch, sgd_step, train, AugmentConfig, Evaluation, TrainConfig,
};
use sphconv::ExecMode;

fn tiny_dataset(samples_per_class: usize, points: usize, seed: u64) -> Vec<LabeledCloud> {
    // Two trivially separable classes: clusters near opposite corners,
    // normalized per cloud.
    let mut out = Vec::new();
    for label in 0..2 {
        for k in 0..samples_per_class {
            let base = random_cloud(points, seed ^ (label as u64) << 13 ^ k as u64);
            let shift = if label == 0 { -0.6 } else { 0.6 };
            let cloud: PointCloud = base
                .points
                .iter()
                .map(|p| Point3::new(p.x * 0.3 + shift, p.y * 0.3 + shift, p.z * 0.3))
                .collect();
            let cloud = sphconv::geometry::normalize_cloud(&cloud).unwrap();
            out.push(LabeledCloud { cloud, label, source_id: format!("tiny/{label}/{k}") });
        }
    }
    out
}

fn quick_config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        seed,
        eval_every: 0,
        exec: ExecMode::Sequential,
        ..TrainConfig::default()
    }
}

#[test]
fn one_sample_overfits_within_200_steps() {
    // A single training example must be drivable to near-zero loss.
    let cloud = random_cloud(64, 42);
    let plan = plan_for(&cloud, 3);
    let mut model = random_model(3, &[4, 4, 8], 3, 4242);
    let mut velocity = sphconv::network::ParamGrads::zeros_like(&model);
    let label = 1;
    let mut final_loss = f64::INFINITY;
    for _ in 0..200 {
        let (logits, tape) = model.batch_forward(&[&plan], Mode::Train, ExecMode::Sequential).unwrap();
        let (loss, grad) = loss_softmax_ce(&logits[0], label).unwrap();
        final_loss = loss;
        if loss < 1e-3 {
            break;
        }
        let grads = model
            .batch_backward(&tape, &[&plan], &[grad], ExecMode::Sequential)
            .unwrap();
        model.absorb_bn_stats(&tape);
        sgd_step(&mut model, &grads, &mut velocity, 0.05, 0.9, 0.0);
    }
    assert!(final_loss < 1e-3, "loss stalled at {final_loss}");
}

#[test]
fn identical_seeds_reproduce_epoch_losses() {
    let data = tiny_dataset(6, 48, 7);
    let model_a = random_model(3, &[4, 4, 8], 2, 1);
    let model_b = model_a.clone();
    let cfg = quick_config(2, 33);
    let (_, hist_a) = train(model_a, &data, None, &cfg, None).unwrap();
    let (_, hist_b) = train(model_b, &data, None, &cfg, None).unwrap();
    assert_eq!(hist_a, hist_b);
}

#[test]
fn parallel_and_sequential_training_agree() {
    let data = tiny_dataset(6, 48, 3);
    let model = random_model(3, &[4, 4, 8], 2, 2);
    let seq_cfg = quick_config(2, 5);
    let par_cfg = TrainConfig { exec: ExecMode::Parallel, ..seq_cfg.clone() };
    let (_, hist_seq) = train(model.clone(), &data, None, &seq_cfg, None).unwrap();
    let (_, hist_par) = train(model, &data, None, &par_cfg, None).unwrap();
    assert_eq!(hist_seq, hist_par, "gradient reduction must be order-stable");
}

#[test]
fn zero_learning_rate_freezes_parameters_bitwise() {
    let data = tiny_dataset(4, 48, 9);
    let model = random_model(3, &[4, 4, 8], 2, 11);
    let before: Vec<Vec<f64>> =
        model.param_tensors().into_iter().map(|(_, t)| t.to_vec()).collect();
    let cfg = TrainConfig { lr0: 0.0, ..quick_config(3, 1) };
    let (model, _) = train(model, &data, None, &cfg, None).unwrap();
    let after: Vec<Vec<f64>> =
        model.param_tensors().into_iter().map(|(_, t)| t.to_vec()).collect();
    assert_eq!(before, after);
}

#[test]
fn loss_decreases_on_fixed_batch_for_most_seeds() {
    // Full-batch steps on a fresh model: final loss below the initial loss
    // for at least 4 of 5 seeds.
    let mut wins = 0;
    for seed in 0..5u64 {
        let data = tiny_dataset(4, 48, seed);
        let model = random_model(3, &[4, 4, 8], 2, seed * 31 + 7);
        let cfg = TrainConfig {
            batch_size: data.len(),
            ..quick_config(10, seed)
        };
        let (_, hist) = train(model, &data, None, &cfg, None).unwrap();
        if hist.last().unwrap().train_loss < hist[0].train_loss {
            wins += 1;
        }
    }
    assert!(wins >= 4, "loss decreased for only {wins}/5 seeds");
}

#[test]
fn lr_schedule_spans_decades() {
    for (epoch, expect) in [(50, 0.1), (51, 0.01), (71, 0.001), (91, 0.0001)] {
        assert_eq!(lr_at_epoch(epoch, 0.1), expect);
    }
}

#[test]
fn augmentation_preserves_label_count_and_centroid() {
    let cfg = AugmentConfig { subsample: false, ..AugmentConfig::default() };
    let cloud = random_cloud(4000, 12);
    let centroid = cloud.centroid().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let out = augment(&cloud, &cfg, &mut rng).unwrap();
    assert_eq!(out.len(), cloud.len());
    // Rotation about z preserves the centroid's norm in xy and exactly keeps
    // z; noise shifts the centroid by O(σ/√m).
    let shifted = out.centroid().unwrap();
    let expect = 3.0 * cfg.translation_sigma / (cloud.len() as f64).sqrt();
    assert!((shifted.norm() - centroid.norm()).abs() < 10.0 * expect + 1e-9);
}

#[test]
fn augmented_replicas_produce_distinct_plans() {
    let cloud = sphconv::geometry::normalize_cloud(&random_cloud(500, 77)).unwrap();
    let cfg = AugmentConfig::default();
    let mut rng_a = ChaCha8Rng::seed_from_u64(1);
    let mut rng_b = ChaCha8Rng::seed_from_u64(2);
    let a = augment(&cloud, &cfg, &mut rng_a).unwrap();
    let b = augment(&cloud, &cfg, &mut rng_b).unwrap();
    let plan_orig = plan_for(&cloud, 4);
    let plan_a = plan_for(&a, 4);
    let plan_b = plan_for(&b, 4);
    assert_ne!(plan_orig.structural_hash(), plan_a.structural_hash());
    assert_ne!(plan_a.structural_hash(), plan_b.structural_hash());
}

#[test]
fn augmentation_expands_epoch_sample_count_five_times() {
    let data = tiny_dataset(3, 48, 21);
    let model = random_model(3, &[4, 4, 8], 2, 3);
    let cfg = TrainConfig { batch_size: 64, ..quick_config(1, 2) };
    let aug = AugmentConfig::default();
    let (_, hist) = train(model, &data, None, &cfg, Some(&aug)).unwrap();
    // 6 samples × replication 5 = 30 instances; loss is averaged over them,
    // which only makes sense if the count matched. Assert via accuracy
    // granularity: train_acc must be a multiple of 1/30.
    let acc = hist[0].train_acc;
    let scaled = acc * 30.0;
    assert!((scaled - scaled.round()).abs() < 1e-9, "acc {acc} not on a 1/30 grid");
}

#[test]
fn evaluation_definitions_from_confusion() {
    // 2 classes with 90/10 samples, everything predicted as class 0.
    let eval = Evaluation::from_confusion(vec![vec![90, 0], vec![10, 0]]);
    assert_eq!(eval.instance_acc, 0.9);
    assert_eq!(eval.class_acc, 0.5);
    assert!(eval.missing_classes.is_empty());

    // Perfect predictions.
    let eval = Evaluation::from_confusion(vec![vec![5, 0], vec![0, 5]]);
    assert_eq!(eval.instance_acc, 1.0);
    assert_eq!(eval.class_acc, 1.0);

    // Absent class is excluded and reported.
    let eval = Evaluation::from_confusion(vec![vec![4, 0, 0], vec![0, 0, 0], vec![0, 0, 2]]);
    assert_eq!(eval.missing_classes, vec![1]);
    assert_eq!(eval.class_acc, 1.0);
}

#[test]
fn evaluate_confusion_rows_sum_to_class_counts() {
    let data = tiny_dataset(5, 48, 50);
    let model = random_model(3, &[4, 4, 8], 2, 8);
    let eval = evaluate(&data, &model, ExecMode::Sequential).unwrap();
    for row in &eval.confusion {
        assert_eq!(row.iter().sum::<usize>(), 5);
    }
    assert_eq!(eval.total, 10);
}
