//! Subcommand implementations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use sphconv::bench::{
    bench_neighbors_streaming, time_inference, write_gnuplot_dat, write_report_csv, BenchOptions,
    BenchReport, Strategy,
};
use sphconv::checkpoint::{load_checkpoint, save_checkpoint};
use sphconv::data::{
    ingest_dataset, load_ingested, make_raw_sample, parse_off, sample_surface, synth_dataset,
    LabeledDataset, SynthClass,
};
use sphconv::geometry::{normalize_cloud, PointCloud};
use sphconv::network::{KernelShape, Mode, ModelParams, Tape};
use sphconv::octree::build_octree;
use sphconv::training::{evaluate, train, AugmentConfig, TrainConfig};
use sphconv::{ExecMode, Real};

use crate::args::{BenchArgs, EvalArgs, ExportArgs, IngestArgs, PrecisionArg, TrainArgs};
use crate::CliError;

/// Resolved run description written before any work starts so a run can be
/// reproduced from its manifest.
#[derive(Serialize)]
struct RunManifest<'a, T: Serialize> {
    subcommand: &'a str,
    version: &'a str,
    seed: u64,
    started_at_unix: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    finished_at_unix: Option<u64>,
    config: &'a T,
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_manifest<T: Serialize>(
    path: &Path,
    subcommand: &str,
    seed: u64,
    started: u64,
    finished: Option<u64>,
    config: &T,
) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let manifest = RunManifest {
        subcommand,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        started_at_unix: started,
        finished_at_unix: finished,
        config,
    };
    fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn exec_mode(sequential: bool) -> ExecMode {
    if sequential {
        ExecMode::Sequential
    } else {
        ExecMode::Parallel
    }
}

pub fn cmd_ingest(args: &IngestArgs) -> Result<(), CliError> {
    let started = now_unix();
    let manifest_path = args.out.join("manifest.json");
    write_manifest(&manifest_path, "ingest", args.seed, started, None, args)?;
    let report = ingest_dataset(&args.data, &args.out, args.points, args.seed)?;
    for class in &report.skipped_classes {
        eprintln!("warning: class {class:?} has no readable meshes, skipped");
    }
    for (path, err) in &report.failures {
        eprintln!("error: {}: {err}", path.display());
    }
    println!("ingested {} clouds into {}", report.written, args.out.display());
    write_manifest(&manifest_path, "ingest", args.seed, started, Some(now_unix()), args)?;
    if report.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{} files failed to ingest", report.failures.len())))
    }
}

fn load_train_dataset(
    data: &Option<PathBuf>,
    synthetic: bool,
    points: usize,
    per_class: usize,
    noise: f64,
    seed: u64,
) -> Result<LabeledDataset, CliError> {
    if synthetic {
        Ok(synth_dataset(per_class, points, noise, seed)?)
    } else {
        let dir = data
            .as_ref()
            .ok_or_else(|| CliError::Usage("pass --data <dir> or --synthetic".into()))?;
        Ok(load_ingested(dir)?)
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    match args.precision {
        PrecisionArg::F64 => run_train::<f64>(args),
        PrecisionArg::F32 => run_train::<f32>(args),
    }
}

fn run_train<F: Real>(args: &TrainArgs) -> Result<(), CliError> {
    if args.channels.len() != args.depth {
        return Err(CliError::Usage(format!(
            "--channels lists {} widths but --depth is {}",
            args.channels.len(),
            args.depth
        )));
    }
    let started = now_unix();
    let manifest_path = args.out.join("manifest.json");
    write_manifest(&manifest_path, "train", args.seed, started, None, args)?;

    let dataset = load_train_dataset(
        &args.data,
        args.synthetic,
        args.points,
        args.per_class,
        args.synthetic_noise,
        args.seed,
    )?;
    let num_classes = dataset.num_classes();
    let (n, p, q) = args.kernel;
    let shape = KernelShape { n, p, q };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let model: ModelParams<F> =
        ModelParams::init(args.depth, &args.channels, shape, num_classes, &mut rng)
            .map_err(|e| CliError::Usage(e.to_string()))?;

    let cfg = TrainConfig {
        lr0: args.lr,
        momentum: args.momentum,
        weight_decay: args.weight_decay,
        strict_paper: args.strict_paper,
        batch_size: args.batch,
        epochs: args.epochs,
        seed: args.seed,
        exec: exec_mode(args.sequential),
        out_dir: Some(args.out.clone()),
        checkpoint_every: args.checkpoint_every,
        eval_every: args.eval_every,
    };
    let aug = args.augment.then(AugmentConfig::default);
    println!(
        "training: {} classes, {} train / {} test samples, depth {}, kernel {}x{}x{}+1, {} params",
        num_classes,
        dataset.train.len(),
        dataset.test.len(),
        args.depth,
        n,
        p,
        q,
        model.num_params(),
    );
    let (model, history) = train(model, &dataset.train, Some(&dataset.test), &cfg, aug.as_ref())?;
    if let Some(last) = history.last() {
        println!(
            "epoch {}: lr {} train_loss {:.4} train_acc {:.4} val_acc {}",
            last.epoch,
            last.lr,
            last.train_loss,
            last.train_acc,
            last.val_acc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
        );
    }
    save_checkpoint(args.out.join("model.bin"), &model)?;
    println!("checkpoint: {}", args.out.join("model.bin").display());
    write_manifest(&manifest_path, "train", args.seed, started, Some(now_unix()), args)?;
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    match args.precision {
        PrecisionArg::F64 => run_eval::<f64>(args),
        PrecisionArg::F32 => run_eval::<f32>(args),
    }
}

fn run_eval<F: Real>(args: &EvalArgs) -> Result<(), CliError> {
    let (model, _) = load_checkpoint::<F, _>(&args.checkpoint)?;
    let dataset = load_train_dataset(
        &args.data,
        args.synthetic,
        args.points,
        args.per_class,
        args.synthetic_noise,
        args.seed,
    )?;
    if dataset.num_classes() != model.num_classes() {
        return Err(CliError::Data(format!(
            "checkpoint has {} classes, dataset has {}",
            model.num_classes(),
            dataset.num_classes()
        )));
    }
    let split = dataset.split(&args.split);
    let eval = evaluate(split, &model, exec_mode(args.sequential))?;
    println!("split: {} ({} samples)", args.split, eval.total);
    println!("instance accuracy: {:.4}", eval.instance_acc);
    println!("class accuracy:    {:.4}", eval.class_acc);
    for c in &eval.missing_classes {
        eprintln!(
            "warning: class {} ({}) absent from split, excluded from class accuracy",
            c, dataset.class_names[*c]
        );
    }
    println!("confusion (rows = true class):");
    for (c, row) in eval.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:5}")).collect();
        println!("  {:<10} {}", dataset.class_names[c], cells.join(" "));
    }
    Ok(())
}

pub fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let started = now_unix();
    let manifest_path = args.out.with_extension("manifest.json");
    write_manifest(&manifest_path, "bench", args.seed, started, None, args)?;

    if args.inference {
        if args.channels.len() != args.depth {
            return Err(CliError::Usage(format!(
                "--channels lists {} widths but --depth is {}",
                args.channels.len(),
                args.depth
            )));
        }
        let (n, p, q) = args.kernel;
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let model: ModelParams<f64> =
            ModelParams::init(args.depth, &args.channels, KernelShape { n, p, q }, 4, &mut rng)
                .map_err(|e| CliError::Usage(e.to_string()))?;
        let timings = time_inference(&model, &args.sizes, args.repeats, args.seed)?;
        let mut out = fs::File::create(&args.out)?;
        writeln!(out, "size,octree_ms,forward_ms,total_ms")?;
        for t in &timings {
            writeln!(out, "{},{},{},{}", t.size, t.octree_ms, t.forward_ms, t.total_ms)?;
            println!(
                "{:>8} points: octree {:8.2} ms  forward {:8.2} ms  total {:8.2} ms",
                t.size, t.octree_ms, t.forward_ms, t.total_ms
            );
        }
        write_manifest(&manifest_path, "bench", args.seed, started, Some(now_unix()), args)?;
        return Ok(());
    }

    let strategies: Vec<Strategy> = args
        .strategies
        .iter()
        .map(|s| s.parse::<Strategy>().map_err(CliError::Usage))
        .collect::<Result<_, _>>()?;
    let opts = BenchOptions {
        k: args.k,
        depth: args.depth,
        repeats: args.repeats,
        exec: exec_mode(!args.parallel),
        seed: args.seed,
        ..BenchOptions::default()
    };
    // Stream rows to the CSV so partial results survive interruption.
    let mut file = fs::File::create(&args.out)?;
    writeln!(file, "strategy,size,median_ms,repeats")?;
    let report: BenchReport =
        bench_neighbors_streaming(&args.sizes, &strategies, &opts, |row| {
            let _ = writeln!(
                file,
                "{},{},{},{}",
                row.strategy, row.point_count, row.median_ms, row.repeats
            );
            let _ = file.flush();
            println!(
                "{:>16} {:>8} points: {:10.3} ms (median of {})",
                row.strategy.name(),
                row.point_count,
                row.median_ms,
                row.repeats
            );
        })?;
    for note in &report.notes {
        eprintln!("note: {note}");
        writeln!(file, "# {note}")?;
    }
    drop(file);
    // Rewrite in canonical form (identical rows) once complete.
    let mut file = fs::File::create(&args.out)?;
    write_report_csv(&mut file, &report)?;
    if let Some(gnuplot) = &args.gnuplot {
        let mut f = fs::File::create(gnuplot)?;
        write_gnuplot_dat(&mut f, &report)?;
    }
    write_manifest(&manifest_path, "bench", args.seed, started, Some(now_unix()), args)?;
    Ok(())
}

pub fn cmd_export(args: &ExportArgs) -> Result<(), CliError> {
    match args.precision {
        PrecisionArg::F64 => run_export::<f64>(args),
        PrecisionArg::F32 => run_export::<f32>(args),
    }
}

fn run_export<F: Real>(args: &ExportArgs) -> Result<(), CliError> {
    let (model, _) = load_checkpoint::<F, _>(&args.checkpoint)?;

    if let Some(path) = &args.kernel_weights {
        export_kernel_weights(path, &model)?;
        println!("kernel weights: {}", path.display());
    }

    let cloud = load_sample_cloud(args)?;
    let tree = build_octree(&cloud, model.depth()).map_err(|e| CliError::Data(e.to_string()))?;
    let plan = tree.to_network_plan(&cloud).map_err(|e| CliError::Data(e.to_string()))?;
    let (_, tape) = model.forward(&plan, Mode::Eval).map_err(|e| CliError::Data(e.to_string()))?;

    if let Some(layer) = args.layer {
        if layer > plan.depth() {
            return Err(CliError::Usage(format!(
                "--layer {layer} out of range, plan has layers 0..={}",
                plan.depth()
            )));
        }
    }
    let layers: Vec<usize> = match args.layer {
        Some(l) => vec![l],
        None => (0..=plan.depth()).collect(),
    };

    let ply = args.out.extension().map(|e| e == "ply").unwrap_or(false);
    let mut out = fs::File::create(&args.out)?;
    if ply {
        write_ply(&mut out, &plan, &tape, &layers)?;
    } else {
        write_activation_csv(&mut out, &plan, &tape, &layers)?;
    }
    println!("export: {}", args.out.display());
    Ok(())
}

fn load_sample_cloud(args: &ExportArgs) -> Result<PointCloud, CliError> {
    if let Some(input) = &args.input {
        let bytes = fs::read(input)?;
        let mesh = parse_off(&bytes).map_err(|e| CliError::Data(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let cloud =
            sample_surface(&mesh, args.points, &mut rng).map_err(|e| CliError::Data(e.to_string()))?;
        Ok(normalize_cloud(&cloud).map_err(|e| CliError::Data(e.to_string()))?)
    } else if let Some(class) = &args.synthetic_sample {
        let class = SynthClass::ALL
            .into_iter()
            .find(|c| c.name() == class)
            .ok_or_else(|| CliError::Usage(format!("unknown class {class:?}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let raw = make_raw_sample(class, args.points, 0.01, &mut rng);
        Ok(normalize_cloud(&raw).map_err(|e| CliError::Data(e.to_string()))?)
    } else {
        Err(CliError::Usage("pass --input <mesh.off> or --synthetic-sample <class>".into()))
    }
}

fn write_activation_csv<F: Real>(
    w: &mut impl Write,
    plan: &sphconv::octree::NetworkPlan,
    tape: &Tape<F>,
    layers: &[usize],
) -> Result<(), CliError> {
    writeln!(w, "layer,index,x,y,z,features...")?;
    let sample = &tape.samples[0];
    for &l in layers {
        let locations = &plan.layer(l).locations;
        for (i, p) in locations.iter().enumerate() {
            write!(w, "{l},{i},{},{},{}", p.x, p.y, p.z)?;
            if l > 0 {
                for v in sample.layers[l - 1].a.row(i).iter() {
                    write!(w, ",{}", v.to_f64_lossy())?;
                }
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

fn write_ply<F: Real>(
    w: &mut impl Write,
    plan: &sphconv::octree::NetworkPlan,
    tape: &Tape<F>,
    layers: &[usize],
) -> Result<(), CliError> {
    let total: usize = layers.iter().map(|&l| plan.layer(l).num_neurons()).sum();
    writeln!(w, "ply\nformat ascii 1.0")?;
    writeln!(w, "element vertex {total}")?;
    writeln!(w, "property float x\nproperty float y\nproperty float z")?;
    writeln!(w, "property uchar layer\nproperty float feature_norm")?;
    writeln!(w, "end_header")?;
    let sample = &tape.samples[0];
    for &l in layers {
        for (i, p) in plan.layer(l).locations.iter().enumerate() {
            let norm = if l > 0 {
                sample.layers[l - 1]
                    .a
                    .row(i)
                    .iter()
                    .map(|v| v.to_f64_lossy().powi(2))
                    .sum::<f64>()
                    .sqrt()
            } else {
                0.0
            };
            writeln!(w, "{} {} {} {} {}", p.x, p.y, p.z, l, norm)?;
        }
    }
    Ok(())
}

fn export_kernel_weights<F: Real>(path: &Path, model: &ModelParams<F>) -> Result<(), CliError> {
    let mut w = fs::File::create(path)?;
    writeln!(w, "layer,kappa,k_theta,k_phi,k_r,frobenius,mean")?;
    for (l, kernel) in model.kernels().iter().enumerate() {
        let cfg = kernel.config();
        for (kappa, m) in kernel.weights().iter().enumerate() {
            // Self-convolution (κ = 0) reports 0,0,0 for the bin coordinates.
            let (kt, kp, kr) = cfg.unpack_kappa(kappa).unwrap_or((0, 0, 0));
            let fro = m.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
            let mean = m.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / m.len() as f64;
            writeln!(w, "{},{kappa},{kt},{kp},{kr},{fro},{mean}", l + 1)?;
        }
    }
    Ok(())
}
