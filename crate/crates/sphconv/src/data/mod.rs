//! Dataset ingestion: OFF meshes, surface sampling, cached clouds, and the
//! synthetic shape generator.
//!
//! On-disk layout for mesh datasets is `<root>/<class>/<split>/<name>.off`
//! with splits `train` and `test`. Ingestion samples each mesh to a fixed
//! point count, normalizes, and caches the result as compact xyz binaries
//! next to an `index.csv`.

mod cache;
mod off;
mod sample;
mod synth;

pub use cache::{read_cloud_cache, write_cloud_cache};
pub use off::{parse_off, serialize_off};
pub use sample::{sample_surface, triangle_area};
pub use synth::{make_raw_sample, sample_class_surface, synth_dataset, SynthClass};

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::{normalize_cloud, GeometryError, Point3, PointCloud};
use crate::rng::derive_rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("OFF line {line}: {message}")]
    Off { line: usize, message: String },
    #[error("mesh has zero total surface area")]
    ZeroSurfaceArea,
    #[error("requested {requested} points, need at least {minimum}")]
    TooFewPoints { requested: usize, minimum: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("bad cloud cache: {0}")]
    BadCache(String),
    #[error("bad dataset index: {0}")]
    BadIndex(String),
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
}

/// Triangle mesh; polygon faces are fan-triangulated at parse time.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[u32; 3]>,
}

/// A normalized cloud with its class label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledCloud {
    pub cloud: PointCloud,
    pub label: usize,
    pub source_id: String,
}

/// Train/test splits plus class names, in label order.
#[derive(Clone, Debug, Default)]
pub struct LabeledDataset {
    pub train: Vec<LabeledCloud>,
    pub test: Vec<LabeledCloud>,
    pub class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn split(&self, name: &str) -> &[LabeledCloud] {
        match name {
            "train" => &self.train,
            _ => &self.test,
        }
    }
}

/// Outcome of ingesting a mesh directory; failures keep the run going.
#[derive(Debug, Default)]
pub struct IngestReport {
    pub written: usize,
    pub failures: Vec<(PathBuf, String)>,
    pub skipped_classes: Vec<String>,
}

/// Sample every mesh under `root` to `points_per_sample` normalized points
/// and cache the clouds under `out`, writing `index.csv` incrementally.
/// Deterministic for a fixed seed: the per-file RNG is derived from the
/// file's relative path, not from listing order.
pub fn ingest_dataset(
    root: &Path,
    out: &Path,
    points_per_sample: usize,
    seed: u64,
) -> Result<IngestReport, DataError> {
    let mut report = IngestReport::default();
    let mut classes: Vec<String> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    classes.sort();
    if classes.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    fs::create_dir_all(out)?;
    let mut index = fs::File::create(out.join("index.csv"))?;
    writeln!(index, "label,class,split,path,points")?;
    for (label, class) in classes.iter().enumerate() {
        let mut class_total = 0usize;
        for split in ["train", "test"] {
            let split_dir = root.join(class).join(split);
            if !split_dir.is_dir() {
                continue;
            }
            let mut files: Vec<PathBuf> = fs::read_dir(&split_dir)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().map(|e| e == "off").unwrap_or(false))
                .collect();
            files.sort();
            for file in files {
                let rel = format!(
                    "{class}/{split}/{}",
                    file.file_stem().unwrap_or_default().to_string_lossy()
                );
                match ingest_one(&file, points_per_sample, seed, &rel) {
                    Ok(cloud) => {
                        let out_rel = format!("{rel}.pcd");
                        let out_path = out.join(&out_rel);
                        fs::create_dir_all(out_path.parent().unwrap())?;
                        write_cloud_cache(&out_path, &cloud)?;
                        writeln!(
                            index,
                            "{label},{class},{split},{out_rel},{}",
                            cloud.len()
                        )?;
                        index.flush()?;
                        report.written += 1;
                        class_total += 1;
                    }
                    Err(err) => report.failures.push((file, err.to_string())),
                }
            }
        }
        if class_total == 0 {
            report.skipped_classes.push(class.clone());
        }
    }
    Ok(report)
}

fn ingest_one(
    file: &Path,
    points: usize,
    seed: u64,
    rel: &str,
) -> Result<PointCloud, DataError> {
    let bytes = fs::read(file)?;
    let mesh = parse_off(&bytes)?;
    let mut rng = derive_rng(seed, &[0x0f, crate::rng::stable_hash(rel.as_bytes())]);
    let cloud = sample_surface(&mesh, points, &mut rng)?;
    Ok(normalize_cloud(&cloud)?)
}

/// Load a dataset previously written by [`ingest_dataset`].
pub fn load_ingested(dir: &Path) -> Result<LabeledDataset, DataError> {
    let index = fs::read_to_string(dir.join("index.csv"))?;
    let mut ds = LabeledDataset::default();
    for (lineno, line) in index.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(DataError::BadIndex(format!("line {}: {line:?}", lineno + 1)));
        }
        let label: usize = fields[0]
            .parse()
            .map_err(|_| DataError::BadIndex(format!("line {}: bad label", lineno + 1)))?;
        let class = fields[1];
        let split = fields[2];
        let cloud = read_cloud_cache(dir.join(fields[3]))?;
        while ds.class_names.len() <= label {
            ds.class_names.push(String::new());
        }
        ds.class_names[label] = class.to_string();
        let item = LabeledCloud { cloud, label, source_id: fields[3].to_string() };
        if split == "train" {
            ds.train.push(item);
        } else {
            ds.test.push(item);
        }
    }
    if ds.train.is_empty() && ds.test.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    Ok(ds)
}
