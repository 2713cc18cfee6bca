//! Synthetic labeled shapes for desk-scale experiments: spheres, cubes,
//! cylinders and tori, distinguished by local curvature structure. Each
//! sample gets a random anisotropic squash, a random 3D rotation and Gaussian
//! jitter before normalization, so classes overlap in global extent and must
//! be told apart by geometry.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use crate::data::{DataError, LabeledCloud, LabeledDataset};
use crate::geometry::{normalize_cloud, Point3, PointCloud};
use crate::rng::derive_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthClass {
    Sphere,
    Cube,
    Cylinder,
    Torus,
}

impl SynthClass {
    pub const ALL: [SynthClass; 4] =
        [SynthClass::Sphere, SynthClass::Cube, SynthClass::Cylinder, SynthClass::Torus];

    pub fn name(self) -> &'static str {
        match self {
            SynthClass::Sphere => "sphere",
            SynthClass::Cube => "cube",
            SynthClass::Cylinder => "cylinder",
            SynthClass::Torus => "torus",
        }
    }
}

/// Sample `m` points uniformly on the unit-scale surface of `class`.
pub fn sample_class_surface<R: Rng + ?Sized>(
    class: SynthClass,
    m: usize,
    rng: &mut R,
) -> PointCloud {
    let mut points = Vec::with_capacity(m);
    match class {
        SynthClass::Sphere => {
            for _ in 0..m {
                let d: [f64; 3] = UnitSphere.sample(rng);
                points.push(Point3::new(d[0], d[1], d[2]));
            }
        }
        SynthClass::Cube => {
            // Six unit faces of [−1, 1]³, equal areas.
            for _ in 0..m {
                let axis = rng.gen_range(0..3);
                let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let u = rng.gen_range(-1.0..=1.0);
                let v = rng.gen_range(-1.0..=1.0);
                points.push(match axis {
                    0 => Point3::new(side, u, v),
                    1 => Point3::new(u, side, v),
                    _ => Point3::new(u, v, side),
                });
            }
        }
        SynthClass::Cylinder => {
            // Radius 0.5, height 2, with caps; area-weighted choice.
            let r = 0.5;
            let lateral = TAU * r * 2.0;
            let caps = 2.0 * PI * r * r;
            let p_lateral = lateral / (lateral + caps);
            for _ in 0..m {
                let theta = rng.gen_range(0.0..TAU);
                if rng.gen::<f64>() < p_lateral {
                    let z = rng.gen_range(-1.0..=1.0);
                    points.push(Point3::new(r * theta.cos(), r * theta.sin(), z));
                } else {
                    let z = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    let rr = r * rng.gen::<f64>().sqrt();
                    points.push(Point3::new(rr * theta.cos(), rr * theta.sin(), z));
                }
            }
        }
        SynthClass::Torus => {
            // Ring radius 0.7, tube radius 0.25; the tube angle is sampled by
            // rejection so density stays uniform over the surface.
            let big = 0.7;
            let small = 0.25;
            for _ in 0..m {
                let u = rng.gen_range(0.0..TAU);
                let v = loop {
                    let v = rng.gen_range(0.0..TAU);
                    let accept = (big + small * v.cos()) / (big + small);
                    if rng.gen::<f64>() < accept {
                        break v;
                    }
                };
                let w = big + small * v.cos();
                points.push(Point3::new(w * u.cos(), w * u.sin(), small * v.sin()));
            }
        }
    }
    PointCloud::new(points)
}

fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> [[f64; 3]; 3] {
    // Uniform rotation from a normalized random quaternion.
    let n = Normal::new(0.0, 1.0).unwrap();
    let (mut w, mut x, mut y, mut z): (f64, f64, f64, f64) =
        (n.sample(rng), n.sample(rng), n.sample(rng), n.sample(rng));
    let norm = (w * w + x * x + y * y + z * z).sqrt();
    w /= norm;
    x /= norm;
    y /= norm;
    z /= norm;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn apply_rotation(p: Point3, m: &[[f64; 3]; 3]) -> Point3 {
    Point3::new(
        m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z,
        m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z,
        m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z,
    )
}

/// One raw (pre-normalization) sample: surface points, anisotropic scale in
/// `[0.7, 1.0]` per axis, uniform random rotation, Gaussian jitter.
pub fn make_raw_sample<R: Rng + ?Sized>(
    class: SynthClass,
    m: usize,
    noise: f64,
    rng: &mut R,
) -> PointCloud {
    let mut cloud = sample_class_surface(class, m, rng);
    let sx = rng.gen_range(0.7..=1.0);
    let sy = rng.gen_range(0.7..=1.0);
    let sz = rng.gen_range(0.7..=1.0);
    let rot = random_rotation(rng);
    let jitter = Normal::new(0.0, noise.max(0.0)).unwrap();
    for p in &mut cloud.points {
        let scaled = Point3::new(p.x * sx, p.y * sy, p.z * sz);
        let mut q = apply_rotation(scaled, &rot);
        if noise > 0.0 {
            q = q + Point3::new(jitter.sample(rng), jitter.sample(rng), jitter.sample(rng));
        }
        *p = q;
    }
    cloud
}

/// Deterministic labeled dataset over the four shape classes with an exact
/// 80/20 per-class train/test split.
pub fn synth_dataset(
    per_class: usize,
    m: usize,
    noise: f64,
    seed: u64,
) -> Result<LabeledDataset, DataError> {
    if m < 64 {
        return Err(DataError::TooFewPoints { requested: m, minimum: 64 });
    }
    if per_class == 0 {
        return Err(DataError::EmptyDataset);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    let train_per_class = (per_class * 4).div_ceil(5);
    for (label, class) in SynthClass::ALL.iter().enumerate() {
        for k in 0..per_class {
            let mut rng = derive_rng(seed, &[0x53, label as u64, k as u64]);
            let raw = make_raw_sample(*class, m, noise, &mut rng);
            let cloud = normalize_cloud(&raw).expect("surface samples have extent");
            let item = LabeledCloud {
                cloud,
                label,
                source_id: format!("synth/{}/{k}", class.name()),
            };
            if k < train_per_class {
                train.push(item);
            } else {
                test.push(item);
            }
        }
    }
    Ok(LabeledDataset {
        train,
        test,
        class_names: SynthClass::ALL.iter().map(|c| c.name().to_string()).collect(),
    })
}
