//! Core 3D types, Cartesian↔spherical transforms, and cloud normalization.

use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("degenerate point cloud: all points identical, zero spatial extent")]
    ZeroExtent,
}

/// A point (or displacement) in 3D space. Unitless after normalization.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dist(&self, other: &Point3) -> f64 {
        (*self - *other).norm()
    }

    pub fn dist_sq(&self, other: &Point3) -> f64 {
        let d = *self - *other;
        d.x * d.x + d.y * d.y + d.z * d.z
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, rhs: Point3) -> Point3 {
        Point3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, rhs: Point3) -> Point3 {
        Point3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// Spherical coordinates of a displacement: azimuth `theta ∈ [−π, π]`,
/// elevation `phi ∈ [−π/2, π/2]`, radius `r ≥ 0`. The zero displacement maps
/// to `(0, 0, 0)` by convention.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphericalCoord {
    pub theta: f64,
    pub phi: f64,
    pub r: f64,
}

/// Cartesian → spherical. Total on finite input; `delta = 0` returns the
/// all-zero coordinate so self-edges can be keyed on `r == 0`.
pub fn to_spherical(delta: Point3) -> SphericalCoord {
    let r = delta.norm();
    if r == 0.0 {
        return SphericalCoord { theta: 0.0, phi: 0.0, r: 0.0 };
    }
    let theta = delta.y.atan2(delta.x);
    // Clamp guards the asin domain against rounding when |z| ≈ r.
    let phi = (delta.z / r).clamp(-1.0, 1.0).asin();
    SphericalCoord { theta, phi, r }
}

/// Spherical → Cartesian: `δz = r·sin φ`, `δx = r·cos φ·cos θ`, `δy = r·cos φ·sin θ`.
pub fn from_spherical(s: SphericalCoord) -> Point3 {
    let (st, ct) = s.theta.sin_cos();
    let (sp, cp) = s.phi.sin_cos();
    Point3::new(s.r * cp * ct, s.r * cp * st, s.r * sp)
}

/// Axis-aligned cube with equal edge lengths.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingCube {
    pub min_corner: Point3,
    pub max_corner: Point3,
}

impl BoundingCube {
    /// The `[−1, 1]³` cube all normalized clouds live in.
    pub fn unit() -> Self {
        BoundingCube {
            min_corner: Point3::new(-1.0, -1.0, -1.0),
            max_corner: Point3::new(1.0, 1.0, 1.0),
        }
    }

    pub fn center(&self) -> Point3 {
        (self.min_corner + self.max_corner) * 0.5
    }

    pub fn edge(&self) -> f64 {
        self.max_corner.x - self.min_corner.x
    }

    /// ℓ2 length of the main diagonal.
    pub fn diagonal(&self) -> f64 {
        (self.max_corner - self.min_corner).norm()
    }

    /// Closed-boundary containment.
    pub fn contains(&self, p: &Point3) -> bool {
        p.x >= self.min_corner.x
            && p.x <= self.max_corner.x
            && p.y >= self.min_corner.y
            && p.y <= self.max_corner.y
            && p.z >= self.min_corner.z
            && p.z <= self.max_corner.z
    }

    /// Octant of `p` relative to the cube center. Points exactly on a
    /// splitting plane go to the higher-coordinate child.
    pub fn octant_of(&self, p: &Point3) -> usize {
        let c = self.center();
        (usize::from(p.x >= c.x)) | (usize::from(p.y >= c.y) << 1) | (usize::from(p.z >= c.z) << 2)
    }

    /// Sub-cube for octant index `oct ∈ 0..8` (bit 0 = x-high, bit 1 = y-high,
    /// bit 2 = z-high).
    pub fn octant_cube(&self, oct: usize) -> BoundingCube {
        debug_assert!(oct < 8);
        let c = self.center();
        let pick = |bit: bool, lo: f64, mid: f64, hi: f64| if bit { (mid, hi) } else { (lo, mid) };
        let (x0, x1) = pick(oct & 1 != 0, self.min_corner.x, c.x, self.max_corner.x);
        let (y0, y1) = pick(oct & 2 != 0, self.min_corner.y, c.y, self.max_corner.y);
        let (z0, z1) = pick(oct & 4 != 0, self.min_corner.z, c.z, self.max_corner.z);
        BoundingCube {
            min_corner: Point3::new(x0, y0, z0),
            max_corner: Point3::new(x1, y1, z1),
        }
    }
}

/// Ordered set of 3D points.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Point3::ORIGIN, |acc, p| acc + *p);
        Some(sum * (1.0 / self.points.len() as f64))
    }
}

impl FromIterator<Point3> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point3>>(iter: I) -> Self {
        PointCloud::new(iter.into_iter().collect())
    }
}

/// Center the cloud at its centroid and uniformly rescale so it tightly fits
/// `[−1, 1]³` (the largest absolute coordinate after centering becomes 1).
///
/// Aspect ratio is preserved; the operation is idempotent and invariant under
/// translation and positive uniform scaling of the input.
pub fn normalize_cloud(cloud: &PointCloud) -> Result<PointCloud, GeometryError> {
    let centroid = cloud.centroid().ok_or(GeometryError::EmptyCloud)?;
    let mut centered: Vec<Point3> = cloud.points.iter().map(|p| *p - centroid).collect();
    let max_abs = centered
        .iter()
        .map(|p| p.x.abs().max(p.y.abs()).max(p.z.abs()))
        .fold(0.0_f64, f64::max);
    if max_abs == 0.0 {
        return Err(GeometryError::ZeroExtent);
    }
    // Divide rather than multiply by the reciprocal so the extremal
    // coordinate becomes exactly ±1.
    for p in &mut centered {
        *p = Point3::new(p.x / max_abs, p.y / max_abs, p.z / max_abs);
    }
    Ok(PointCloud::new(centered))
}
