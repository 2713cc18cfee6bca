//! Area-weighted surface sampling of triangle meshes.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::data::{DataError, TriangleMesh};
use crate::geometry::{Point3, PointCloud};

fn cross(a: Point3, b: Point3) -> Point3 {
    Point3::new(a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x)
}

pub fn triangle_area(a: Point3, b: Point3, c: Point3) -> f64 {
    0.5 * cross(b - a, c - a).norm()
}

/// Draw `m` points i.i.d. with probability proportional to triangle area,
/// uniformly within each triangle via reflected barycentric coordinates.
/// CAD meshes are triangulated very unevenly, so vertex subsampling would
/// bias the density; area weighting keeps it uniform over the surface.
pub fn sample_surface<R: Rng + ?Sized>(
    mesh: &TriangleMesh,
    m: usize,
    rng: &mut R,
) -> Result<PointCloud, DataError> {
    let areas: Vec<f64> = mesh
        .faces
        .iter()
        .map(|f| {
            triangle_area(
                mesh.vertices[f[0] as usize],
                mesh.vertices[f[1] as usize],
                mesh.vertices[f[2] as usize],
            )
        })
        .collect();
    let total: f64 = areas.iter().sum();
    if !(total > 0.0) {
        return Err(DataError::ZeroSurfaceArea);
    }
    let pick = WeightedIndex::new(&areas).map_err(|_| DataError::ZeroSurfaceArea)?;
    let mut points = Vec::with_capacity(m);
    for _ in 0..m {
        let f = &mesh.faces[pick.sample(rng)];
        let a = mesh.vertices[f[0] as usize];
        let b = mesh.vertices[f[1] as usize];
        let c = mesh.vertices[f[2] as usize];
        let mut u: f64 = rng.gen();
        let mut v: f64 = rng.gen();
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        points.push(a + (b - a) * u + (c - a) * v);
    }
    Ok(PointCloud::new(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tri_mesh() -> TriangleMesh {
        TriangleMesh {
            vertices: vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            faces: vec![[0, 1, 2]],
        }
    }

    #[test]
    fn samples_stay_inside_single_triangle() {
        let mesh = tri_mesh();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cloud = sample_surface(&mesh, 2000, &mut rng).unwrap();
        assert_eq!(cloud.len(), 2000);
        for p in &cloud.points {
            assert!(p.x >= 0.0 && p.y >= 0.0 && p.x + p.y <= 1.0 + 1e-12);
            assert_eq!(p.z, 0.0);
        }
    }

    #[test]
    fn exact_count_requested() {
        let mesh = tri_mesh();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_surface(&mesh, 30_000, &mut rng).unwrap().len(), 30_000);
    }

    #[test]
    fn area_weighting_across_triangles() {
        // Areas 0.5 and 1.5: the larger triangle should get 75% ± 2%.
        let mesh = TriangleMesh {
            vertices: vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(0.0, 0.0, 5.0),
                Point3::new(1.0, 0.0, 5.0),
                Point3::new(0.0, 3.0, 5.0),
            ],
            faces: vec![[0, 1, 2], [3, 4, 5]],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let cloud = sample_surface(&mesh, 100_000, &mut rng).unwrap();
        let in_big = cloud.points.iter().filter(|p| p.z > 1.0).count();
        let frac = in_big as f64 / cloud.len() as f64;
        assert!((frac - 0.75).abs() < 0.02, "fraction {frac}");
    }

    #[test]
    fn zero_area_is_an_error() {
        let mesh = TriangleMesh {
            vertices: vec![Point3::ORIGIN, Point3::ORIGIN, Point3::ORIGIN],
            faces: vec![[0, 1, 2]],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_surface(&mesh, 10, &mut rng),
            Err(DataError::ZeroSurfaceArea)
        ));
    }

    #[test]
    fn deterministic_under_seed() {
        let mesh = tri_mesh();
        let a = sample_surface(&mesh, 64, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_surface(&mesh, 64, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }
}
