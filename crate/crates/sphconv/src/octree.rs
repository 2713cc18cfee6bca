//! Octree construction over a normalized point cloud and its flattening into
//! a per-layer network plan.
//!
//! The root cube is `[−1, 1]³`. Every node at depth `d < L` splits into its
//! non-empty octants, so a node holding a single point continues as a chain
//! of single-child copies down to depth `L` and empty octants never
//! materialize. Only maximum-depth nodes hold point indices. Node locations
//! are the arithmetic means of their children (for the deepest nodes, of
//! their contained points).
//!
//! Layer `l` of the flattened plan corresponds to tree depth `L − l + 1`:
//! layer 1 is the deepest node level, layer `L` is the root, and layer 0 is
//! the raw points.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::{self, Write};

use thiserror::Error;

use crate::geometry::{BoundingCube, Point3, PointCloud};

#[derive(Debug, Error, PartialEq)]
pub enum OctreeError {
    #[error("cannot build an octree over an empty cloud")]
    EmptyCloud,
    #[error("octree depth must be at least 1, got {0}")]
    InvalidDepth(usize),
    #[error("plan layer {layer}: child index {child} out of range for layer {layer_below} ({len} neurons)")]
    ChildOutOfRange { layer: usize, child: usize, layer_below: usize, len: usize },
    #[error("plan layer {layer}: offsets malformed")]
    MalformedOffsets { layer: usize },
    #[error("cloud has {got} points but the tree was built over {expected}")]
    CloudMismatch { expected: usize, got: usize },
}

/// Nodes of one tree level in flat arrays. `children` of level `d` index the
/// nodes of level `d + 1`; at the deepest level they index raw points.
#[derive(Clone, Debug)]
pub struct OctreeLevel {
    cubes: Vec<BoundingCube>,
    locations: Vec<Point3>,
    child_offsets: Vec<u32>,
    children: Vec<u32>,
}

impl OctreeLevel {
    fn new() -> Self {
        OctreeLevel {
            cubes: Vec::new(),
            locations: Vec::new(),
            child_offsets: vec![0],
            children: Vec::new(),
        }
    }

    fn push_node(&mut self, cube: BoundingCube, location: Point3, children: &[u32]) -> u32 {
        let id = self.locations.len() as u32;
        self.cubes.push(cube);
        self.locations.push(location);
        self.children.extend_from_slice(children);
        self.child_offsets.push(self.children.len() as u32);
        id
    }

    pub fn node_count(&self) -> usize {
        self.locations.len()
    }

    pub fn location(&self, node: usize) -> Point3 {
        self.locations[node]
    }

    pub fn locations(&self) -> &[Point3] {
        &self.locations
    }

    pub fn cube(&self, node: usize) -> BoundingCube {
        self.cubes[node]
    }

    pub fn children_of(&self, node: usize) -> &[u32] {
        let lo = self.child_offsets[node] as usize;
        let hi = self.child_offsets[node + 1] as usize;
        &self.children[lo..hi]
    }
}

/// Octree over a point cloud, stored as per-level flat arrays with
/// index-based child references.
#[derive(Clone, Debug)]
pub struct Octree {
    root_cube: BoundingCube,
    levels: Vec<OctreeLevel>,
    num_points: usize,
}

/// Build an octree of depth `depth` (levels 1..=depth, level 1 = root) over
/// the cloud, splitting every node until the maximum depth and materializing
/// only non-empty octants. Points exactly on a splitting plane go to the
/// higher-coordinate octant.
pub fn build_octree(cloud: &PointCloud, depth: usize) -> Result<Octree, OctreeError> {
    if cloud.is_empty() {
        return Err(OctreeError::EmptyCloud);
    }
    if depth == 0 {
        return Err(OctreeError::InvalidDepth(depth));
    }
    let root_cube = BoundingCube::unit();
    let mut levels: Vec<OctreeLevel> = (0..depth).map(|_| OctreeLevel::new()).collect();
    let mut idx: Vec<u32> = (0..cloud.len() as u32).collect();
    let mut scratch = vec![0u32; cloud.len()];
    build_rec(&cloud.points, &mut idx, &mut scratch, root_cube, 0, &mut levels);
    Ok(Octree { root_cube, levels, num_points: cloud.len() })
}

/// Recursively build the subtree for `idx`, appending nodes bottom-up so a
/// parent's child indices are known when it is pushed. Returns the node id
/// within its level.
fn build_rec(
    points: &[Point3],
    idx: &mut [u32],
    scratch: &mut [u32],
    cube: BoundingCube,
    level: usize,
    levels: &mut [OctreeLevel],
) -> u32 {
    debug_assert!(!idx.is_empty());
    if level == levels.len() - 1 {
        let mut sum = Point3::ORIGIN;
        for &i in idx.iter() {
            sum = sum + points[i as usize];
        }
        let loc = sum * (1.0 / idx.len() as f64);
        return levels[level].push_node(cube, loc, idx);
    }

    // Stable 8-way bucket partition via the scratch slice.
    let mut counts = [0usize; 8];
    for &i in idx.iter() {
        counts[cube.octant_of(&points[i as usize])] += 1;
    }
    let mut starts = [0usize; 9];
    for o in 0..8 {
        starts[o + 1] = starts[o] + counts[o];
    }
    let mut cursor = starts;
    for &i in idx.iter() {
        let o = cube.octant_of(&points[i as usize]);
        scratch[cursor[o]] = i;
        cursor[o] += 1;
    }
    idx.copy_from_slice(&scratch[..idx.len()]);

    let mut child_ids = [0u32; 8];
    let mut num_children = 0;
    let mut loc_sum = Point3::ORIGIN;
    for o in 0..8 {
        if counts[o] == 0 {
            continue;
        }
        let (lo, hi) = (starts[o], starts[o + 1]);
        let child = build_rec(
            points,
            &mut idx[lo..hi],
            &mut scratch[lo..hi],
            cube.octant_cube(o),
            level + 1,
            levels,
        );
        child_ids[num_children] = child;
        num_children += 1;
        loc_sum = loc_sum + levels[level + 1].location(child as usize);
    }
    let loc = loc_sum * (1.0 / num_children as f64);
    levels[level].push_node(cube, loc, &child_ids[..num_children])
}

impl Octree {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn root_cube(&self) -> BoundingCube {
        self.root_cube
    }

    /// Level for tree depth `d ∈ 1..=L` (depth 1 = root).
    pub fn level(&self, d: usize) -> &OctreeLevel {
        &self.levels[d - 1]
    }

    /// Per-level node locations, ordered root level first.
    pub fn node_locations(&self) -> Vec<&[Point3]> {
        self.levels.iter().map(|lv| lv.locations()).collect()
    }

    /// Sphere radius for network layer `l ∈ 1..=L`:
    /// `ρ_l = 2^(l−L−1) · d(x_min, x_max)` with `d` the root-cube diagonal.
    pub fn layer_radius(&self, l: usize) -> f64 {
        assert!(l >= 1 && l <= self.depth(), "layer out of range");
        layer_radius_for(self.root_cube, l, self.depth())
    }

    /// Flatten into the per-layer network plan. Layer 0 holds the raw points;
    /// layer `l ∈ 1..=L` holds the nodes of tree depth `L − l + 1` with edges
    /// into layer `l − 1`.
    pub fn to_network_plan(&self, cloud: &PointCloud) -> Result<NetworkPlan, OctreeError> {
        if cloud.len() != self.num_points {
            return Err(OctreeError::CloudMismatch { expected: self.num_points, got: cloud.len() });
        }
        let depth = self.depth();
        let mut layers = Vec::with_capacity(depth + 1);
        layers.push(PlanLayer {
            locations: cloud.points.clone(),
            child_offsets: Vec::new(),
            children: Vec::new(),
            radius: 0.0,
        });
        for l in 1..=depth {
            let lv = self.level(depth - l + 1);
            layers.push(PlanLayer {
                locations: lv.locations.clone(),
                child_offsets: lv.child_offsets.clone(),
                children: lv.children.clone(),
                radius: self.layer_radius(l),
            });
        }
        NetworkPlan::from_layers(layers)
    }
}

pub(crate) fn layer_radius_for(root_cube: BoundingCube, l: usize, depth: usize) -> f64 {
    2.0_f64.powi(l as i32 - depth as i32 - 1) * root_cube.diagonal()
}

/// One layer of the flattened plan.
#[derive(Clone, Debug)]
pub struct PlanLayer {
    pub locations: Vec<Point3>,
    /// CSR offsets into `children`; empty for layer 0.
    pub child_offsets: Vec<u32>,
    /// Indices into the layer below.
    pub children: Vec<u32>,
    /// Convolution sphere radius for this layer; 0 for layer 0.
    pub radius: f64,
}

impl PlanLayer {
    pub fn num_neurons(&self) -> usize {
        self.locations.len()
    }

    pub fn children_of(&self, neuron: usize) -> &[u32] {
        let lo = self.child_offsets[neuron] as usize;
        let hi = self.child_offsets[neuron + 1] as usize;
        &self.children[lo..hi]
    }

    pub fn neighbor_count(&self, neuron: usize) -> usize {
        (self.child_offsets[neuron + 1] - self.child_offsets[neuron]) as usize
    }

    pub fn num_edges(&self) -> usize {
        self.children.len()
    }

    pub fn edge_range(&self, neuron: usize) -> std::ops::Range<usize> {
        self.child_offsets[neuron] as usize..self.child_offsets[neuron + 1] as usize
    }
}

/// Flattened octree: per-layer neuron locations, parent→child edge lists and
/// per-layer sphere radii. Everything the forward/backward passes need.
#[derive(Clone, Debug)]
pub struct NetworkPlan {
    layers: Vec<PlanLayer>,
}

/// Per-layer outlier accounting: children lying outside their parent's
/// sphere of radius `ρ_l`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OutlierStats {
    pub outside: usize,
    pub total: usize,
}

impl OutlierStats {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.outside as f64 / self.total as f64
        }
    }
}

impl NetworkPlan {
    /// Assemble a plan from explicit layers, validating the CSR structure.
    /// Layer 0 must carry no edges; every other layer's edges index the layer
    /// below.
    pub fn from_layers(layers: Vec<PlanLayer>) -> Result<Self, OctreeError> {
        for (l, layer) in layers.iter().enumerate() {
            if l == 0 {
                if !layer.child_offsets.is_empty() || !layer.children.is_empty() {
                    return Err(OctreeError::MalformedOffsets { layer: 0 });
                }
                continue;
            }
            if layer.child_offsets.len() != layer.num_neurons() + 1
                || layer.child_offsets.first() != Some(&0)
                || layer.child_offsets.last() != Some(&(layer.children.len() as u32))
                || layer.child_offsets.windows(2).any(|w| w[0] > w[1])
            {
                return Err(OctreeError::MalformedOffsets { layer: l });
            }
            let below = layers[l - 1].num_neurons();
            if let Some(&bad) = layer.children.iter().find(|&&c| (c as usize) >= below) {
                return Err(OctreeError::ChildOutOfRange {
                    layer: l,
                    child: bad as usize,
                    layer_below: l - 1,
                    len: below,
                });
            }
        }
        Ok(NetworkPlan { layers })
    }

    /// Number of hidden layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layer(&self, l: usize) -> &PlanLayer {
        &self.layers[l]
    }

    pub fn layers(&self) -> &[PlanLayer] {
        &self.layers
    }

    pub fn neuron_counts(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.num_neurons()).collect()
    }

    /// Count children outside their parent's sphere, per layer `1..=L`.
    pub fn outlier_stats(&self) -> Vec<OutlierStats> {
        (1..=self.depth())
            .map(|l| {
                let layer = &self.layers[l];
                let below = &self.layers[l - 1];
                let mut stats = OutlierStats::default();
                for i in 0..layer.num_neurons() {
                    let center = layer.locations[i];
                    for &j in layer.children_of(i) {
                        stats.total += 1;
                        if below.locations[j as usize].dist(&center) > layer.radius {
                            stats.outside += 1;
                        }
                    }
                }
                stats
            })
            .collect()
    }

    /// Text dump, one line per neuron: `layer index x y z : children...`.
    pub fn dump<W: Write>(&self, w: &mut W) -> io::Result<()> {
        for (l, layer) in self.layers.iter().enumerate() {
            for i in 0..layer.num_neurons() {
                let p = layer.locations[i];
                write!(w, "{} {} {} {} {} :", l, i, p.x, p.y, p.z)?;
                if l > 0 {
                    for &c in layer.children_of(i) {
                        write!(w, " {}", c)?;
                    }
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// Structural hash over locations (bit patterns) and edges. Used to
    /// detect that two plans differ, e.g. after augmentation.
    pub fn structural_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for layer in &self.layers {
            layer.num_neurons().hash(&mut h);
            for p in &layer.locations {
                p.x.to_bits().hash(&mut h);
                p.y.to_bits().hash(&mut h);
                p.z.to_bits().hash(&mut h);
            }
            layer.child_offsets.hash(&mut h);
            layer.children.hash(&mut h);
        }
        h.finish()
    }
}
