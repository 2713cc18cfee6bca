//! Neighborhood-structuring scalability benchmark and per-sample inference
//! timing.
//!
//! Four strategies produce point neighborhoods over the same uniform-random
//! clouds: octree construction (neighborhoods fall out of the tree), k-d tree
//! build plus per-point nearest-neighbor retrieval, brute-force K-NN, and
//! fixed-radius range search over a uniform grid (radius picked to average
//! ~K neighbors). Wall times are medians over repeats. Strategies run one at
//! a time; `ExecMode::Sequential` (the default) keeps timings single-threaded
//! and the parallel mode is an explicit opt-in.
//!
//! Absolute milliseconds are machine-specific; the interesting outputs are
//! within-strategy growth ratios and orderings.

use std::fmt;
use std::hint::black_box;
use std::io::{self, Write};
use std::str::FromStr;
use std::time::Instant;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use rand::Rng;
use thiserror::Error;

use crate::exec::{map_indices, ExecMode};
use crate::geometry::{Point3, PointCloud};
use crate::network::{Mode, ModelParams, NetworkError};
use crate::octree::{build_octree, OctreeError};
use crate::real::Real;
use crate::rng::derive_rng;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("sizes must be sorted ascending and non-empty")]
    UnsortedSizes,
    #[error("repeats must be at least 5, got {0}")]
    TooFewRepeats(usize),
    #[error("strategy cross-check failed: {0}")]
    CrossCheck(String),
    #[error(transparent)]
    Octree(#[from] OctreeError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Octree,
    KdTree,
    KnnBruteForce,
    RangeSearch,
}

impl Strategy {
    pub const ALL: [Strategy; 4] =
        [Strategy::Octree, Strategy::KdTree, Strategy::KnnBruteForce, Strategy::RangeSearch];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Octree => "octree",
            Strategy::KdTree => "kdtree",
            Strategy::KnnBruteForce => "knn_bruteforce",
            Strategy::RangeSearch => "range_search",
        }
    }

    /// Rough peak-memory estimate, used against the benchmark's budget.
    fn memory_estimate(self, n: usize) -> u64 {
        let n = n as u64;
        match self {
            Strategy::Octree => 260 * n,
            Strategy::KdTree => 120 * n,
            Strategy::KnnBruteForce => 80 * n,
            Strategy::RangeSearch => 120 * n,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "octree" => Ok(Strategy::Octree),
            "kdtree" => Ok(Strategy::KdTree),
            "knn_bruteforce" | "knn" => Ok(Strategy::KnnBruteForce),
            "range_search" | "range" => Ok(Strategy::RangeSearch),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    /// K for brute-force K-NN; the range-search radius targets the same
    /// average neighbor count.
    pub k: usize,
    /// Octree depth.
    pub depth: usize,
    /// Timing repeats per row (median is reported).
    pub repeats: usize,
    pub exec: ExecMode,
    pub seed: u64,
    /// Rows whose estimated footprint exceeds this are skipped with a note.
    pub mem_budget_bytes: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            k: 32,
            depth: 8,
            repeats: 5,
            exec: ExecMode::Sequential,
            seed: 0,
            mem_budget_bytes: 8 << 30,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BenchRow {
    pub strategy: Strategy,
    pub point_count: usize,
    pub median_ms: f64,
    pub repeats: usize,
}

#[derive(Clone, Debug, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub notes: Vec<String>,
}

impl BenchReport {
    pub fn median_ms(&self, strategy: Strategy, size: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.point_count == size)
            .map(|r| r.median_ms)
    }
}

/// Uniform-random cloud in `[−1, 1]³`.
pub fn uniform_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = derive_rng(seed, &[0xC1, n as u64]);
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

/// Fixed radius that averages about `k` neighbors for `n` uniform points in
/// `[−1, 1]³`: `n · (4/3)πr³ / 8 = k`.
pub fn radius_for_avg_neighbors(k: usize, n: usize) -> f64 {
    (6.0 * k as f64 / (std::f64::consts::PI * n as f64)).cbrt()
}

/// Time each (size, strategy) pair over fresh uniform clouds, reporting the
/// median of `repeats` runs. `on_row` fires as soon as a row is measured so
/// callers can flush partial results.
pub fn bench_neighbors_streaming(
    sizes: &[usize],
    strategies: &[Strategy],
    opts: &BenchOptions,
    mut on_row: impl FnMut(&BenchRow),
) -> Result<BenchReport, BenchError> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(BenchError::UnsortedSizes);
    }
    if opts.repeats < 5 {
        return Err(BenchError::TooFewRepeats(opts.repeats));
    }
    cross_check(opts)?;
    let mut report = BenchReport::default();
    for &n in sizes {
        let cloud = uniform_cloud(n, opts.seed);
        for &strategy in strategies {
            let estimate = strategy.memory_estimate(n);
            if estimate > opts.mem_budget_bytes {
                report.notes.push(format!(
                    "skipped {strategy} at {n} points: estimated {estimate} B over budget"
                ));
                continue;
            }
            let mut times = Vec::with_capacity(opts.repeats);
            for _ in 0..opts.repeats {
                let start = Instant::now();
                run_strategy(strategy, &cloud, opts);
                times.push(start.elapsed().as_secs_f64() * 1e3);
            }
            times.sort_by(f64::total_cmp);
            let row = BenchRow {
                strategy,
                point_count: n,
                median_ms: times[times.len() / 2],
                repeats: opts.repeats,
            };
            on_row(&row);
            report.rows.push(row);
        }
    }
    Ok(report)
}

pub fn bench_neighbors(
    sizes: &[usize],
    strategies: &[Strategy],
    opts: &BenchOptions,
) -> Result<BenchReport, BenchError> {
    bench_neighbors_streaming(sizes, strategies, opts, |_| {})
}

fn run_strategy(strategy: Strategy, cloud: &PointCloud, opts: &BenchOptions) {
    match strategy {
        Strategy::Octree => {
            let tree = build_octree(cloud, opts.depth).expect("non-empty cloud");
            black_box(tree.level(opts.depth).node_count());
        }
        Strategy::KdTree => {
            black_box(kdtree_nn_checksum(cloud, opts.exec));
        }
        Strategy::KnnBruteForce => {
            black_box(knn_bruteforce_checksum(cloud, opts.k, opts.exec));
        }
        Strategy::RangeSearch => {
            let radius = radius_for_avg_neighbors(opts.k, cloud.len());
            black_box(range_search_checksum(cloud, radius, opts.exec));
        }
    }
}

/// Build a k-d tree and retrieve each point's nearest neighbor (excluding
/// itself). Returns a distance checksum so the work cannot be elided.
fn kdtree_nn_checksum(cloud: &PointCloud, exec: ExecMode) -> f64 {
    let entries: Vec<[f64; 3]> = cloud.points.iter().map(|p| [p.x, p.y, p.z]).collect();
    let tree = ImmutableKdTree::new_from_slice(&entries).expect("non-empty");
    let nn = map_indices(exec, entries.len(), |i| {
        let hits = tree
            .query(&entries[i])
            .nearest_n::<SquaredEuclidean<f64>>(std::num::NonZero::new(2).unwrap())
            .execute();
        hits.into_iter().find(|h| h.item != i as u32).map(|h| h.distance).unwrap_or(0.0)
    });
    nn.iter().sum()
}

/// Brute-force K-NN over all points: per query, a bounded max-heap of the k
/// smallest squared distances. Returns the sum of k-th neighbor distances.
///
/// Distances are computed into a stack chunk first (branch-free, so the
/// compiler can vectorize) and only then scanned against the current k-th
/// best; the scan branch is almost never taken once the heap warms up.
fn knn_bruteforce_checksum(cloud: &PointCloud, k: usize, exec: ExecMode) -> f64 {
    const CHUNK: usize = 512;
    let n = cloud.len();
    let k = k.min(n.saturating_sub(1)).max(1);
    let xs: Vec<f64> = cloud.points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = cloud.points.iter().map(|p| p.y).collect();
    let zs: Vec<f64> = cloud.points.iter().map(|p| p.z).collect();
    let kth = map_indices(exec, n, |i| {
        let (qx, qy, qz) = (xs[i], ys[i], zs[i]);
        let mut heap = vec![f64::INFINITY; k];
        let mut worst = f64::INFINITY;
        let mut buf = [0.0_f64; CHUNK];
        let mut base = 0;
        while base < n {
            let end = (base + CHUNK).min(n);
            let len = end - base;
            for (((d, &x), &y), &z) in buf[..len]
                .iter_mut()
                .zip(&xs[base..end])
                .zip(&ys[base..end])
                .zip(&zs[base..end])
            {
                let dx = x - qx;
                let dy = y - qy;
                let dz = z - qz;
                *d = dx * dx + dy * dy + dz * dz;
            }
            if i >= base && i < end {
                buf[i - base] = f64::INFINITY;
            }
            // Lane-split min reduction (vectorizable) filters out chunks that
            // cannot improve the heap, which is nearly all of them once it
            // warms up.
            let chunk_min = {
                let mut lanes = [f64::INFINITY; 8];
                let mut it = buf[..len].chunks_exact(8);
                for c in it.by_ref() {
                    for (lane, &d) in lanes.iter_mut().zip(c) {
                        *lane = lane.min(d);
                    }
                }
                let mut m = it.remainder().iter().fold(f64::INFINITY, |a, &d| a.min(d));
                for lane in lanes {
                    m = m.min(lane);
                }
                m
            };
            if chunk_min < worst {
                for &d in &buf[..len] {
                    if d < worst {
                        heap_replace_max(&mut heap, d);
                        worst = heap[0];
                    }
                }
            }
            base = end;
        }
        heap[0]
    });
    kth.iter().filter(|d| d.is_finite()).sum()
}

/// Replace the max-root of a max-heap with `d` and sift down.
fn heap_replace_max(heap: &mut [f64], d: f64) {
    let k = heap.len();
    heap[0] = d;
    let mut i = 0;
    loop {
        let l = 2 * i + 1;
        let r = 2 * i + 2;
        let mut m = i;
        if l < k && heap[l] > heap[m] {
            m = l;
        }
        if r < k && heap[r] > heap[m] {
            m = r;
        }
        if m == i {
            return;
        }
        heap.swap(i, m);
        i = m;
    }
}

/// Uniform grid with cell edge = query radius; fixed-radius neighborhoods
/// then only need the 3×3×3 cell block around each point.
struct UniformGrid {
    cell: f64,
    mins: [f64; 3],
    dims: [usize; 3],
    offsets: Vec<u32>,
    items: Vec<u32>,
}

impl UniformGrid {
    fn build(points: &[Point3], cell: f64) -> Self {
        let mut mins = [f64::INFINITY; 3];
        let mut maxs = [f64::NEG_INFINITY; 3];
        for p in points {
            for (d, v) in [p.x, p.y, p.z].into_iter().enumerate() {
                mins[d] = mins[d].min(v);
                maxs[d] = maxs[d].max(v);
            }
        }
        let dims = std::array::from_fn(|d| {
            (((maxs[d] - mins[d]) / cell).floor() as usize + 1).max(1)
        });
        let ncells = dims[0] * dims[1] * dims[2];
        let index = |p: &Point3| -> usize {
            let c = [
                (((p.x - mins[0]) / cell) as usize).min(dims[0] - 1),
                (((p.y - mins[1]) / cell) as usize).min(dims[1] - 1),
                (((p.z - mins[2]) / cell) as usize).min(dims[2] - 1),
            ];
            (c[2] * dims[1] + c[1]) * dims[0] + c[0]
        };
        let mut counts = vec![0u32; ncells + 1];
        for p in points {
            counts[index(p) + 1] += 1;
        }
        for i in 0..ncells {
            counts[i + 1] += counts[i];
        }
        let mut items = vec![0u32; points.len()];
        let mut cursor = counts.clone();
        for (i, p) in points.iter().enumerate() {
            let c = index(p);
            items[cursor[c] as usize] = i as u32;
            cursor[c] += 1;
        }
        UniformGrid { cell, mins, dims, offsets: counts, items }
    }

    fn cell_of(&self, p: &Point3) -> [usize; 3] {
        [
            (((p.x - self.mins[0]) / self.cell) as usize).min(self.dims[0] - 1),
            (((p.y - self.mins[1]) / self.cell) as usize).min(self.dims[1] - 1),
            (((p.z - self.mins[2]) / self.cell) as usize).min(self.dims[2] - 1),
        ]
    }

    fn for_each_candidate(&self, p: &Point3, mut f: impl FnMut(u32)) {
        let c = self.cell_of(p);
        for dz in c[2].saturating_sub(1)..=(c[2] + 1).min(self.dims[2] - 1) {
            for dy in c[1].saturating_sub(1)..=(c[1] + 1).min(self.dims[1] - 1) {
                for dx in c[0].saturating_sub(1)..=(c[0] + 1).min(self.dims[0] - 1) {
                    let cell = (dz * self.dims[1] + dy) * self.dims[0] + dx;
                    let lo = self.offsets[cell] as usize;
                    let hi = self.offsets[cell + 1] as usize;
                    for &j in &self.items[lo..hi] {
                        f(j);
                    }
                }
            }
        }
    }
}

/// Grid-backed fixed-radius search for every point; returns the total
/// neighbor count (excluding self-matches).
fn range_search_checksum(cloud: &PointCloud, radius: f64, exec: ExecMode) -> u64 {
    let grid = UniformGrid::build(&cloud.points, radius);
    let r2 = radius * radius;
    let counts = map_indices(exec, cloud.len(), |i| {
        let p = cloud.points[i];
        let mut count = 0u64;
        grid.for_each_candidate(&p, |j| {
            if j as usize != i && cloud.points[j as usize].dist_sq(&p) <= r2 {
                count += 1;
            }
        });
        count
    });
    counts.iter().sum()
}

/// Grid-backed neighbor sets (sorted), for correctness checks at small n.
pub fn range_search_sets(cloud: &PointCloud, radius: f64) -> Vec<Vec<u32>> {
    let grid = UniformGrid::build(&cloud.points, radius);
    let r2 = radius * radius;
    (0..cloud.len())
        .map(|i| {
            let p = cloud.points[i];
            let mut set = Vec::new();
            grid.for_each_candidate(&p, |j| {
                if j as usize != i && cloud.points[j as usize].dist_sq(&p) <= r2 {
                    set.push(j);
                }
            });
            set.sort_unstable();
            set
        })
        .collect()
}

/// Quadratic range scan oracle.
pub fn brute_force_range_sets(cloud: &PointCloud, radius: f64) -> Vec<Vec<u32>> {
    let r2 = radius * radius;
    (0..cloud.len())
        .map(|i| {
            (0..cloud.len())
                .filter(|&j| j != i && cloud.points[j].dist_sq(&cloud.points[i]) <= r2)
                .map(|j| j as u32)
                .collect()
        })
        .collect()
}

/// Pre-timing sanity pass on a small cloud: grid range search must agree with
/// the quadratic scan, and the k-d tree's nearest neighbor with brute force.
fn cross_check(opts: &BenchOptions) -> Result<(), BenchError> {
    let cloud = uniform_cloud(1500, opts.seed ^ 0x5EED);
    let radius = radius_for_avg_neighbors(opts.k, cloud.len());
    let fast = range_search_sets(&cloud, radius);
    let slow = brute_force_range_sets(&cloud, radius);
    if fast != slow {
        return Err(BenchError::CrossCheck("range search sets differ from brute scan".into()));
    }
    let entries: Vec<[f64; 3]> = cloud.points.iter().map(|p| [p.x, p.y, p.z]).collect();
    let tree = ImmutableKdTree::new_from_slice(&entries).expect("non-empty");
    for i in (0..cloud.len()).step_by(97) {
        let kd = tree
            .query(&entries[i])
            .nearest_n::<SquaredEuclidean<f64>>(std::num::NonZero::new(2).unwrap())
            .execute()
            .into_iter()
            .find(|h| h.item != i as u32)
            .map(|h| h.distance)
            .unwrap_or(f64::INFINITY);
        let brute = (0..cloud.len())
            .filter(|&j| j != i)
            .map(|j| cloud.points[j].dist_sq(&cloud.points[i]))
            .fold(f64::INFINITY, f64::min);
        if (kd - brute).abs() > 1e-12 {
            return Err(BenchError::CrossCheck(format!(
                "kd-tree NN distance {kd} vs brute {brute} at point {i}"
            )));
        }
    }
    Ok(())
}

/// Per-sample inference timing: octree construction and forward pass,
/// reported separately with their sum.
#[derive(Clone, Copy, Debug)]
pub struct InferenceTiming {
    pub size: usize,
    pub octree_ms: f64,
    pub forward_ms: f64,
    pub total_ms: f64,
}

pub fn time_inference<F: Real>(
    model: &ModelParams<F>,
    sizes: &[usize],
    repeats: usize,
    seed: u64,
) -> Result<Vec<InferenceTiming>, BenchError> {
    let mut out = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let cloud = uniform_cloud(n, seed);
        let mut octree_times = Vec::with_capacity(repeats);
        let mut forward_times = Vec::with_capacity(repeats);
        for _ in 0..repeats.max(1) {
            let t0 = Instant::now();
            let tree = build_octree(&cloud, model.depth())?;
            let plan = tree.to_network_plan(&cloud)?;
            octree_times.push(t0.elapsed().as_secs_f64() * 1e3);

            let t1 = Instant::now();
            let (logits, _) = model.forward(&plan, Mode::Eval)?;
            forward_times.push(t1.elapsed().as_secs_f64() * 1e3);
            black_box(logits);
        }
        octree_times.sort_by(f64::total_cmp);
        forward_times.sort_by(f64::total_cmp);
        let octree_ms = octree_times[octree_times.len() / 2];
        let forward_ms = forward_times[forward_times.len() / 2];
        out.push(InferenceTiming { size: n, octree_ms, forward_ms, total_ms: octree_ms + forward_ms });
    }
    Ok(out)
}

/// CSV rows: `strategy,size,median_ms,repeats`.
pub fn write_report_csv<W: Write>(w: &mut W, report: &BenchReport) -> io::Result<()> {
    writeln!(w, "strategy,size,median_ms,repeats")?;
    for r in &report.rows {
        writeln!(w, "{},{},{},{}", r.strategy, r.point_count, r.median_ms, r.repeats)?;
    }
    for note in &report.notes {
        writeln!(w, "# {note}")?;
    }
    Ok(())
}

/// Gnuplot-friendly matrix: one row per size, one column per strategy.
pub fn write_gnuplot_dat<W: Write>(w: &mut W, report: &BenchReport) -> io::Result<()> {
    let mut sizes: Vec<usize> = report.rows.iter().map(|r| r.point_count).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let strategies: Vec<Strategy> = Strategy::ALL
        .into_iter()
        .filter(|s| report.rows.iter().any(|r| r.strategy == *s))
        .collect();
    write!(w, "# size")?;
    for s in &strategies {
        write!(w, " {s}")?;
    }
    writeln!(w)?;
    for size in sizes {
        write!(w, "{size}")?;
        for s in &strategies {
            match report.median_ms(*s, size) {
                Some(ms) => write!(w, " {ms}")?,
                None => write!(w, " nan")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}
