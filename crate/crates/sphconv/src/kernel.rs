//! Spherical convolution kernel: bin-edge configuration, validity checks,
//! point-to-bin assignment, and the learnable weight bank.
//!
//! A kernel covers a sphere of radius ρ split into `n` azimuth × `p`
//! elevation × `q` radial bins, plus bin 0 for self-convolution. Bin edges
//! are explicit arrays so radial splits may be non-uniform.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use ndarray::{Array1, Array2};
use rand::Rng;
use thiserror::Error;

use crate::geometry::{to_spherical, Point3};
use crate::real::Real;

/// Default positive infimum for the radial edge array. Any displacement with
/// `0 < r < ε` still lands in the innermost shell; bin 0 is reserved for
/// exactly coincident points.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// A bin layout that would assign some displacement Δ and its negation −Δ to
/// the same nonzero bin, breaking the asymmetric application of weights.
#[derive(Clone, Debug, Error, PartialEq)]
pub enum AsymmetryViolation {
    #[error("azimuth bin {index} straddles zero: edges ({left}, {right}) have opposite signs")]
    AzimuthStraddlesZero { index: usize, left: f64, right: f64 },
    #[error("elevation bin {index} straddles zero: edges ({left}, {right}) have opposite signs")]
    ElevationStraddlesZero { index: usize, left: f64, right: f64 },
    #[error("need more than 2 azimuth bins, got {n}")]
    TooFewAzimuthBins { n: usize },
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{axis} edges must be strictly increasing at index {index}")]
    EdgesNotIncreasing { axis: &'static str, index: usize },
    #[error("{axis} needs at least {min} edges, got {got}")]
    TooFewEdges { axis: &'static str, min: usize, got: usize },
    #[error("{axis} edges must start at {expected}, got {got}")]
    BadLowerCover { axis: &'static str, expected: f64, got: f64 },
    #[error("{axis} edges must end at {expected}, got {got}")]
    BadUpperCover { axis: &'static str, expected: f64, got: f64 },
    #[error("sphere radius must be positive, got {0}")]
    NonPositiveRho(f64),
    #[error("radial edges must lie in (0, ρ]; edge {index} = {value} with ρ = {rho}")]
    RadialOutOfRange { index: usize, value: f64, rho: f64 },
    #[error("invalid bin layout: {0}")]
    Asymmetry(#[from] AsymmetryViolation),
    #[error("config text: {0}")]
    Parse(String),
}

/// Packed bin index κ. Zero is the self-convolution bin; otherwise
/// `κ = k_θ + (k_φ−1)·n + (k_r−1)·n·p` with 1-based component indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BinIndex(u32);

impl BinIndex {
    pub const SELF: BinIndex = BinIndex(0);

    pub fn kappa(self) -> usize {
        self.0 as usize
    }

    pub fn is_self(self) -> bool {
        self.0 == 0
    }
}

/// Bin-edge arrays of a spherical kernel.
///
/// Structural invariants (strictly increasing edges, full angular coverage,
/// radial edges in `(0, ρ]`) are enforced at construction. The asymmetry
/// conditions are checked separately by [`KernelConfig::validate`] so that
/// invalid layouts can be constructed and reported.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelConfig {
    theta_edges: Vec<f64>,
    phi_edges: Vec<f64>,
    r_edges: Vec<f64>,
    rho: f64,
    asymmetry_ok: bool,
}

impl KernelConfig {
    pub fn new(
        theta_edges: Vec<f64>,
        phi_edges: Vec<f64>,
        r_edges: Vec<f64>,
        rho: f64,
    ) -> Result<Self, ConfigError> {
        if rho <= 0.0 || !rho.is_finite() {
            return Err(ConfigError::NonPositiveRho(rho));
        }
        check_edges("azimuth", &theta_edges, 2)?;
        check_edges("elevation", &phi_edges, 2)?;
        check_edges("radial", &r_edges, 2)?;
        check_cover("azimuth", &theta_edges, -PI, PI)?;
        check_cover("elevation", &phi_edges, -FRAC_PI_2, FRAC_PI_2)?;
        for (index, &value) in r_edges.iter().enumerate() {
            if value <= 0.0 || value > rho {
                return Err(ConfigError::RadialOutOfRange { index, value, rho });
            }
        }
        let last = *r_edges.last().unwrap();
        if last != rho {
            return Err(ConfigError::BadUpperCover { axis: "radial", expected: rho, got: last });
        }
        let mut cfg = KernelConfig { theta_edges, phi_edges, r_edges, rho, asymmetry_ok: false };
        cfg.asymmetry_ok = cfg.validate().is_ok();
        Ok(cfg)
    }

    /// Uniform azimuth/elevation split with `n × p × q` bins and a uniformly
    /// split radial dimension over `(0, ρ]`.
    pub fn preset_uniform(n: usize, p: usize, q: usize, rho: f64) -> Result<Self, ConfigError> {
        if rho <= 0.0 || !rho.is_finite() {
            return Err(ConfigError::NonPositiveRho(rho));
        }
        if q == 0 {
            return Err(ConfigError::TooFewEdges { axis: "radial", min: 2, got: q + 1 });
        }
        if n == 0 || p == 0 {
            return Err(ConfigError::TooFewEdges {
                axis: if n == 0 { "azimuth" } else { "elevation" },
                min: 2,
                got: 1,
            });
        }
        let mut theta: Vec<f64> = (0..=n).map(|k| -PI + 2.0 * PI * (k as f64 / n as f64)).collect();
        theta[0] = -PI;
        theta[n] = PI;
        if n % 2 == 0 {
            theta[n / 2] = 0.0;
        }
        let mut phi: Vec<f64> =
            (0..=p).map(|k| -FRAC_PI_2 + PI * (k as f64 / p as f64)).collect();
        phi[0] = -FRAC_PI_2;
        phi[p] = FRAC_PI_2;
        if p % 2 == 0 {
            phi[p / 2] = 0.0;
        }
        let eps = DEFAULT_EPSILON.min(0.5 * rho / q as f64);
        let mut r: Vec<f64> = (0..=q).map(|k| rho * (k as f64 / q as f64)).collect();
        r[0] = eps;
        r[q] = rho;
        let cfg = KernelConfig::new(theta, phi, r, rho)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The 49-bin layout analogous to a 3×3×3 voxel kernel: radial shells at
    /// 1, √2 and √3 with 4×4 angular bins each, ρ = √3.
    pub fn preset_3dcnn_analog() -> Self {
        let rho = 3.0_f64.sqrt();
        let theta = vec![-PI, -FRAC_PI_2, 0.0, FRAC_PI_2, PI];
        let phi = vec![-FRAC_PI_2, -std::f64::consts::FRAC_PI_4, 0.0, std::f64::consts::FRAC_PI_4, FRAC_PI_2];
        let r = vec![DEFAULT_EPSILON, 1.0, 2.0_f64.sqrt(), rho];
        KernelConfig::new(theta, phi, r, rho).expect("preset is structurally valid")
    }

    /// Check the conditions under which no nonzero bin can hold both a
    /// displacement and its negation: no azimuth or elevation bin straddles
    /// zero, and there are more than two azimuth bins.
    pub fn validate(&self) -> Result<(), AsymmetryViolation> {
        let n = self.num_theta_bins();
        if n <= 2 {
            return Err(AsymmetryViolation::TooFewAzimuthBins { n });
        }
        for (i, w) in self.theta_edges.windows(2).enumerate() {
            if w[0] * w[1] < 0.0 {
                return Err(AsymmetryViolation::AzimuthStraddlesZero {
                    index: i + 1,
                    left: w[0],
                    right: w[1],
                });
            }
        }
        for (i, w) in self.phi_edges.windows(2).enumerate() {
            if w[0] * w[1] < 0.0 {
                return Err(AsymmetryViolation::ElevationStraddlesZero {
                    index: i + 1,
                    left: w[0],
                    right: w[1],
                });
            }
        }
        Ok(())
    }

    pub fn num_theta_bins(&self) -> usize {
        self.theta_edges.len() - 1
    }

    pub fn num_phi_bins(&self) -> usize {
        self.phi_edges.len() - 1
    }

    pub fn num_r_bins(&self) -> usize {
        self.r_edges.len() - 1
    }

    /// Total number of weight slots, `n·p·q + 1`.
    pub fn bin_count(&self) -> usize {
        self.num_theta_bins() * self.num_phi_bins() * self.num_r_bins() + 1
    }

    pub fn theta_edges(&self) -> &[f64] {
        &self.theta_edges
    }

    pub fn phi_edges(&self) -> &[f64] {
        &self.phi_edges
    }

    pub fn r_edges(&self) -> &[f64] {
        &self.r_edges
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn epsilon(&self) -> f64 {
        self.r_edges[0]
    }

    /// Same edge layout, rescaled radially to a new sphere radius.
    pub fn with_rho(&self, rho: f64) -> Result<Self, ConfigError> {
        if rho <= 0.0 || !rho.is_finite() {
            return Err(ConfigError::NonPositiveRho(rho));
        }
        let scale = rho / self.rho;
        let mut r: Vec<f64> = self.r_edges.iter().map(|e| e * scale).collect();
        let q = r.len() - 1;
        r[q] = rho;
        r[0] = r[0].min(DEFAULT_EPSILON);
        KernelConfig::new(self.theta_edges.clone(), self.phi_edges.clone(), r, rho)
    }

    /// Assign the displacement `neighbor − target` to its kernel bin.
    ///
    /// Exactly coincident points map to bin 0. Otherwise the azimuth and
    /// elevation use half-open `[left, right)` intervals with the last
    /// interval closed on the right; the radial index is found the same way
    /// with everything below the first edge clamped to shell 1 and everything
    /// beyond ρ (outliers) clamped to the outermost shell q, keeping the
    /// angular bins from θ and φ.
    pub fn assign_bin(&self, target: Point3, neighbor: Point3) -> Result<BinIndex, ConfigError> {
        if !self.asymmetry_ok {
            // Re-derive the report; the cached flag only spares the scan on
            // the hot path.
            self.validate()?;
        }
        Ok(self.assign_bin_unchecked(target, neighbor))
    }

    pub(crate) fn assign_bin_unchecked(&self, target: Point3, neighbor: Point3) -> BinIndex {
        let delta = neighbor - target;
        if delta.x == 0.0 && delta.y == 0.0 && delta.z == 0.0 {
            return BinIndex::SELF;
        }
        let s = to_spherical(delta);
        let n = self.num_theta_bins();
        let p = self.num_phi_bins();
        let q = self.num_r_bins();
        let k_theta = interval_index(&self.theta_edges, s.theta);
        let k_phi = interval_index(&self.phi_edges, s.phi);
        let k_r = if s.r > self.rho { q } else { interval_index(&self.r_edges, s.r) };
        BinIndex((k_theta + (k_phi - 1) * n + (k_r - 1) * n * p) as u32)
    }

    /// Unpack κ into 1-based `(k_θ, k_φ, k_r)`; `None` for the self bin.
    pub fn unpack(&self, bin: BinIndex) -> Option<(usize, usize, usize)> {
        self.unpack_kappa(bin.kappa())
    }

    /// [`KernelConfig::unpack`] on a raw κ value.
    pub fn unpack_kappa(&self, kappa: usize) -> Option<(usize, usize, usize)> {
        if kappa == 0 {
            return None;
        }
        let n = self.num_theta_bins();
        let p = self.num_phi_bins();
        let i = kappa - 1;
        Some((i % n + 1, (i / n) % p + 1, i / (n * p) + 1))
    }

    /// Plain-text key/value form with the edge arrays listed explicitly, for
    /// reproducibility manifests.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        let join = |xs: &[f64]| xs.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        writeln!(out, "rho = {}", self.rho).unwrap();
        writeln!(out, "theta_edges = {}", join(&self.theta_edges)).unwrap();
        writeln!(out, "phi_edges = {}", join(&self.phi_edges)).unwrap();
        writeln!(out, "r_edges = {}", join(&self.r_edges)).unwrap();
        out
    }

    pub fn from_kv_text(text: &str) -> Result<Self, ConfigError> {
        let mut rho = None;
        let mut theta = None;
        let mut phi = None;
        let mut r = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Parse(format!("line {}: missing '='", lineno + 1)))?;
            let parse_list = |v: &str| -> Result<Vec<f64>, ConfigError> {
                v.split_whitespace()
                    .map(|tok| {
                        tok.parse::<f64>().map_err(|_| {
                            ConfigError::Parse(format!("line {}: bad number {tok:?}", lineno + 1))
                        })
                    })
                    .collect()
            };
            match key.trim() {
                "rho" => {
                    rho = Some(value.trim().parse::<f64>().map_err(|_| {
                        ConfigError::Parse(format!("line {}: bad number", lineno + 1))
                    })?)
                }
                "theta_edges" => theta = Some(parse_list(value)?),
                "phi_edges" => phi = Some(parse_list(value)?),
                "r_edges" => r = Some(parse_list(value)?),
                other => {
                    return Err(ConfigError::Parse(format!(
                        "line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        let missing = |what: &str| ConfigError::Parse(format!("missing key {what:?}"));
        KernelConfig::new(
            theta.ok_or_else(|| missing("theta_edges"))?,
            phi.ok_or_else(|| missing("phi_edges"))?,
            r.ok_or_else(|| missing("r_edges"))?,
            rho.ok_or_else(|| missing("rho"))?,
        )
    }
}

/// 1-based index of the half-open interval `[edges[k−1], edges[k])` holding
/// `x`, clamped to the covered range: values below the first edge report the
/// first interval, and the last interval is closed on the right.
fn interval_index(edges: &[f64], x: f64) -> usize {
    let bins = edges.len() - 1;
    edges.partition_point(|e| *e <= x).clamp(1, bins)
}

fn check_edges(axis: &'static str, edges: &[f64], min: usize) -> Result<(), ConfigError> {
    if edges.len() < min {
        return Err(ConfigError::TooFewEdges { axis, min, got: edges.len() });
    }
    for (i, w) in edges.windows(2).enumerate() {
        if !(w[0] < w[1]) {
            return Err(ConfigError::EdgesNotIncreasing { axis, index: i + 1 });
        }
    }
    Ok(())
}

fn check_cover(axis: &'static str, edges: &[f64], lo: f64, hi: f64) -> Result<(), ConfigError> {
    let first = edges[0];
    let last = *edges.last().unwrap();
    if first != lo {
        return Err(ConfigError::BadLowerCover { axis, expected: lo, got: first });
    }
    if last != hi {
        return Err(ConfigError::BadUpperCover { axis, expected: hi, got: last });
    }
    Ok(())
}

/// A spherical kernel: bin layout plus one learnable weight matrix per bin
/// and a shared bias vector. Matrix κ = 0 is the self-convolution weight.
#[derive(Clone, Debug, PartialEq)]
pub struct SphericalKernel<F: Real> {
    config: KernelConfig,
    weights: Vec<Array2<F>>,
    bias: Array1<F>,
}

impl<F: Real> SphericalKernel<F> {
    /// Zero-mean uniform init with per-matrix scale √(6 / (fan_in + fan_out)).
    pub fn init<R: Rng + ?Sized>(
        config: KernelConfig,
        in_channels: usize,
        out_channels: usize,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (in_channels + out_channels) as f64).sqrt();
        let bins = config.bin_count();
        let weights = (0..bins)
            .map(|_| {
                Array2::from_shape_simple_fn((out_channels, in_channels), || {
                    F::from_f64(rng.gen_range(-limit..=limit))
                })
            })
            .collect();
        SphericalKernel { config, weights, bias: Array1::zeros(out_channels) }
    }

    pub fn from_parts(
        config: KernelConfig,
        weights: Vec<Array2<F>>,
        bias: Array1<F>,
    ) -> Result<Self, ConfigError> {
        assert_eq!(weights.len(), config.bin_count(), "one weight matrix per bin");
        let shape = weights[0].dim();
        assert!(weights.iter().all(|w| w.dim() == shape), "all matrices share a shape");
        assert_eq!(bias.len(), shape.0, "bias length matches out_channels");
        Ok(SphericalKernel { config, weights, bias })
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn in_channels(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn out_channels(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn weights(&self) -> &[Array2<F>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<F>] {
        &mut self.weights
    }

    pub fn bias(&self) -> &Array1<F> {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut Array1<F> {
        &mut self.bias
    }

    /// Split borrow of the weight bank and bias together.
    pub fn weights_bias_mut(&mut self) -> (&mut [Array2<F>], &mut Array1<F>) {
        (&mut self.weights, &mut self.bias)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn uniform_8x2x3_is_valid() {
        let cfg = KernelConfig::preset_uniform(8, 2, 3, 1.0).unwrap();
        assert_eq!(cfg.bin_count(), 49);
        assert!(cfg.validate().is_ok());
        // Uniform spacing.
        for w in cfg.theta_edges().windows(2) {
            assert!((w[1] - w[0] - 2.0 * PI / 8.0).abs() < 1e-12);
        }
        for w in cfg.phi_edges().windows(2) {
            assert!((w[1] - w[0] - PI / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn straddling_azimuth_bin_is_reported() {
        let theta = vec![-PI, -PI / 3.0, PI / 3.0, PI];
        let phi = vec![-FRAC_PI_2, 0.0, FRAC_PI_2];
        let cfg = KernelConfig::new(theta, phi, vec![1e-9, 1.0], 1.0).unwrap();
        match cfg.validate() {
            Err(AsymmetryViolation::AzimuthStraddlesZero { index, left, right }) => {
                assert_eq!(index, 2);
                assert!(left < 0.0 && right > 0.0);
            }
            other => panic!("expected azimuth violation, got {other:?}"),
        }
    }

    #[test]
    fn two_azimuth_bins_rejected() {
        let err = KernelConfig::preset_uniform(2, 2, 1, 1.0).unwrap_err();
        assert_eq!(
            err,
            ConfigError::Asymmetry(AsymmetryViolation::TooFewAzimuthBins { n: 2 })
        );
    }

    #[test]
    fn odd_azimuth_count_rejected() {
        // n = 3 puts edges at [−π, −π/3, π/3, π]: the middle bin straddles 0.
        let err = KernelConfig::preset_uniform(3, 2, 1, 1.0).unwrap_err();
        assert!(matches!(
            err,
            ConfigError::Asymmetry(AsymmetryViolation::AzimuthStraddlesZero { .. })
        ));
    }

    #[test]
    fn analog_preset_edges_and_count() {
        let cfg = KernelConfig::preset_3dcnn_analog();
        assert_eq!(cfg.bin_count(), 49);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.theta_edges(), &[-PI, -FRAC_PI_2, 0.0, FRAC_PI_2, PI]);
        assert_eq!(cfg.phi_edges(), &[-FRAC_PI_2, -FRAC_PI_4, 0.0, FRAC_PI_4, FRAC_PI_2]);
        assert_eq!(cfg.rho(), 3.0_f64.sqrt());
        assert_eq!(cfg.r_edges()[1], 1.0);
        assert_eq!(cfg.r_edges()[2], 2.0_f64.sqrt());
        // Uniform 4×4 angular preset matches the analog preset on Θ and Φ.
        let uni = KernelConfig::preset_uniform(4, 4, 3, 3.0_f64.sqrt()).unwrap();
        assert_eq!(uni.theta_edges(), cfg.theta_edges());
        assert_eq!(uni.phi_edges(), cfg.phi_edges());
    }

    #[test]
    fn self_bin_requires_exact_coincidence() {
        let cfg = KernelConfig::preset_uniform(8, 2, 3, 1.0).unwrap();
        let t = Point3::new(0.25, -0.5, 0.125);
        assert_eq!(cfg.assign_bin(t, t).unwrap(), BinIndex::SELF);
        // Below ε but nonzero: innermost radial shell, never the self bin.
        let near = Point3::new(t.x + 1e-12, t.y, t.z);
        let bin = cfg.assign_bin(t, near).unwrap();
        assert!(!bin.is_self());
        let (_, _, k_r) = cfg.unpack(bin).unwrap();
        assert_eq!(k_r, 1);
    }

    #[test]
    fn packing_formula_example() {
        // k_θ=3, k_φ=2, k_r=2 with n=8, p=2 → κ = 3 + 8 + 16 = 27.
        let cfg = KernelConfig::preset_uniform(8, 2, 3, 1.0).unwrap();
        let kappa = 3 + (2 - 1) * 8 + (2 - 1) * 8 * 2;
        assert_eq!(kappa, 27);
        assert_eq!(cfg.unpack(BinIndex(27)).unwrap(), (3, 2, 2));
    }

    #[test]
    fn outlier_clamps_radial_shell_only() {
        let cfg = KernelConfig::preset_uniform(8, 2, 3, 1.0).unwrap();
        let target = Point3::ORIGIN;
        let inside = Point3::new(0.3, 0.2, 0.1);
        let outlier = inside * (1.5 / inside.norm());
        let b_in = cfg.assign_bin(target, inside).unwrap();
        let b_out = cfg.assign_bin(target, outlier).unwrap();
        let (kt_i, kp_i, _) = cfg.unpack(b_in).unwrap();
        let (kt_o, kp_o, kr_o) = cfg.unpack(b_out).unwrap();
        assert_eq!((kt_i, kp_i), (kt_o, kp_o));
        assert_eq!(kr_o, cfg.num_r_bins());
    }

    #[test]
    fn boundary_lands_in_left_closed_bin() {
        let cfg = KernelConfig::preset_3dcnn_analog();
        // θ = π/2 exactly: left-closed boundary of bin 4.
        let bin = cfg.assign_bin(Point3::ORIGIN, Point3::new(0.0, 0.5, 0.0)).unwrap();
        let (k_theta, _, _) = cfg.unpack(bin).unwrap();
        assert_eq!(k_theta, 4);
        // θ = π exactly (negative-x axis): last interval is right-closed.
        let bin = cfg.assign_bin(Point3::ORIGIN, Point3::new(-0.5, 0.0, 0.0)).unwrap();
        let (k_theta, _, _) = cfg.unpack(bin).unwrap();
        assert_eq!(k_theta, 4);
    }

    #[test]
    fn kv_text_round_trip() {
        let cfg = KernelConfig::preset_3dcnn_analog();
        let text = cfg.to_kv_text();
        let back = KernelConfig::from_kv_text(&text).unwrap();
        assert_eq!(back, cfg);
        assert!(KernelConfig::from_kv_text("rho = x").is_err());
        assert!(KernelConfig::from_kv_text("rho = 1\n").is_err());
    }

    #[test]
    fn rescaled_config_keeps_shape() {
        let cfg = KernelConfig::preset_uniform(8, 2, 3, 2.0).unwrap();
        let scaled = cfg.with_rho(0.5).unwrap();
        assert_eq!(scaled.rho(), 0.5);
        assert_eq!(scaled.bin_count(), cfg.bin_count());
        assert_eq!(scaled.theta_edges(), cfg.theta_edges());
    }
}
