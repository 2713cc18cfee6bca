//! Model checkpoints: a little-endian binary container with a versioned
//! header holding the channel spec, per-layer kernel edge arrays, all weight
//! matrices in row-major order, batch-norm state, and classifier weights.
//!
//! Values are stored as f64 regardless of the in-memory scalar; a precision
//! tag records what the model was trained in.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::kernel::{ConfigError, KernelConfig, SphericalKernel};
use crate::network::{BatchNorm, ModelParams};
use crate::real::Real;

const MAGIC: &[u8; 8] = b"SPHCONV\0";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("invalid kernel config in checkpoint: {0}")]
    Config(#[from] ConfigError),
}

/// Scalar width the checkpoint was produced from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn of<F: Real>() -> Self {
        if std::mem::size_of::<F>() == 4 {
            Precision::F32
        } else {
            Precision::F64
        }
    }

    fn tag(self) -> u8 {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }

    fn from_tag(tag: u8) -> Result<Self, CheckpointError> {
        match tag {
            4 => Ok(Precision::F32),
            8 => Ok(Precision::F64),
            other => Err(CheckpointError::Corrupt(format!("precision tag {other}"))),
        }
    }
}

pub fn save_checkpoint<F: Real, P: AsRef<Path>>(
    path: P,
    params: &ModelParams<F>,
) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, params)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<F: Real, P: AsRef<Path>>(
    path: P,
) -> Result<(ModelParams<F>, Precision), CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    read_checkpoint(&mut r)
}

pub fn write_checkpoint<F: Real, W: Write>(
    w: &mut W,
    params: &ModelParams<F>,
) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    w.write_all(&[Precision::of::<F>().tag()])?;
    write_u32(w, params.depth() as u32)?;
    write_u32(w, params.num_classes() as u32)?;
    write_u32(w, params.channels().len() as u32)?;
    for &c in params.channels() {
        write_u32(w, c as u32)?;
    }
    for kernel in params.kernels() {
        let cfg = kernel.config();
        write_f64_slice(w, &[cfg.rho()])?;
        write_f64_list(w, cfg.theta_edges())?;
        write_f64_list(w, cfg.phi_edges())?;
        write_f64_list(w, cfg.r_edges())?;
        write_u32(w, kernel.out_channels() as u32)?;
        write_u32(w, kernel.in_channels() as u32)?;
        for m in kernel.weights() {
            write_tensor(w, m.as_slice().unwrap())?;
        }
        write_tensor(w, kernel.bias().as_slice().unwrap())?;
    }
    for bn in params.bn() {
        write_tensor(w, bn.gamma.as_slice().unwrap())?;
        write_tensor(w, bn.beta.as_slice().unwrap())?;
        write_tensor(w, bn.running_mean.as_slice().unwrap())?;
        write_tensor(w, bn.running_var.as_slice().unwrap())?;
    }
    write_tensor(w, params.fc_weight().as_slice().unwrap())?;
    write_tensor(w, params.fc_bias().as_slice().unwrap())?;
    Ok(())
}

pub fn read_checkpoint<F: Real, R: Read>(
    r: &mut R,
) -> Result<(ModelParams<F>, Precision), CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let precision = Precision::from_tag(tag[0])?;
    let depth = read_u32(r)? as usize;
    let num_classes = read_u32(r)? as usize;
    let n_channels = read_u32(r)? as usize;
    if depth == 0 || depth > 64 || n_channels != depth {
        return Err(CheckpointError::Corrupt(format!(
            "depth {depth} with {n_channels} channel entries"
        )));
    }
    let mut channels = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        channels.push(read_u32(r)? as usize);
    }

    let mut kernels = Vec::with_capacity(depth);
    for l in 1..=depth {
        let rho = read_f64(r)?;
        let theta = read_f64_list(r)?;
        let phi = read_f64_list(r)?;
        let redges = read_f64_list(r)?;
        let config = KernelConfig::new(theta, phi, redges, rho)?;
        let out_ch = read_u32(r)? as usize;
        let in_ch = read_u32(r)? as usize;
        let expected_in = if l == 1 { crate::network::INPUT_CHANNELS } else { channels[l - 2] };
        if out_ch != channels[l - 1] || in_ch != expected_in {
            return Err(CheckpointError::Corrupt(format!(
                "layer {l} kernel is {out_ch}×{in_ch}, channel spec says {}×{expected_in}",
                channels[l - 1]
            )));
        }
        let mut weights = Vec::with_capacity(config.bin_count());
        for _ in 0..config.bin_count() {
            let data = read_tensor::<F, _>(r, out_ch * in_ch)?;
            weights.push(
                Array2::from_shape_vec((out_ch, in_ch), data)
                    .map_err(|e| CheckpointError::Corrupt(e.to_string()))?,
            );
        }
        let bias = Array1::from_vec(read_tensor::<F, _>(r, out_ch)?);
        kernels.push(SphericalKernel::from_parts(config, weights, bias)?);
    }

    let mut bn = Vec::with_capacity(depth - 1);
    for l in 1..depth {
        let c = channels[l - 1];
        let mut b = BatchNorm::<F>::new(c);
        b.gamma = Array1::from_vec(read_tensor::<F, _>(r, c)?);
        b.beta = Array1::from_vec(read_tensor::<F, _>(r, c)?);
        b.running_mean = Array1::from_vec(read_tensor::<F, _>(r, c)?);
        b.running_var = Array1::from_vec(read_tensor::<F, _>(r, c)?);
        bn.push(b);
    }

    let fc_w = read_tensor::<F, _>(r, num_classes * channels[depth - 1])?;
    let fc_weight = Array2::from_shape_vec((num_classes, channels[depth - 1]), fc_w)
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let fc_bias = Array1::from_vec(read_tensor::<F, _>(r, num_classes)?);

    Ok((
        ModelParams::from_parts(depth, channels, num_classes, kernels, bn, fc_weight, fc_bias),
        precision,
    ))
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, CheckpointError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn write_f64_slice<W: Write>(w: &mut W, xs: &[f64]) -> io::Result<()> {
    for &x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn write_f64_list<W: Write>(w: &mut W, xs: &[f64]) -> io::Result<()> {
    write_u32(w, xs.len() as u32)?;
    write_f64_slice(w, xs)
}

fn read_f64_list<R: Read>(r: &mut R) -> Result<Vec<f64>, CheckpointError> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(CheckpointError::Corrupt(format!("edge list of length {len}")));
    }
    (0..len).map(|_| read_f64(r)).collect()
}

fn write_tensor<F: Real, W: Write>(w: &mut W, xs: &[F]) -> io::Result<()> {
    write_u32(w, xs.len() as u32)?;
    for &x in xs {
        w.write_all(&x.to_f64_lossy().to_le_bytes())?;
    }
    Ok(())
}

fn read_tensor<F: Real, R: Read>(r: &mut R, expected: usize) -> Result<Vec<F>, CheckpointError> {
    let len = read_u32(r)? as usize;
    if len != expected {
        return Err(CheckpointError::Corrupt(format!(
            "tensor length {len}, expected {expected}"
        )));
    }
    (0..len).map(|_| read_f64(r).map(F::from_f64)).collect()
}
