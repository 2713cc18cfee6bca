//! Sampled-cloud cache: 8-byte magic, little-endian u64 point count, then
//! `count` xyz triples as little-endian f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::DataError;
use crate::geometry::{Point3, PointCloud};

const MAGIC: &[u8; 8] = b"PCXYZ\0\0\x01";

pub fn write_cloud_cache<P: AsRef<Path>>(path: P, cloud: &PointCloud) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(cloud.len() as u64).to_le_bytes())?;
    for p in &cloud.points {
        w.write_all(&(p.x as f32).to_le_bytes())?;
        w.write_all(&(p.y as f32).to_le_bytes())?;
        w.write_all(&(p.z as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cloud_cache<P: AsRef<Path>>(path: P) -> Result<PointCloud, DataError> {
    let mut r = BufReader::new(File::open(&path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DataError::BadCache(format!("{}: bad magic", path.as_ref().display())));
    }
    let mut count_buf = [0u8; 8];
    r.read_exact(&mut count_buf)?;
    let count = u64::from_le_bytes(count_buf) as usize;
    let mut points = Vec::with_capacity(count);
    let mut buf = [0u8; 12];
    for _ in 0..count {
        r.read_exact(&mut buf)?;
        let x = f32::from_le_bytes(buf[0..4].try_into().unwrap()) as f64;
        let y = f32::from_le_bytes(buf[4..8].try_into().unwrap()) as f64;
        let z = f32::from_le_bytes(buf[8..12].try_into().unwrap()) as f64;
        points.push(Point3::new(x, y, z));
    }
    Ok(PointCloud::new(points))
}
