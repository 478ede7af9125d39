//! `SSCV` label-volume files.
//!
//! Layout (little-endian): magic `SSCV`, version `u32`, dims `3 × u32`, origin `3 × f32`,
//! voxel size `f32`, then one `u8` label per cell in x-fastest order.

use crate::error::{Error, Result};
use crate::geometry::VolumeSpec;
use crate::io::ByteReader;
use crate::volume::LabeledVolume;

pub const VOLUME_MAGIC: &[u8; 4] = b"SSCV";
pub const VOLUME_VERSION: u32 = 1;
pub const VOLUME_HEADER_LEN: usize = 36;

pub fn write_volume(vol: &LabeledVolume) -> Vec<u8> {
    let mut out = Vec::with_capacity(VOLUME_HEADER_LEN + vol.labels.len());
    out.extend_from_slice(VOLUME_MAGIC);
    out.extend_from_slice(&VOLUME_VERSION.to_le_bytes());
    for d in vol.spec.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for o in vol.spec.origin {
        out.extend_from_slice(&(o as f32).to_le_bytes());
    }
    out.extend_from_slice(&(vol.spec.voxel_size as f32).to_le_bytes());
    out.extend_from_slice(&vol.labels);
    out
}

pub fn read_volume(bytes: &[u8]) -> Result<LabeledVolume> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != VOLUME_MAGIC {
        return Err(Error::format(0, "missing SSCV magic"));
    }
    let version = r.u32()?;
    if version != VOLUME_VERSION {
        return Err(Error::format(4, format!("unsupported volume version {version}")));
    }
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let origin = [r.f32()? as f64, r.f32()? as f64, r.f32()? as f64];
    let voxel_size = r.f32()? as f64;
    let spec = VolumeSpec::new(origin, voxel_size, dims).map_err(|e| Error::format(8, e.to_string()))?;
    let n = spec.num_cells();
    if r.remaining() != n {
        return Err(Error::format(
            r.offset(),
            format!("expected {n} label bytes, found {}", r.remaining()),
        ));
    }
    LabeledVolume::new(spec, r.take(n)?.to_vec())
}
