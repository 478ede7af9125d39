//! KITTI odometry on-disk formats: scans, labels, poses and calibration.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Pose};
use crate::io::ByteReader;

/// Orthonormality tolerance for poses parsed from text.
const POSE_TOL: f64 = 1e-3;

/// Decodes 16-byte `(x, y, z, intensity)` little-endian `f32` records. Intensity becomes
/// the single point feature.
pub fn read_scan(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() % 16 != 0 {
        return Err(Error::format(
            bytes.len() - bytes.len() % 16,
            format!("scan length {} is not a multiple of 16", bytes.len()),
        ));
    }
    let n = bytes.len() / 16;
    let mut r = ByteReader::new(bytes);
    let mut positions = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    for _ in 0..n {
        let x = r.f32()? as f64;
        let y = r.f32()? as f64;
        let z = r.f32()? as f64;
        positions.push([x, y, z]);
        intensity.push(r.f32()? as f64);
    }
    PointCloud::with_features(positions, intensity, 1)
}

/// Encodes a cloud as scan records; intensity is the first feature, or 0 without features.
pub fn write_scan(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 * cloud.len());
    for (i, p) in cloud.positions.iter().enumerate() {
        for v in p {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        let intensity = if cloud.feature_dim > 0 { cloud.feature(i)[0] } else { 0.0 };
        out.extend_from_slice(&(intensity as f32).to_le_bytes());
    }
    out
}

/// Raw semantic id → training id table. Ids missing from the table map to 0.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelRemap {
    table: HashMap<u32, u32>,
}

impl LabelRemap {
    /// Parses `raw_id target_id` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = HashMap::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let body = line.split('#').next().unwrap_or("").trim();
            if !body.is_empty() {
                let fields: Vec<&str> = body.split_whitespace().collect();
                let parsed = match fields.as_slice() {
                    [a, b] => a.parse::<u32>().ok().zip(b.parse::<u32>().ok()),
                    _ => None,
                };
                let (raw, target) =
                    parsed.ok_or_else(|| Error::format(offset, format!("expected `raw_id target_id`, got `{body}`")))?;
                table.insert(raw, target);
            }
            offset += line.len();
        }
        Ok(Self { table })
    }

    pub fn map(&self, raw: u32) -> u32 {
        self.table.get(&raw).copied().unwrap_or(0)
    }
}

/// Decodes one little-endian `u32` per point keeping the low 16 bits (the semantic id),
/// then applies `remap` if given.
pub fn read_labels(bytes: &[u8], remap: Option<&LabelRemap>) -> Result<Vec<u32>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::format(
            bytes.len() - bytes.len() % 4,
            format!("label length {} is not a multiple of 4", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| {
            let raw = u32::from_le_bytes(c.try_into().expect("chunk of 4")) & 0xFFFF;
            remap.map_or(raw, |m| m.map(raw))
        })
        .collect())
}

pub fn write_labels(labels: &[u32]) -> Vec<u8> {
    labels.iter().flat_map(|l| l.to_le_bytes()).collect()
}

/// Attaches labels to a scan, reporting a count mismatch at the first unmatched label byte.
pub fn attach_labels(cloud: PointCloud, labels: Vec<u32>) -> Result<PointCloud> {
    if labels.len() != cloud.len() {
        return Err(Error::format(
            4 * labels.len().min(cloud.len()),
            format!("{} labels for {} points", labels.len(), cloud.len()),
        ));
    }
    cloud.with_labels(labels)
}

fn parse_pose_fields(fields: &[&str], offset: usize) -> Result<Pose> {
    if fields.len() != 12 {
        return Err(Error::format(offset, format!("expected 12 pose values, got {}", fields.len())));
    }
    let mut v = [0.0; 12];
    for (slot, f) in v.iter_mut().zip(fields) {
        *slot = f
            .parse()
            .map_err(|_| Error::format(offset, format!("`{f}` is not a number")))?;
    }
    let rotation = [[v[0], v[1], v[2]], [v[4], v[5], v[6]], [v[8], v[9], v[10]]];
    Pose::new(rotation, [v[3], v[7], v[11]], POSE_TOL).map_err(|e| Error::format(offset, e.to_string()))
}

/// One row-major 3×4 matrix (12 reals) per non-empty line.
pub fn read_poses(text: &str) -> Result<Vec<Pose>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !fields.is_empty() {
            out.push(parse_pose_fields(&fields, offset)?);
        }
        offset += line.len();
    }
    Ok(out)
}

fn pose_line(p: &Pose) -> String {
    let r = &p.rotation;
    let t = &p.translation;
    let v = [
        r[0][0], r[0][1], r[0][2], t[0], r[1][0], r[1][1], r[1][2], t[1], r[2][0], r[2][1], r[2][2], t[2],
    ];
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
}

pub fn write_poses(poses: &[Pose]) -> String {
    poses.iter().map(|p| pose_line(p) + "\n").collect()
}

/// The velodyne → camera transform from the `Tr:` line of a calibration file.
pub fn read_calib(text: &str) -> Result<Pose> {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if let Some(rest) = line.trim_start().strip_prefix("Tr:") {
            let fields: Vec<&str> = rest.split_whitespace().collect();
            return parse_pose_fields(&fields, offset);
        }
        offset += line.len();
    }
    Err(Error::format(text.len(), "calibration has no `Tr:` line"))
}

pub fn write_calib(tr: &Pose) -> String {
    format!("Tr: {}\n", pose_line(tr))
}
