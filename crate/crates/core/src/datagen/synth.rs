//! Seeded synthetic scenes: labeled primitives sampled densely for ground truth and
//! sparsely, with an occluded sector, for the sweep.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gt::crop;
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3, VolumeSpec};
use crate::model::config::toy_ssc_spec;
use crate::volume::{majority_vote_labels, LabeledVolume};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSceneSpec {
    pub volume: VolumeSpec,
    pub num_classes: usize,
    pub boxes: usize,
    /// Ground plane plus `planes - 1` vertical walls.
    pub planes: usize,
    /// Dense samples per square meter of primitive surface.
    pub density: f64,
    /// Probability that a dense point survives into the sweep, in `(0, 1]`.
    pub sweep_fraction: f64,
    /// Share of the forward half-plane hidden from the sensor, in `[0, 1)`.
    pub occlusion_fraction: f64,
    pub sensor: Vec3,
    pub seed: u64,
}

impl SyntheticSceneSpec {
    /// Scenes sized for the toy model: about 500 sweep points in a 32×32×8 volume.
    pub fn toy(seed: u64) -> Self {
        Self {
            volume: toy_ssc_spec(),
            num_classes: 4,
            boxes: 6,
            planes: 2,
            density: 100.0,
            sweep_fraction: 0.12,
            occlusion_fraction: 0.15,
            sensor: [0.0; 3],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sweep_fraction > 0.0 && self.sweep_fraction <= 1.0) {
            return Err(Error::contract(format!("sweep fraction {} outside (0, 1]", self.sweep_fraction)));
        }
        if !(0.0..1.0).contains(&self.occlusion_fraction) {
            return Err(Error::contract(format!(
                "occlusion fraction {} outside [0, 1)",
                self.occlusion_fraction
            )));
        }
        if self.num_classes == 0 || self.num_classes > 254 {
            return Err(Error::contract("class count must be in 1..=254"));
        }
        if self.planes == 0 {
            return Err(Error::contract("a scene needs its ground plane"));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(Error::contract("density must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    /// Every sample inside the volume.
    pub dense: PointCloud,
    pub sweep: PointCloud,
    pub gt: LabeledVolume,
}

/// A labeled parallelogram `corner + u·a + v·b`, `u, v ∈ [0, 1]`.
struct Face {
    corner: Vec3,
    a: Vec3,
    b: Vec3,
    label: u32,
}

impl Face {
    fn area(&self) -> f64 {
        let [a, b] = [self.a, self.b];
        let c = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
        (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
    }
}

fn box_faces(lo: Vec3, size: Vec3, label: u32, out: &mut Vec<Face>) {
    let [sx, sy, sz] = size;
    let top = [lo[0], lo[1], lo[2] + sz];
    out.push(Face {
        corner: top,
        a: [sx, 0.0, 0.0],
        b: [0.0, sy, 0.0],
        label,
    });
    for (corner, a) in [
        (lo, [sx, 0.0, 0.0]),
        ([lo[0], lo[1] + sy, lo[2]], [sx, 0.0, 0.0]),
        (lo, [0.0, sy, 0.0]),
        ([lo[0] + sx, lo[1], lo[2]], [0.0, sy, 0.0]),
    ] {
        out.push(Face {
            corner,
            a,
            b: [0.0, 0.0, sz],
            label,
        });
    }
}

fn scene_faces(spec: &SyntheticSceneSpec, rng: &mut ChaCha8Rng) -> Vec<Face> {
    let v = &spec.volume;
    let ext = [
        v.dims[0] as f64 * v.voxel_size,
        v.dims[1] as f64 * v.voxel_size,
        v.dims[2] as f64 * v.voxel_size,
    ];
    let ground_z = v.origin[2] + rng.gen_range(0.25..0.75) * v.voxel_size;
    let mut faces = vec![Face {
        corner: [v.origin[0], v.origin[1], ground_z],
        a: [ext[0], 0.0, 0.0],
        b: [0.0, ext[1], 0.0],
        label: 1,
    }];
    let c = spec.num_classes as u32;
    let wall_label = c.min(2);
    for _ in 1..spec.planes {
        let len = rng.gen_range(0.4..0.8) * ext[0].min(ext[1]);
        let h = rng.gen_range(0.5..0.9) * (ext[2] - (ground_z - v.origin[2]));
        let along_x: bool = rng.gen();
        let x0 = v.origin[0] + rng.gen_range(0.0..ext[0] - if along_x { len } else { 0.0 });
        let y0 = v.origin[1] + rng.gen_range(0.0..ext[1] - if along_x { 0.0 } else { len });
        faces.push(Face {
            corner: [x0, y0, ground_z],
            a: if along_x { [len, 0.0, 0.0] } else { [0.0, len, 0.0] },
            b: [0.0, 0.0, h],
            label: wall_label,
        });
    }
    for _ in 0..spec.boxes {
        let label = if c >= 3 { rng.gen_range(3..=c) } else { c };
        let family = (label + 1) % 2;
        let (fx, fy, h): (f64, f64, f64) = if family == 0 {
            (rng.gen_range(0.8..1.6), rng.gen_range(0.6..1.0), rng.gen_range(0.4..0.8))
        } else {
            (rng.gen_range(0.2..0.35), rng.gen_range(0.2..0.35), rng.gen_range(1.0..1.4))
        };
        let h = h.min(ext[2] - (ground_z - v.origin[2]) - 0.5 * v.voxel_size);
        let x0 = v.origin[0] + rng.gen_range(0.0..(ext[0] - fx).max(1e-9));
        let y0 = v.origin[1] + rng.gen_range(0.0..(ext[1] - fy).max(1e-9));
        box_faces([x0, y0, ground_z], [fx, fy, h], label, &mut faces);
    }
    faces
}

/// Generates one scene. The same spec always yields the same scene.
pub fn synth_generate(spec: &SyntheticSceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let faces = scene_faces(spec, &mut rng);
    let mut positions = Vec::new();
    let mut labels = Vec::new();
    for f in &faces {
        let expected = f.area() * spec.density;
        let n = expected.floor() as usize + usize::from(rng.gen::<f64>() < expected.fract());
        for _ in 0..n {
            let (u, w): (f64, f64) = (rng.gen(), rng.gen());
            positions.push([
                f.corner[0] + u * f.a[0] + w * f.b[0],
                f.corner[1] + u * f.a[1] + w * f.b[1],
                f.corner[2] + u * f.a[2] + w * f.b[2],
            ]);
            labels.push(f.label);
        }
    }
    let intensity = (0..positions.len()).map(|_| rng.gen::<f64>()).collect();
    let all = PointCloud::with_features(positions, intensity, 1)?.with_labels(labels)?;
    let dense = crop(&all, &spec.volume);
    let gt = majority_vote_labels(&dense, &spec.volume)?;

    let width = spec.occlusion_fraction * PI;
    let start = rng.gen_range(-PI / 2.0..=PI / 2.0 - width);
    let mut keep = Vec::new();
    for (i, p) in dense.positions.iter().enumerate() {
        let survive = rng.gen::<f64>() < spec.sweep_fraction;
        let az = (p[1] - spec.sensor[1]).atan2(p[0] - spec.sensor[0]);
        let hidden = width > 0.0 && az >= start && az < start + width;
        if survive && !hidden {
            keep.push(i);
        }
    }
    let sweep_labels = dense.labels.as_ref().expect("labeled");
    let sweep = PointCloud::with_features(
        keep.iter().map(|&i| dense.positions[i]).collect(),
        keep.iter().map(|&i| dense.feature(i)[0]).collect(),
        1,
    )?
    .with_labels(keep.iter().map(|&i| sweep_labels[i]).collect())?;
    Ok(SyntheticScene { dense, sweep, gt })
}
