//! Training-time augmentation and test-time vote inference.

use rand::Rng;

use super::Js3cNet;
use crate::dense::softmax;
use crate::error::{Error, Result};
use crate::geometry::{Vec3, VolumeSpec};
use crate::tensor::Matrix;
use crate::volume::LabeledVolume;

/// Rotation about the vertical (z) axis followed by isotropic scaling, both about the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegAugment {
    pub angle: f64,
    pub scale: f64,
}

impl SegAugment {
    pub fn identity() -> Self {
        Self { angle: 0.0, scale: 1.0 }
    }

    /// Angle uniform in `[0, 2π)`, scale uniform in `[0.9, 1.1]`.
    pub fn sample(rng: &mut impl Rng) -> Self {
        Self {
            angle: rng.gen_range(0.0..std::f64::consts::TAU),
            scale: rng.gen_range(0.9..=1.1),
        }
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        let (s, c) = self.angle.sin_cos();
        [
            self.scale * (c * p[0] - s * p[1]),
            self.scale * (s * p[0] + c * p[1]),
            self.scale * p[2],
        ]
    }

    pub fn apply(&self, positions: &[Vec3]) -> Vec<Vec3> {
        positions.iter().map(|p| self.apply_point(p)).collect()
    }
}

/// Lossless grid symmetry: optional x/y flips followed by `rot90` quarter turns about z,
/// all about the volume's vertical center line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct GridTransform {
    pub flip_x: bool,
    pub flip_y: bool,
    pub rot90: u8,
}

impl GridTransform {
    pub fn sample(rng: &mut impl Rng, square: bool) -> Self {
        Self {
            flip_x: rng.gen(),
            flip_y: rng.gen(),
            rot90: if square { rng.gen_range(0..4) } else { 2 * rng.gen_range(0..2) },
        }
    }

    fn check(&self, spec: &VolumeSpec) -> Result<()> {
        if self.rot90 % 2 == 1 && spec.dims[0] != spec.dims[1] {
            return Err(Error::contract(format!(
                "a quarter turn needs a square footprint, got {}×{}",
                spec.dims[0], spec.dims[1]
            )));
        }
        Ok(())
    }

    fn map_cell(&self, c: [i64; 3], dims: [usize; 3]) -> [i64; 3] {
        let (dx, dy) = (dims[0] as i64, dims[1] as i64);
        let x = if self.flip_x { dx - 1 - c[0] } else { c[0] };
        let y = if self.flip_y { dy - 1 - c[1] } else { c[1] };
        let (x, y) = match self.rot90 % 4 {
            0 => (x, y),
            1 => (dx - 1 - y, x),
            2 => (dx - 1 - x, dy - 1 - y),
            _ => (y, dx - 1 - x),
        };
        [x, y, c[2]]
    }

    pub fn apply_point(&self, p: &Vec3, spec: &VolumeSpec) -> Vec3 {
        let ctr = spec.center();
        let mut u = [p[0] - ctr[0], p[1] - ctr[1]];
        if self.flip_x {
            u[0] = -u[0];
        }
        if self.flip_y {
            u[1] = -u[1];
        }
        for _ in 0..self.rot90 % 4 {
            u = [-u[1], u[0]];
        }
        [u[0] + ctr[0], u[1] + ctr[1], p[2]]
    }

    pub fn apply_points(&self, positions: &[Vec3], spec: &VolumeSpec) -> Result<Vec<Vec3>> {
        self.check(spec)?;
        Ok(positions.iter().map(|p| self.apply_point(p, spec)).collect())
    }

    pub fn apply_volume(&self, vol: &LabeledVolume) -> Result<LabeledVolume> {
        self.check(&vol.spec)?;
        let mut out = LabeledVolume::filled(vol.spec.clone(), 0);
        for (i, &l) in vol.labels.iter().enumerate() {
            let c = self.map_cell(vol.spec.unlinear(i), vol.spec.dims);
            out.labels[vol.spec.linear(c)] = l;
        }
        Ok(out)
    }
}

/// Mean softmax over `votes` randomly augmented copies of the sweep. Augmentations move
/// points but keep their order, so rows already correspond to the original points.
pub fn vote_inference(net: &Js3cNet, positions: &[Vec3], votes: usize, rng: &mut impl Rng) -> Result<Matrix> {
    if votes == 0 {
        return Err(Error::contract("vote inference needs at least one vote"));
    }
    let augs: Vec<SegAugment> = (0..votes).map(|_| SegAugment::sample(rng)).collect();
    vote_inference_with(net, positions, &augs)
}

pub fn vote_inference_with(net: &Js3cNet, positions: &[Vec3], augs: &[SegAugment]) -> Result<Matrix> {
    if augs.is_empty() {
        return Err(Error::contract("vote inference needs at least one vote"));
    }
    let mut acc = Matrix::zeros(positions.len(), net.config().num_classes);
    for a in augs {
        let logits = net.predict(&a.apply(positions))?;
        acc.add_assign(&softmax(&logits));
    }
    acc.scale(1.0 / augs.len() as f64);
    Ok(acc)
}
