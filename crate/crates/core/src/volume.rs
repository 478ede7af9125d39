//! Dense label grids and majority-vote labeling.

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, VolumeSpec};
use crate::sparse::assign_voxels;

/// Label of an empty (observed, unoccupied) cell.
pub const EMPTY: u8 = 0;
/// Label of a cell never observed in any frame.
pub const INVALID: u8 = 255;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledVolume {
    pub spec: VolumeSpec,
    /// One label per cell, x fastest.
    pub labels: Vec<u8>,
}

impl LabeledVolume {
    pub fn filled(spec: VolumeSpec, label: u8) -> Self {
        Self {
            labels: vec![label; spec.num_cells()],
            spec,
        }
    }

    pub fn new(spec: VolumeSpec, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != spec.num_cells() {
            return Err(Error::structure(format!(
                "volume {:?} needs {} labels, got {}",
                spec.dims,
                spec.num_cells(),
                labels.len()
            )));
        }
        Ok(Self { spec, labels })
    }

    #[inline]
    pub fn get(&self, c: [i64; 3]) -> u8 {
        self.labels[self.spec.linear(c)]
    }

    #[inline]
    pub fn set(&mut self, c: [i64; 3], label: u8) {
        let i = self.spec.linear(c);
        self.labels[i] = label;
    }

    /// Every cell must be empty, a class in `1..=num_classes`, or invalid.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        match self
            .labels
            .iter()
            .position(|&l| l != INVALID && l as usize > num_classes)
        {
            Some(i) => Err(Error::contract(format!(
                "cell {i} has label {} outside 0..={num_classes}",
                self.labels[i]
            ))),
            None => Ok(()),
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != EMPTY && l != INVALID).count()
    }
}

/// Picks the most frequent nonzero label; ties go to the smaller id. All-zero input gives 0.
pub fn vote(labels: impl IntoIterator<Item = u32>) -> u32 {
    let mut counts: Vec<(u32, usize)> = Vec::new();
    for l in labels {
        if l == 0 {
            continue;
        }
        match counts.iter_mut().find(|(k, _)| *k == l) {
            Some((_, n)) => *n += 1,
            None => counts.push((l, 1)),
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map_or(0, |(l, _)| l)
}

/// Labels each occupied cell with the majority label of its points; other cells are empty.
pub fn majority_vote_labels(cloud: &PointCloud, spec: &VolumeSpec) -> Result<LabeledVolume> {
    let labels = cloud
        .labels
        .as_ref()
        .ok_or_else(|| Error::contract("majority vote needs a labeled cloud"))?;
    if let Some(i) = labels.iter().position(|&l| l >= INVALID as u32) {
        return Err(Error::contract(format!("point {i} has label {} which does not fit a voxel", labels[i])));
    }
    let (set, map) = assign_voxels(cloud, spec)?;
    let mut vol = LabeledVolume::filled(*spec, EMPTY);
    for (v, pts) in map.voxel_to_points.iter().enumerate() {
        let l = vote(pts.iter().map(|&p| labels[p]));
        vol.set(set.coords()[v], l as u8);
    }
    Ok(vol)
}
