//! Grid traversal, free-space carving and ground-truth volume generation.

use super::sequence::{aligned_frames, FrameSource};
use crate::error::Result;
use crate::geometry::{PointCloud, Vec3, VolumeSpec};
use crate::volume::{majority_vote_labels, LabeledVolume, EMPTY, INVALID};

/// Cells (unbounded integer coordinates) crossed by the segment `from → to`, in order,
/// starting at the cell of `from` and ending at the cell of `to`.
pub fn traverse(from: &Vec3, to: &Vec3, spec: &VolumeSpec) -> Vec<[i64; 3]> {
    let start = spec.cell_of(from);
    let end = spec.cell_of(to);
    let mut cell = start;
    let mut out = vec![cell];
    if start == end {
        return out;
    }
    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        let d = to[a] - from[a];
        if d > 0.0 {
            step[a] = 1;
            let boundary = spec.origin[a] + (cell[a] + 1) as f64 * spec.voxel_size;
            t_max[a] = (boundary - from[a]) / d;
            t_delta[a] = spec.voxel_size / d;
        } else if d < 0.0 {
            step[a] = -1;
            let boundary = spec.origin[a] + cell[a] as f64 * spec.voxel_size;
            t_max[a] = (boundary - from[a]) / d;
            t_delta[a] = -spec.voxel_size / d;
        }
    }
    let budget: i64 = (0..3).map(|a| (end[a] - start[a]).abs()).sum();
    for _ in 0..budget {
        let mut a = 0;
        for b in 1..3 {
            if t_max[b] < t_max[a] {
                a = b;
            }
        }
        if t_max[a] > 1.0 {
            break;
        }
        cell[a] += step[a];
        t_max[a] += t_delta[a];
        out.push(cell);
        if cell == end {
            return out;
        }
    }
    if *out.last().expect("non-empty") != end {
        out.push(end);
    }
    out
}

/// Per-cell observation state of one or more frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Visibility {
    pub spec: VolumeSpec,
    /// Cell crossed by a ray before its endpoint.
    pub empty: Vec<bool>,
    /// Cell holding a ray endpoint.
    pub occupied: Vec<bool>,
}

impl Visibility {
    pub fn new(spec: VolumeSpec) -> Self {
        let n = spec.num_cells();
        Self {
            spec,
            empty: vec![false; n],
            occupied: vec![false; n],
        }
    }

    pub fn observed(&self, cell: usize) -> bool {
        self.empty[cell] || self.occupied[cell]
    }

    pub fn merge(&mut self, other: &Visibility) {
        for (a, b) in self.empty.iter_mut().zip(&other.empty) {
            *a |= *b;
        }
        for (a, b) in self.occupied.iter_mut().zip(&other.occupied) {
            *a |= *b;
        }
    }
}

/// Marks the cells crossed by each ray `origin → point` as observed empty and each
/// endpoint cell as observed occupied. Cells outside `spec` are dropped.
pub fn raycast_visibility(frame: &PointCloud, origin: &Vec3, spec: &VolumeSpec) -> Visibility {
    let mut vis = Visibility::new(*spec);
    for p in &frame.positions {
        if !p.iter().all(|v| v.is_finite()) {
            continue;
        }
        let cells = traverse(origin, p, spec);
        let (last, before) = cells.split_last().expect("non-empty");
        for &c in before {
            if spec.contains_cell(c) {
                vis.empty[spec.linear(c)] = true;
            }
        }
        if spec.contains_cell(*last) {
            vis.occupied[spec.linear(*last)] = true;
        }
    }
    vis
}

/// Points of `cloud` inside `spec`, labels kept.
pub fn crop(cloud: &PointCloud, spec: &VolumeSpec) -> PointCloud {
    let keep: Vec<usize> = (0..cloud.len())
        .filter(|&i| cloud.positions[i].iter().all(|v| v.is_finite()) && spec.contains_point(&cloud.positions[i]))
        .collect();
    let positions = keep.iter().map(|&i| cloud.positions[i]).collect();
    let features = keep.iter().flat_map(|&i| cloud.feature(i).to_vec()).collect();
    let mut out = PointCloud::with_features(positions, features, cloud.feature_dim).expect("sizes agree");
    out.labels = cloud.labels.as_ref().map(|l| keep.iter().map(|&i| l[i]).collect());
    out
}

/// Combines a merged labeled cloud with its visibility: occupied cells take the majority
/// label (or [`INVALID`] when every member point is unlabeled), cells only ever crossed are
/// [`EMPTY`], unobserved cells are [`INVALID`].
pub fn label_volume(merged: &PointCloud, vis: &Visibility) -> Result<LabeledVolume> {
    let spec = vis.spec;
    let cropped = crop(merged, &spec);
    let votes = majority_vote_labels(&cropped, &spec)?;
    let mut occupied = vec![false; spec.num_cells()];
    for p in &cropped.positions {
        occupied[spec.linear(spec.cell_of(p))] = true;
    }
    let mut out = LabeledVolume::filled(spec, INVALID);
    for cell in 0..spec.num_cells() {
        out.labels[cell] = if occupied[cell] {
            match votes.labels[cell] {
                EMPTY => INVALID,
                l => l,
            }
        } else if vis.empty[cell] {
            EMPTY
        } else {
            INVALID
        };
    }
    Ok(out)
}

/// Ground truth for frame `center` from the window around it.
pub fn generate_gt<S: FrameSource + ?Sized>(src: &S, center: usize, window: usize, spec: &VolumeSpec) -> Result<LabeledVolume> {
    let frames = aligned_frames(src, center, window)?;
    let mut vis = Visibility::new(*spec);
    let mut merged: Option<PointCloud> = None;
    for f in &frames {
        vis.merge(&raycast_visibility(&f.cloud, &f.origin, spec));
        match merged.as_mut() {
            Some(m) => m.extend(&f.cloud)?,
            None => merged = Some(f.cloud.clone()),
        }
    }
    label_volume(&merged.expect("window is non-empty"), &vis)
}
