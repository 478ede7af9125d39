//! Hash-indexed sparse voxel tensors and the point ↔ voxel mapping.

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, VolumeSpec};
use crate::tensor::Matrix;

pub type Coord = [i64; 3];

const EMPTY: u32 = u32::MAX;

/// Open-addressed coordinate → row table with linear probing.
#[derive(Clone, Debug)]
pub struct CoordIndex {
    slots: Vec<u32>,
    mask: usize,
}

#[inline]
fn hash_coord(c: &Coord) -> u64 {
    // splitmix64 finalizer over a mixed key
    let mut h = (c[0] as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (c[1] as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F).rotate_left(21)
        ^ (c[2] as u64).wrapping_mul(0x1656_67B1_9E37_79F9).rotate_left(42);
    h ^= h >> 30;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^ (h >> 31)
}

impl CoordIndex {
    fn with_capacity(n: usize) -> Self {
        let cap = (n.max(4) * 2).next_power_of_two();
        Self {
            slots: vec![EMPTY; cap],
            mask: cap - 1,
        }
    }

    /// Looks up `c` among `coords`; returns the stored row.
    #[inline]
    fn find(&self, coords: &[Coord], c: &Coord) -> Option<usize> {
        let mut slot = hash_coord(c) as usize & self.mask;
        loop {
            let row = self.slots[slot];
            if row == EMPTY {
                return None;
            }
            if coords[row as usize] == *c {
                return Some(row as usize);
            }
            slot = (slot + 1) & self.mask;
        }
    }

    /// Inserts row `row` for `coords[row]`, or returns the existing row for that coordinate.
    fn insert(&mut self, coords: &[Coord], row: usize) -> Result<(), usize> {
        let c = &coords[row];
        let mut slot = hash_coord(c) as usize & self.mask;
        loop {
            let r = self.slots[slot];
            if r == EMPTY {
                self.slots[slot] = row as u32;
                return Ok(());
            }
            if coords[r as usize] == *c {
                return Err(r as usize);
            }
            slot = (slot + 1) & self.mask;
        }
    }
}

/// Active voxel coordinates with an `M × F` feature matrix.
#[derive(Clone, Debug)]
pub struct SparseTensor {
    coords: Vec<Coord>,
    index: CoordIndex,
    pub features: Matrix,
}

impl SparseTensor {
    /// Builds a tensor; duplicate coordinates are rejected.
    pub fn new(coords: Vec<Coord>, features: Matrix) -> Result<Self> {
        if features.rows() != coords.len() {
            return Err(Error::structure(format!(
                "{} coordinates but {} feature rows",
                coords.len(),
                features.rows()
            )));
        }
        let index = build_index(&coords)?;
        Ok(Self {
            coords,
            index,
            features,
        })
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.features.cols()
    }

    pub fn lookup(&self, c: &Coord) -> Option<usize> {
        self.index.find(&self.coords, c)
    }

    pub fn with_features(&self, features: Matrix) -> Result<Self> {
        if features.rows() != self.len() {
            return Err(Error::structure("feature rows do not match the coordinate set"));
        }
        Ok(Self {
            coords: self.coords.clone(),
            index: self.index.clone(),
            features,
        })
    }
}

/// A standalone coordinate set with lookup, used where features live elsewhere (on a tape).
#[derive(Clone, Debug)]
pub struct CoordSet {
    coords: Vec<Coord>,
    index: CoordIndex,
}

impl CoordSet {
    pub fn new(coords: Vec<Coord>) -> Result<Self> {
        let index = build_index(&coords)?;
        Ok(Self { coords, index })
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn lookup(&self, c: &Coord) -> Option<usize> {
        self.index.find(&self.coords, c)
    }
}

fn build_index(coords: &[Coord]) -> Result<CoordIndex> {
    let mut index = CoordIndex::with_capacity(coords.len());
    for row in 0..coords.len() {
        if let Err(prev) = index.insert(coords, row) {
            return Err(Error::contract(format!(
                "duplicate coordinate {:?} at rows {prev} and {row}",
                coords[row]
            )));
        }
    }
    Ok(index)
}

/// Bidirectional point ↔ voxel assignment produced by voxelization.
#[derive(Clone, Debug, PartialEq)]
pub struct PointVoxelMap {
    pub point_to_voxel: Vec<usize>,
    pub voxel_to_points: Vec<Vec<usize>>,
}

impl PointVoxelMap {
    pub fn num_points(&self) -> usize {
        self.point_to_voxel.len()
    }

    pub fn num_voxels(&self) -> usize {
        self.voxel_to_points.len()
    }

    /// Checks that both directions describe the same assignment.
    pub fn is_consistent(&self) -> bool {
        let mut seen = vec![false; self.point_to_voxel.len()];
        for (v, pts) in self.voxel_to_points.iter().enumerate() {
            for &p in pts {
                if p >= seen.len() || seen[p] || self.point_to_voxel[p] != v {
                    return false;
                }
                seen[p] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Assigns points to voxel coordinates, creating voxels in order of first appearance.
pub(crate) fn assign_voxels(cloud: &PointCloud, spec: &VolumeSpec) -> Result<(CoordSet, PointVoxelMap)> {
    let mut coords: Vec<Coord> = Vec::new();
    let mut index = CoordIndex::with_capacity(cloud.len());
    let mut point_to_voxel = Vec::with_capacity(cloud.len());
    let mut voxel_to_points: Vec<Vec<usize>> = Vec::new();
    for (i, p) in cloud.positions.iter().enumerate() {
        let c = spec.cell_of(p);
        if !spec.contains_cell(c) || !p.iter().all(|v| v.is_finite()) {
            return Err(Error::OutOfBounds {
                index: i,
                x: p[0],
                y: p[1],
                z: p[2],
            });
        }
        let row = match index.find(&coords, &c) {
            Some(r) => r,
            None => {
                coords.push(c);
                let r = coords.len() - 1;
                let _ = index.insert(&coords, r);
                voxel_to_points.push(Vec::new());
                r
            }
        };
        point_to_voxel.push(row);
        voxel_to_points[row].push(i);
    }
    Ok((
        CoordSet { coords, index },
        PointVoxelMap {
            point_to_voxel,
            voxel_to_points,
        },
    ))
}

/// Voxelizes a cloud: one row per occupied cell holding the mean of its points' features.
pub fn voxelize_points(cloud: &PointCloud, spec: &VolumeSpec) -> Result<(SparseTensor, PointVoxelMap)> {
    let (set, map) = assign_voxels(cloud, spec)?;
    let d = cloud.feature_dim;
    let mut features = Matrix::zeros(set.len(), d);
    for (v, pts) in map.voxel_to_points.iter().enumerate() {
        let row = features.row_mut(v);
        for &p in pts {
            for (acc, f) in row.iter_mut().zip(cloud.feature(p)) {
                *acc += f;
            }
        }
        let inv = 1.0 / pts.len() as f64;
        row.iter_mut().for_each(|x| *x *= inv);
    }
    Ok((
        SparseTensor {
            coords: set.coords,
            index: set.index,
            features,
        },
        map,
    ))
}

/// Nearest-neighbor devoxelization: each point takes its voxel's feature row.
pub fn devoxelize(sparse: &SparseTensor, map: &PointVoxelMap) -> Result<Matrix> {
    if map.num_voxels() != sparse.len() {
        return Err(Error::structure(format!(
            "map covers {} voxels but tensor has {}",
            map.num_voxels(),
            sparse.len()
        )));
    }
    let f = sparse.channels();
    let mut out = Matrix::zeros(map.num_points(), f);
    for (p, &v) in map.point_to_voxel.iter().enumerate() {
        if v >= sparse.len() {
            return Err(Error::structure(format!("point {p} maps to missing voxel {v}")));
        }
        out.row_mut(p).copy_from_slice(sparse.features.row(v));
    }
    Ok(out)
}
