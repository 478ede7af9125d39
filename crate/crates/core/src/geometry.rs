//! Point clouds, rigid poses and axis-aligned voxel volumes.

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// N points with per-point features and optional class labels.
///
/// Label 0 means unlabeled; it is ignored by voting and losses.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    /// Row-major `N × feature_dim`.
    pub features: Vec<f64>,
    pub feature_dim: usize,
    pub labels: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vec3>) -> Self {
        Self {
            positions,
            features: Vec::new(),
            feature_dim: 0,
            labels: None,
        }
    }

    pub fn with_features(positions: Vec<Vec3>, features: Vec<f64>, feature_dim: usize) -> Result<Self> {
        if features.len() != positions.len() * feature_dim {
            return Err(Error::contract(format!(
                "{} points with feature width {feature_dim} need {} values, got {}",
                positions.len(),
                positions.len() * feature_dim,
                features.len()
            )));
        }
        Ok(Self {
            positions,
            features,
            feature_dim,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.positions.len() {
            return Err(Error::contract(format!(
                "{} labels for {} points",
                labels.len(),
                self.positions.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    /// Checks the container invariants: finite positions and labels no larger than `max_label`.
    pub fn validate(&self, max_label: u32) -> Result<()> {
        if let Some(i) = self.positions.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::contract(format!("point {i} has a non-finite coordinate")));
        }
        if self.features.len() != self.positions.len() * self.feature_dim {
            return Err(Error::contract("feature buffer length does not match N × D"));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.positions.len() {
                return Err(Error::contract("label count does not match point count"));
            }
            if let Some(i) = labels.iter().position(|&l| l > max_label) {
                return Err(Error::contract(format!(
                    "point {i} has label {} above {max_label}",
                    labels[i]
                )));
            }
        }
        Ok(())
    }

    /// Appends another cloud with the same feature width and label presence.
    pub fn extend(&mut self, other: &PointCloud) -> Result<()> {
        if other.feature_dim != self.feature_dim && !other.is_empty() && !self.is_empty() {
            return Err(Error::structure("feature widths differ"));
        }
        if self.is_empty() && self.labels.is_none() {
            self.feature_dim = other.feature_dim;
            self.labels = other.labels.as_ref().map(|_| Vec::new());
        }
        match (&mut self.labels, &other.labels) {
            (Some(a), Some(b)) => a.extend_from_slice(b),
            (None, None) => {}
            _ => return Err(Error::structure("cannot merge labeled and unlabeled clouds")),
        }
        self.positions.extend_from_slice(&other.positions);
        self.features.extend_from_slice(&other.features);
        Ok(())
    }
}

/// Rigid transform `p ↦ R·p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: [[f64; 3]; 3],
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Builds a pose, rejecting rotations that are not orthonormal with determinant 1
    /// within `tol`.
    pub fn new(rotation: [[f64; 3]; 3], translation: Vec3, tol: f64) -> Result<Self> {
        let pose = Self { rotation, translation };
        let det = pose.determinant();
        if (det - 1.0).abs() > tol {
            return Err(Error::contract(format!("rotation determinant {det} is not 1")));
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| rotation[k][i] * rotation[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > tol {
                    return Err(Error::contract("rotation is not orthonormal"));
                }
            }
        }
        Ok(pose)
    }

    pub fn translation(t: Vec3) -> Self {
        Self {
            translation: t,
            ..Self::identity()
        }
    }

    /// Rotation by `angle` radians about the z axis.
    pub fn rotation_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rotation: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn determinant(&self) -> f64 {
        let r = &self.rotation;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2],
        ]
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let a = &self.rotation;
        let b = &other.rotation;
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        Pose {
            rotation,
            translation: self.apply(&other.translation),
        }
    }

    pub fn inverse(&self) -> Pose {
        let r = &self.rotation;
        let mut rt = [[0.0; 3]; 3];
        for (i, row) in rt.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = r[j][i];
            }
        }
        let t = &self.translation;
        let ti = [
            -(rt[0][0] * t[0] + rt[0][1] * t[1] + rt[0][2] * t[2]),
            -(rt[1][0] * t[0] + rt[1][1] * t[1] + rt[1][2] * t[2]),
            -(rt[2][0] * t[0] + rt[2][1] * t[1] + rt[2][2] * t[2]),
        ];
        Pose {
            rotation: rt,
            translation: ti,
        }
    }
}

/// Applies `pose` to every position; features and labels are carried unchanged.
pub fn transform_cloud(cloud: &PointCloud, pose: &Pose) -> PointCloud {
    PointCloud {
        positions: cloud.positions.iter().map(|p| pose.apply(p)).collect(),
        ..cloud.clone()
    }
}

/// Axis-aligned voxel grid: `dims` cubic cells of edge `voxel_size` starting at `origin`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VolumeSpec {
    pub origin: Vec3,
    pub voxel_size: f64,
    pub dims: [usize; 3],
}

impl VolumeSpec {
    pub fn new(origin: Vec3, voxel_size: f64, dims: [usize; 3]) -> Result<Self> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::contract(format!("voxel size {voxel_size} must be positive")));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::contract(format!("volume dims {dims:?} must be positive")));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::contract("volume origin must be finite"));
        }
        Ok(Self {
            origin,
            voxel_size,
            dims,
        })
    }

    /// The benchmark completion volume: 51.2 m ahead, 25.6 m to each side and
    /// 6.4 m of height at 0.2 m, i.e. 256×256×32 cells.
    pub fn paper_ssc() -> Self {
        Self::from_extent([0.0, -25.6, -2.0], [51.2, 25.6, 4.4], 0.2).expect("static extent")
    }

    /// Builds a spec covering `[min, max)` with the given voxel size.
    pub fn from_extent(min: Vec3, max: Vec3, voxel_size: f64) -> Result<Self> {
        let mut dims = [0usize; 3];
        for a in 0..3 {
            let n = ((max[a] - min[a]) / voxel_size).round();
            if !(n >= 1.0) {
                return Err(Error::contract(format!("extent along axis {a} is empty")));
            }
            dims[a] = n as usize;
        }
        Self::new(min, voxel_size, dims)
    }

    #[inline]
    pub fn num_cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Linear cell index, x fastest.
    #[inline]
    pub fn linear(&self, c: [i64; 3]) -> usize {
        c[0] as usize + self.dims[0] * (c[1] as usize + self.dims[1] * c[2] as usize)
    }

    #[inline]
    pub fn unlinear(&self, idx: usize) -> [i64; 3] {
        let x = idx % self.dims[0];
        let y = (idx / self.dims[0]) % self.dims[1];
        let z = idx / (self.dims[0] * self.dims[1]);
        [x as i64, y as i64, z as i64]
    }

    /// Unbounded integer cell containing `p`.
    #[inline]
    pub fn cell_of(&self, p: &Vec3) -> [i64; 3] {
        [
            ((p[0] - self.origin[0]) / self.voxel_size).floor() as i64,
            ((p[1] - self.origin[1]) / self.voxel_size).floor() as i64,
            ((p[2] - self.origin[2]) / self.voxel_size).floor() as i64,
        ]
    }

    #[inline]
    pub fn contains_cell(&self, c: [i64; 3]) -> bool {
        (0..3).all(|a| c[a] >= 0 && (c[a] as usize) < self.dims[a])
    }

    pub fn contains_point(&self, p: &Vec3) -> bool {
        self.contains_cell(self.cell_of(p))
    }

    pub fn cell_center(&self, c: [i64; 3]) -> Vec3 {
        [
            self.origin[0] + (c[0] as f64 + 0.5) * self.voxel_size,
            self.origin[1] + (c[1] as f64 + 0.5) * self.voxel_size,
            self.origin[2] + (c[2] as f64 + 0.5) * self.voxel_size,
        ]
    }

    pub fn center(&self) -> Vec3 {
        [
            self.origin[0] + 0.5 * self.dims[0] as f64 * self.voxel_size,
            self.origin[1] + 0.5 * self.dims[1] as f64 * self.voxel_size,
            self.origin[2] + 0.5 * self.dims[2] as f64 * self.voxel_size,
        ]
    }

    /// Same dims, with origin and voxel size equal within `tol` meters.
    pub fn approx_eq(&self, other: &VolumeSpec, tol: f64) -> bool {
        self.dims == other.dims
            && (self.voxel_size - other.voxel_size).abs() <= tol
            && (0..3).all(|a| (self.origin[a] - other.origin[a]).abs() <= tol)
    }

    /// Grid-aligned spec (origin on a multiple of `voxel_size`) enclosing every point,
    /// padded by one cell per side so rounding in [`VolumeSpec::cell_of`] stays in bounds.
    pub fn enclosing(points: &[Vec3], voxel_size: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::contract("cannot build a volume around zero points"));
        }
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for p in points {
            for a in 0..3 {
                let c = (p[a] / voxel_size).floor() as i64;
                lo[a] = lo[a].min(c - 1);
                hi[a] = hi[a].max(c + 1);
            }
        }
        let origin = [lo[0] as f64 * voxel_size, lo[1] as f64 * voxel_size, lo[2] as f64 * voxel_size];
        let dims = [
            (hi[0] - lo[0] + 1) as usize,
            (hi[1] - lo[1] + 1) as usize,
            (hi[2] - lo[2] + 1) as usize,
        ];
        Self::new(origin, voxel_size, dims)
    }
}
