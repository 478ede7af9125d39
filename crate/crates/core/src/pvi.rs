//! Point-voxel interaction: graph refinement of the coarse completion using the raw sweep.
//!
//! Centers of voxels predicted non-empty query their k nearest raw points. Each
//! (center, neighbor) edge is described by the center's position and logits
//! concatenated with their difference to the neighbor's position and projected
//! shape embedding; a shared perceptron embeds each edge, edges are max-reduced
//! per center and a linear head produces a residual added to the center's logits.

use std::rc::Rc;

use rand::Rng;

use crate::autodiff::{ParamGroup, ParamId, ParamStore, Tape, Var};
use crate::dense::DenseVolume;
use crate::error::{Error, Result};
use crate::geometry::{Vec3, VolumeSpec};
use crate::tensor::Matrix;

pub const LEAKY_SLOPE: f64 = 0.01;

/// Geometric centers and logits of the voxels predicted non-empty.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelCenters {
    pub positions: Vec<Vec3>,
    /// Linear cell index of each center in its volume.
    pub cells: Vec<usize>,
    /// `N' × (C+1)` coarse logits at the centers.
    pub features: Matrix,
}

impl VoxelCenters {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Centers of cells whose argmax logit is not the empty class (channel 0).
pub fn centers_from_logits(logits: &Matrix, spec: &VolumeSpec) -> Result<VoxelCenters> {
    if logits.rows() != spec.num_cells() || logits.cols() < 2 {
        return Err(Error::structure(format!(
            "logits {:?} do not match volume {:?} with ≥2 channels",
            logits.shape(),
            spec.dims
        )));
    }
    let mut positions = Vec::new();
    let mut cells = Vec::new();
    for cell in 0..logits.rows() {
        if logits.argmax_row(cell) != 0 {
            positions.push(spec.cell_center(spec.unlinear(cell)));
            cells.push(cell);
        }
    }
    let mut features = Matrix::zeros(cells.len(), logits.cols());
    for (r, &c) in cells.iter().enumerate() {
        features.row_mut(r).copy_from_slice(logits.row(c));
    }
    Ok(VoxelCenters {
        positions,
        cells,
        features,
    })
}

pub fn extract_voxel_centers(coarse: &DenseVolume) -> Result<VoxelCenters> {
    centers_from_logits(&coarse.data, &coarse.spec)
}

/// k nearest raw points per center, nearest first.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborGraph {
    pub k: usize,
    /// Row-major `N' × k`.
    pub neighbor_ids: Vec<usize>,
    pub distances: Vec<f64>,
}

impl NeighborGraph {
    pub fn num_centers(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.neighbor_ids.len() / self.k
        }
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbor_ids[i * self.k..(i + 1) * self.k]
    }
}

#[inline]
fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Keeps the `k` smallest `(d², index)` pairs in ascending order.
struct BestK {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl BestK {
    fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn worse(a: (f64, usize), b: (f64, usize)) -> bool {
        a.0 > b.0 || (a.0 == b.0 && a.1 > b.1)
    }

    #[inline]
    fn offer(&mut self, cand: (f64, usize)) {
        if self.items.len() == self.k {
            if !Self::worse(*self.items.last().unwrap(), cand) {
                return;
            }
            self.items.pop();
        }
        let pos = self.items.partition_point(|&it| !Self::worse(it, cand));
        self.items.insert(pos, cand);
    }

    fn full(&self) -> bool {
        self.items.len() == self.k
    }

    fn worst_d2(&self) -> f64 {
        self.items.last().map_or(f64::INFINITY, |it| it.0)
    }
}

/// Exhaustive O(N'·N) scan; ties broken by smaller point index.
pub fn knn_brute_force(centers: &[Vec3], points: &[Vec3], k: usize) -> Result<NeighborGraph> {
    check_knn(points, k)?;
    let mut ids = Vec::with_capacity(centers.len() * k);
    let mut dists = Vec::with_capacity(centers.len() * k);
    for c in centers {
        let mut best = BestK::new(k);
        for (j, p) in points.iter().enumerate() {
            best.offer((dist2(c, p), j));
        }
        for (d2, j) in best.items {
            ids.push(j);
            dists.push(d2.sqrt());
        }
    }
    Ok(NeighborGraph {
        k,
        neighbor_ids: ids,
        distances: dists,
    })
}

fn check_knn(points: &[Vec3], k: usize) -> Result<()> {
    if points.is_empty() {
        return Err(Error::contract("kNN needs a non-empty cloud"));
    }
    if k == 0 || k > points.len() {
        return Err(Error::contract(format!("k = {k} must be in 1..={}", points.len())));
    }
    Ok(())
}

/// Uniform bucket grid over a point set for exact nearest-neighbor queries.
pub struct GridIndex<'a> {
    points: &'a [Vec3],
    lo: Vec3,
    cell: f64,
    dims: [i64; 3],
    starts: Vec<usize>,
    order: Vec<usize>,
}

impl<'a> GridIndex<'a> {
    pub fn new(points: &'a [Vec3]) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if points.is_empty() {
            lo = [0.0; 3];
            hi = [0.0; 3];
        }
        let ext: Vec<f64> = (0..3).map(|a| (hi[a] - lo[a]).max(1e-9)).collect();
        // about two points per bucket
        let vol = ext[0] * ext[1] * ext[2];
        let cell = (2.0 * vol / points.len().max(1) as f64).cbrt().max(ext.iter().cloned().fold(0.0, f64::max) / 256.0);
        let dims = [
            (ext[0] / cell).floor() as i64 + 1,
            (ext[1] / cell).floor() as i64 + 1,
            (ext[2] / cell).floor() as i64 + 1,
        ];
        let ncell = (dims[0] * dims[1] * dims[2]) as usize;
        let bucket = |p: &Vec3| -> usize {
            let c = [
                (((p[0] - lo[0]) / cell).floor() as i64).clamp(0, dims[0] - 1),
                (((p[1] - lo[1]) / cell).floor() as i64).clamp(0, dims[1] - 1),
                (((p[2] - lo[2]) / cell).floor() as i64).clamp(0, dims[2] - 1),
            ];
            (c[0] + dims[0] * (c[1] + dims[1] * c[2])) as usize
        };
        let mut counts = vec![0usize; ncell + 1];
        for p in points {
            counts[bucket(p) + 1] += 1;
        }
        for i in 0..ncell {
            counts[i + 1] += counts[i];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut order = vec![0usize; points.len()];
        for (j, p) in points.iter().enumerate() {
            let b = bucket(p);
            order[fill[b]] = j;
            fill[b] += 1;
        }
        Self {
            points,
            lo,
            cell,
            dims,
            starts,
            order,
        }
    }

    fn bucket_points(&self, c: [i64; 3]) -> &[usize] {
        let b = (c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])) as usize;
        &self.order[self.starts[b]..self.starts[b + 1]]
    }

    /// Exact `k` nearest points to `q`, ascending by `(distance, index)`.
    pub fn query(&self, q: &Vec3, k: usize) -> Vec<(f64, usize)> {
        let qc = [
            ((q[0] - self.lo[0]) / self.cell).floor() as i64,
            ((q[1] - self.lo[1]) / self.cell).floor() as i64,
            ((q[2] - self.lo[2]) / self.cell).floor() as i64,
        ];
        let mut best = BestK::new(k);
        let max_ring = (0..3)
            .map(|a| (qc[a]).abs().max((self.dims[a] - 1 - qc[a]).abs()))
            .max()
            .unwrap();
        for r in 0..=max_ring {
            for z in qc[2] - r..=qc[2] + r {
                if z < 0 || z >= self.dims[2] {
                    continue;
                }
                for y in qc[1] - r..=qc[1] + r {
                    if y < 0 || y >= self.dims[1] {
                        continue;
                    }
                    let on_shell_yz = (z - qc[2]).abs() == r || (y - qc[1]).abs() == r;
                    let xs: Vec<i64> = if on_shell_yz {
                        (qc[0] - r..=qc[0] + r).collect()
                    } else if r == 0 {
                        vec![qc[0]]
                    } else {
                        vec![qc[0] - r, qc[0] + r]
                    };
                    for x in xs {
                        if x < 0 || x >= self.dims[0] {
                            continue;
                        }
                        for &j in self.bucket_points([x, y, z]) {
                            best.offer((dist2(q, &self.points[j]), j));
                        }
                    }
                }
            }
            if best.full() {
                // distance from q to the outside of the searched block of buckets
                let mut margin = f64::INFINITY;
                for a in 0..3 {
                    let lo_edge = self.lo[a] + (qc[a] - r) as f64 * self.cell;
                    let hi_edge = self.lo[a] + (qc[a] + r + 1) as f64 * self.cell;
                    margin = margin.min(q[a] - lo_edge).min(hi_edge - q[a]);
                }
                // guard against rounding in the bucket assignment
                let margin = (margin - 1e-9 * self.cell).max(0.0);
                if margin * margin > best.worst_d2() {
                    break;
                }
            }
        }
        best.items
    }
}

/// Exact kNN through a bucket grid; identical to [`knn_brute_force`], ids and distances.
pub fn knn_query(centers: &[Vec3], points: &[Vec3], k: usize) -> Result<NeighborGraph> {
    check_knn(points, k)?;
    let grid = GridIndex::new(points);
    let mut ids = Vec::with_capacity(centers.len() * k);
    let mut dists = Vec::with_capacity(centers.len() * k);
    for c in centers {
        for (d2, j) in grid.query(c, k) {
            ids.push(j);
            dists.push(d2.sqrt());
        }
    }
    Ok(NeighborGraph {
        k,
        neighbor_ids: ids,
        distances: dists,
    })
}

/// The perceptron input for one edge: `[p_i, f_i, p_i − p_j, f_i − f_j]`.
pub fn edge_input(center_pos: &Vec3, center_feat: &[f64], point_pos: &Vec3, point_feat: &[f64]) -> Result<Vec<f64>> {
    if center_feat.len() != point_feat.len() {
        return Err(Error::contract(format!(
            "center features have width {}, point features {}",
            center_feat.len(),
            point_feat.len()
        )));
    }
    let mut out = Vec::with_capacity(2 * (3 + center_feat.len()));
    out.extend_from_slice(center_pos);
    out.extend_from_slice(center_feat);
    out.extend((0..3).map(|a| center_pos[a] - point_pos[a]));
    out.extend(center_feat.iter().zip(point_feat).map(|(a, b)| a - b));
    Ok(out)
}

/// Parameters of one graph layer: a three-layer edge perceptron and the residual head.
#[derive(Clone, Debug)]
pub struct GcnLayer {
    pub phi: [(ParamId, ParamId); 3],
    pub head: (ParamId, ParamId),
}

/// All interaction-module parameters.
#[derive(Clone, Debug)]
pub struct PviParams {
    /// Projection of the shape embedding to the logit width.
    pub proj: (ParamId, ParamId),
    pub layers: Vec<GcnLayer>,
    pub k: usize,
}

pub(crate) fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Matrix {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-a..a)).collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("sized")
}

impl PviParams {
    /// Registers the module's parameters. The residual heads start at zero so the
    /// refinement is initially the identity.
    pub fn register(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        embed_dim: usize,
        logit_dim: usize,
        hidden: usize,
        layers: usize,
        k: usize,
    ) -> Result<Self> {
        if layers == 0 {
            return Err(Error::contract("the interaction module needs at least one graph layer"));
        }
        let g = ParamGroup::Aux;
        let proj = (
            store.add("pvi.proj.w", glorot(rng, embed_dim, logit_dim), g, 1.0)?,
            store.add("pvi.proj.b", Matrix::zeros(1, logit_dim), g, 1.0)?,
        );
        let edge_dim = 2 * (3 + logit_dim);
        let mut out = Vec::with_capacity(layers);
        for l in 0..layers {
            let dims = [(edge_dim, hidden), (hidden, hidden), (hidden, hidden)];
            let mut phi = Vec::with_capacity(3);
            for (m, (i, o)) in dims.into_iter().enumerate() {
                phi.push((
                    store.add(format!("pvi.{l}.phi{m}.w"), glorot(rng, i, o), g, 1.0)?,
                    store.add(format!("pvi.{l}.phi{m}.b"), Matrix::zeros(1, o), g, 1.0)?,
                ));
            }
            let head = (
                store.add(format!("pvi.{l}.head.w"), Matrix::zeros(hidden, logit_dim), g, 1.0)?,
                store.add(format!("pvi.{l}.head.b"), Matrix::zeros(1, logit_dim), g, 1.0)?,
            );
            out.push(GcnLayer {
                phi: [phi[0], phi[1], phi[2]],
                head,
            });
        }
        Ok(Self { proj, layers: out, k })
    }
}

/// Inputs to [`gcn_refine`] that live off the tape.
pub struct RefineInputs<'a> {
    pub centers: &'a VoxelCenters,
    pub points: &'a [Vec3],
    pub graph: &'a NeighborGraph,
}

/// Residually refines `coarse` (`cells × (C+1)` logits) at the given centers.
/// Cells without a center pass through unchanged.
pub fn gcn_refine(
    tape: &mut Tape,
    store: &ParamStore,
    params: &PviParams,
    coarse: Var,
    shape_embedding: Var,
    inputs: &RefineInputs<'_>,
) -> Result<Var> {
    let RefineInputs { centers, points, graph } = *inputs;
    if centers.is_empty() {
        return Ok(coarse);
    }
    let k = graph.k;
    if graph.num_centers() != centers.len() {
        return Err(Error::structure("neighbor graph does not match the center set"));
    }
    if tape.value(shape_embedding).rows() != points.len() {
        return Err(Error::structure("shape embedding rows do not match the point count"));
    }
    let param = |tape: &mut Tape, id: ParamId| tape.param(store, id);

    let (pw, pb) = (param(tape, params.proj.0), param(tape, params.proj.1));
    let point_feat = tape.linear(shape_embedding, pw, pb)?;
    let point_pos = tape.constant(Matrix::from_rows(&points.iter().map(|p| p.to_vec()).collect::<Vec<_>>())?);
    let point_side = tape.concat(&[point_pos, point_feat])?;
    let center_pos = tape.constant(Matrix::from_rows(
        &centers.positions.iter().map(|p| p.to_vec()).collect::<Vec<_>>(),
    )?);
    let cells = Rc::new(centers.cells.clone());
    let repeat: Rc<Vec<usize>> = Rc::new((0..centers.len()).flat_map(|i| std::iter::repeat(i).take(k)).collect());
    let nbr = Rc::new(graph.neighbor_ids.clone());

    let mut current = coarse;
    for layer in &params.layers {
        let center_feat = tape.gather_rows(current, cells.clone())?;
        let center_side = tape.concat(&[center_pos, center_feat])?;
        let a = tape.gather_rows(center_side, repeat.clone())?;
        let b = tape.gather_rows(point_side, nbr.clone())?;
        let diff = tape.sub(a, b)?;
        let mut h = tape.concat(&[a, diff])?;
        for &(w, bias) in &layer.phi {
            let (w, bias) = (param(tape, w), param(tape, bias));
            let z = tape.linear(h, w, bias)?;
            h = tape.leaky_relu(z, LEAKY_SLOPE);
        }
        let pooled = tape.group_max(h, k)?;
        let (hw, hb) = (param(tape, layer.head.0), param(tape, layer.head.1));
        let delta = tape.linear(pooled, hw, hb)?;
        current = tape.scatter_add_rows(current, delta, cells.clone())?;
    }
    Ok(current)
}
