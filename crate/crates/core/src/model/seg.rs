//! Sparse U-Net backbone and the shape-embedding / logit heads.

use std::rc::Rc;

use rand::Rng;

use super::config::ModelConfig;
use crate::autodiff::{ParamGroup, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::geometry::{Vec3, VolumeSpec};
use crate::pvi::glorot;
use crate::sparse::{assign_voxels, CoordSet};
use crate::sparse_conv::{build_rulebook, pool_coords, PoolMap, Rulebook};
use crate::tensor::Matrix;
use crate::PointCloud;

/// Width of the per-point input features: a constant and the height.
pub const INPUT_DIM: usize = 2;

/// Per-point network input `[1, z]`; only coordinates enter the network.
pub fn input_features(positions: &[Vec3]) -> Matrix {
    let mut m = Matrix::zeros(positions.len(), INPUT_DIM);
    for (i, p) in positions.iter().enumerate() {
        m.set(i, 0, 1.0);
        m.set(i, 1, p[2]);
    }
    m
}

/// Two submanifold convolutions, each followed by a per-channel affine and leaky ReLU.
#[derive(Clone, Debug)]
pub(crate) struct ConvBlock {
    convs: [(ParamId, ParamId, ParamId, ParamId); 2],
}

impl ConvBlock {
    fn register(store: &mut ParamStore, rng: &mut impl Rng, name: &str, fin: usize, fout: usize) -> Result<Self> {
        let mut convs = Vec::with_capacity(2);
        for (i, cin) in [fin, fout].into_iter().enumerate() {
            let g = ParamGroup::Seg;
            let w = glorot(rng, 27 * cin, fout);
            convs.push((
                store.add(format!("{name}.conv{i}.w"), w, g, 1.0)?,
                store.add(format!("{name}.conv{i}.b"), Matrix::zeros(1, fout), g, 1.0)?,
                store.add(format!("{name}.conv{i}.gamma"), Matrix::filled(1, fout, 1.0), g, 1.0)?,
                store.add(format!("{name}.conv{i}.beta"), Matrix::zeros(1, fout), g, 1.0)?,
            ));
        }
        Ok(Self {
            convs: [convs[0], convs[1]],
        })
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, rb: &Rc<Rulebook>, slope: f64) -> Result<Var> {
        let mut h = x;
        for &(w, b, gamma, beta) in &self.convs {
            let (w, b) = (tape.param(store, w), tape.param(store, b));
            let z = tape.sparse_conv(h, w, b, rb.clone())?;
            let (gamma, beta) = (tape.param(store, gamma), tape.param(store, beta));
            let a = tape.affine(z, gamma, beta)?;
            h = tape.leaky_relu(a, slope);
        }
        Ok(h)
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    pub(crate) fn register(store: &mut ParamStore, rng: &mut impl Rng, name: &str, fin: usize, fout: usize, group: ParamGroup) -> Result<Self> {
        Ok(Self {
            w: store.add(format!("{name}.w"), glorot(rng, fin, fout), group, 1.0)?,
            b: store.add(format!("{name}.b"), Matrix::zeros(1, fout), group, 1.0)?,
        })
    }

    pub(crate) fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let (w, b) = (tape.param(store, self.w), tape.param(store, self.b));
        tape.linear(x, w, b)
    }
}

/// Segmentation network parameters (all in the segmentation partition).
#[derive(Clone, Debug)]
pub struct SegNet {
    encoder: Vec<ConvBlock>,
    /// Per decoder level: 1×1 re-projection of `[unpooled, skip]` and a block.
    decoder: Vec<(Dense, ConvBlock)>,
    mlp1: [Dense; 2],
    mlp2: Dense,
    mlp3: [Dense; 2],
    slope: f64,
}

/// Voxel hierarchy for one sweep.
pub struct SegGeometry {
    pub spec: VolumeSpec,
    pub levels: Vec<CoordSet>,
    pub rulebooks: Vec<Rc<Rulebook>>,
    pub pools: Vec<Rc<PoolMap>>,
    pub point_to_voxel: Rc<Vec<usize>>,
    pub voxel_assign: Rc<Vec<Option<usize>>>,
}

impl SegGeometry {
    pub fn build(positions: &[Vec3], voxel_size: f64, depth: usize) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::contract("segmentation needs at least one point"));
        }
        let spec = VolumeSpec::enclosing(positions, voxel_size)?;
        let (set, map) = assign_voxels(&PointCloud::new(positions.to_vec()), &spec)?;
        let mut levels = vec![set];
        let mut pools = Vec::new();
        for _ in 1..depth {
            let pm = pool_coords(levels.last().unwrap());
            levels.push(pm.coarse.clone());
            pools.push(Rc::new(pm));
        }
        let rulebooks = levels
            .iter()
            .map(|l| build_rulebook(l, 3).map(Rc::new))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec,
            levels,
            rulebooks,
            pools,
            voxel_assign: Rc::new(map.point_to_voxel.iter().map(|&v| Some(v)).collect()),
            point_to_voxel: Rc::new(map.point_to_voxel),
        })
    }
}

/// Per-point outputs of the segmentation stage.
#[derive(Clone, Copy, Debug)]
pub struct SegOutputs {
    /// Devoxelized backbone features `N × F`.
    pub f_enc: Var,
    /// Shape embedding `N × D^e`.
    pub f_se: Var,
    /// Class logits `N × C` (column `c` is label `c + 1`).
    pub logits: Var,
}

impl SegNet {
    pub fn register(store: &mut ParamStore, rng: &mut impl Rng, cfg: &ModelConfig) -> Result<Self> {
        let ch = &cfg.seg_channels;
        let mut encoder = Vec::with_capacity(ch.len());
        let mut prev = INPUT_DIM;
        for (l, &c) in ch.iter().enumerate() {
            encoder.push(ConvBlock::register(store, rng, &format!("seg.enc{l}"), prev, c)?);
            prev = c;
        }
        let mut decoder = Vec::new();
        for l in (0..ch.len().saturating_sub(1)).rev() {
            let reduce = Dense::register(store, rng, &format!("seg.dec{l}.reduce"), ch[l + 1] + ch[l], ch[l], ParamGroup::Seg)?;
            let block = ConvBlock::register(store, rng, &format!("seg.dec{l}"), ch[l], ch[l])?;
            decoder.push((reduce, block));
        }
        let f = ch[0];
        let e = cfg.embed_dim;
        let g = ParamGroup::Seg;
        Ok(Self {
            encoder,
            decoder,
            mlp1: [
                Dense::register(store, rng, "seg.mlp1.0", f, e, g)?,
                Dense::register(store, rng, "seg.mlp1.1", e, e, g)?,
            ],
            mlp2: Dense::register(store, rng, "seg.mlp2", f, e, g)?,
            mlp3: [
                Dense::register(store, rng, "seg.mlp3.0", e, e, g)?,
                Dense::register(store, rng, "seg.mlp3.1", e, cfg.num_classes, g)?,
            ],
            slope: cfg.leaky_slope,
        })
    }

    pub fn depth(&self) -> usize {
        self.encoder.len()
    }

    /// Final logit layer, exposed for tests that pin its weights.
    pub fn logit_layer(&self) -> (ParamId, ParamId) {
        (self.mlp3[1].w, self.mlp3[1].b)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, positions: &[Vec3], geom: &SegGeometry) -> Result<SegOutputs> {
        let feats = tape.constant(input_features(positions));
        let mut x = tape.scatter_mean(feats, geom.voxel_assign.clone(), geom.levels[0].len())?;
        let depth = self.depth();
        let mut skips = Vec::with_capacity(depth);
        for (l, block) in self.encoder.iter().enumerate() {
            let h = block.forward(tape, store, x, &geom.rulebooks[l], self.slope)?;
            skips.push(h);
            if l + 1 < depth {
                x = tape.sparse_pool(h, &geom.pools[l])?;
            } else {
                x = h;
            }
        }
        for (i, (reduce, block)) in self.decoder.iter().enumerate() {
            let l = depth - 2 - i;
            let up = tape.sparse_unpool(x, geom.pools[l].clone())?;
            let cat = tape.concat(&[up, skips[l]])?;
            let r = reduce.forward(tape, store, cat)?;
            let r = tape.leaky_relu(r, self.slope);
            x = block.forward(tape, store, r, &geom.rulebooks[l], self.slope)?;
        }
        let f_enc = tape.gather_rows(x, geom.point_to_voxel.clone())?;

        let h = self.mlp1[0].forward(tape, store, f_enc)?;
        let h = tape.leaky_relu(h, self.slope);
        let f_se = self.mlp1[1].forward(tape, store, h)?;
        let proj = self.mlp2.forward(tape, store, f_enc)?;
        let fused = tape.add(f_se, proj)?;
        let h = self.mlp3[0].forward(tape, store, fused)?;
        let h = tape.leaky_relu(h, self.slope);
        let logits = self.mlp3[1].forward(tape, store, h)?;
        Ok(SegOutputs { f_enc, f_se, logits })
    }
}
