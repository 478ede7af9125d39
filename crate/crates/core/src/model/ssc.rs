//! Dense completion decoder over the semantic probability volume.

use std::rc::Rc;

use rand::Rng;

use super::config::ModelConfig;
use super::seg::Dense;
use crate::autodiff::{ParamGroup, ParamId, ParamStore, Tape, Var};
use crate::dense::ConvGeom;
use crate::error::{Error, Result};
use crate::geometry::{Vec3, VolumeSpec};
use crate::pvi::glorot;
use crate::tensor::Matrix;

/// Voxel of each point in `spec`, or `None` for points outside the box.
pub fn cell_assignment(positions: &[Vec3], spec: &VolumeSpec) -> Vec<Option<usize>> {
    positions
        .iter()
        .map(|p| {
            let c = spec.cell_of(p);
            (p.iter().all(|v| v.is_finite()) && spec.contains_cell(c)).then(|| spec.linear(c))
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
struct Conv {
    w: ParamId,
    b: ParamId,
}

impl Conv {
    fn register(store: &mut ParamStore, rng: &mut impl Rng, name: &str, fin: usize, fout: usize) -> Result<Self> {
        let g = ParamGroup::Aux;
        Ok(Self {
            w: store.add(format!("{name}.w"), glorot(rng, 27 * fin, fout), g, 1.0)?,
            b: store.add(format!("{name}.b"), Matrix::zeros(1, fout), g, 1.0)?,
        })
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, dims: [usize; 3]) -> Result<Var> {
        let (w, b) = (tape.param(store, self.w), tape.param(store, self.b));
        let geom = ConvGeom {
            dims,
            kernel: 3,
            stride: 1,
            padding: 1,
        };
        tape.conv3d(x, w, b, geom)
    }
}

/// Completion decoder parameters (auxiliary partition).
#[derive(Clone, Debug)]
pub struct SscNet {
    stem: Conv,
    blocks: Vec<[Conv; 2]>,
    head: Dense,
    spec: VolumeSpec,
    num_classes: usize,
    slope: f64,
}

/// One row of the decoder's shape plan: stage name, grid dims and channel count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stage {
    pub name: &'static str,
    pub dims: [usize; 3],
    pub channels: usize,
}

/// Tensor shapes produced by the decoder for `cfg`, without allocating any volume.
pub fn shape_plan(cfg: &ModelConfig) -> Result<Vec<Stage>> {
    cfg.validate()?;
    let full = cfg.ssc_spec.dims;
    let half = [full[0] / 2, full[1] / 2, full[2] / 2];
    let w = cfg.ssc_width;
    let c1 = cfg.num_classes + 1;
    let mut plan = vec![
        Stage {
            name: "input",
            dims: full,
            channels: cfg.num_classes,
        },
        Stage {
            name: "stem",
            dims: full,
            channels: w,
        },
        Stage {
            name: "pool",
            dims: half,
            channels: w,
        },
    ];
    for _ in 0..cfg.ssc_blocks {
        plan.push(Stage {
            name: "block",
            dims: half,
            channels: w,
        });
    }
    plan.push(Stage {
        name: "concat",
        dims: half,
        channels: 9 * w,
    });
    plan.push(Stage {
        name: "head",
        dims: half,
        channels: 8 * c1,
    });
    plan.push(Stage {
        name: "upsample",
        dims: full,
        channels: c1,
    });
    Ok(plan)
}

impl SscNet {
    pub fn register(store: &mut ParamStore, rng: &mut impl Rng, cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let w = cfg.ssc_width;
        let stem = Conv::register(store, rng, "ssc.stem", cfg.num_classes, w)?;
        let mut blocks = Vec::with_capacity(cfg.ssc_blocks);
        for i in 0..cfg.ssc_blocks {
            blocks.push([
                Conv::register(store, rng, &format!("ssc.block{i}.conv0"), w, w)?,
                Conv::register(store, rng, &format!("ssc.block{i}.conv1"), w, w)?,
            ]);
        }
        let head = Dense::register(store, rng, "ssc.head", 9 * w, 8 * (cfg.num_classes + 1), ParamGroup::Aux)?;
        Ok(Self {
            stem,
            blocks,
            head,
            spec: cfg.ssc_spec.clone(),
            num_classes: cfg.num_classes,
            slope: cfg.leaky_slope,
        })
    }

    /// Final 1×1 layer, exposed for tests that pin its weights.
    pub fn head_layer(&self) -> (ParamId, ParamId) {
        (self.head.w, self.head.b)
    }

    /// Per-voxel mean of the member-point probabilities; empty voxels are zero.
    pub fn input_volume(&self, tape: &mut Tape, probs: Var, positions: &[Vec3]) -> Result<Var> {
        let p = tape.value(probs);
        if p.rows() != positions.len() || p.cols() != self.num_classes {
            return Err(Error::contract(format!(
                "probabilities {:?} do not match {} points × {} classes",
                p.shape(),
                positions.len(),
                self.num_classes
            )));
        }
        for r in 0..p.rows() {
            let s: f64 = p.row(r).iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::contract(format!("probability row {r} sums to {s}")));
            }
        }
        let assign = Rc::new(cell_assignment(positions, &self.spec));
        tape.scatter_mean(probs, assign, self.spec.num_cells())
    }

    /// Coarse completion logits, `cells × (C+1)` with channel 0 the empty class.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, probs: Var, positions: &[Vec3]) -> Result<Var> {
        let input = self.input_volume(tape, probs, positions)?;
        self.forward_volume(tape, store, input)
    }

    pub fn forward_volume(&self, tape: &mut Tape, store: &ParamStore, input: Var) -> Result<Var> {
        let dims = self.spec.dims;
        if tape.value(input).rows() != self.spec.num_cells() {
            return Err(Error::contract("input volume does not match the completion grid"));
        }
        let s = self.stem.forward(tape, store, input, dims)?;
        let stem = tape.leaky_relu(s, self.slope);
        let (mut h, half) = tape.max_pool2(stem, dims)?;
        for [a, b] in &self.blocks {
            let t = a.forward(tape, store, h, half)?;
            let t = tape.leaky_relu(t, self.slope);
            let t = b.forward(tape, store, t, half)?;
            let sum = tape.add(h, t)?;
            h = tape.leaky_relu(sum, self.slope);
        }
        let (fine, _) = tape.voxel_unshuffle(stem, dims, 2)?;
        let cat = tape.concat(&[fine, h])?;
        let z = self.head.forward(tape, store, cat)?;
        let (out, _) = tape.voxel_shuffle(z, half, 2)?;
        Ok(out)
    }
}
