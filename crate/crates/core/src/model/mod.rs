//! Network assembly: segmentation backbone, completion decoder and point-voxel refinement.

pub mod augment;
pub mod config;
pub mod seg;
pub mod ssc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use augment::{vote_inference, vote_inference_with, GridTransform, SegAugment};
pub use config::{ModelConfig, Preset};
pub use seg::{SegGeometry, SegNet, SegOutputs};
pub use ssc::{cell_assignment, shape_plan, SscNet, Stage};

use crate::autodiff::{ParamGroup, ParamId, ParamStore, Tape, Var};
use crate::dense::DenseVolume;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::loss::log_var_from_sigma;
use crate::pvi::{centers_from_logits, gcn_refine, knn_query, PviParams, RefineInputs};
use crate::tensor::Matrix;
use crate::volume::LabeledVolume;

/// Learning-rate multiplier of the two loss-balancing parameters.
pub const SIGMA_LR_MULT: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Segmentation, completion and refinement on one tape.
    Train,
    /// Segmentation only.
    Infer,
}

/// Counters of the auxiliary structures built during a forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ForwardStats {
    pub ssc_volumes: usize,
    pub pvi_graphs: usize,
    pub centers: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    pub f_enc: Var,
    pub f_se: Var,
    pub seg_logits: Var,
    /// `cells × (C+1)` completion logits before refinement (train mode only).
    pub coarse: Option<Var>,
    /// Refined completion logits (train mode only).
    pub refined: Option<Var>,
    pub stats: ForwardStats,
}

/// The joint segmentation / completion network and its parameters.
#[derive(Clone, Debug)]
pub struct Js3cNet {
    cfg: ModelConfig,
    store: ParamStore,
    seg: SegNet,
    ssc: SscNet,
    pvi: PviParams,
    s1: ParamId,
    s2: ParamId,
}

impl Js3cNet {
    /// Builds a network with parameters drawn from `seed`. The loss-balancing σ's start
    /// uniform in `[0.8, 1.2]` and are stored as `log σ²`.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let seg = SegNet::register(&mut store, &mut rng, &cfg)?;
        let ssc = SscNet::register(&mut store, &mut rng, &cfg)?;
        let pvi = PviParams::register(
            &mut store,
            &mut rng,
            cfg.embed_dim,
            cfg.num_classes + 1,
            cfg.pvi_hidden,
            cfg.pvi_layers,
            cfg.pvi_k,
        )?;
        let sigma = |name: &str, store: &mut ParamStore, rng: &mut ChaCha8Rng| {
            let s = log_var_from_sigma(rng.gen_range(0.8..=1.2));
            store.add(name, Matrix::scalar(s), ParamGroup::Aux, SIGMA_LR_MULT)
        };
        let s1 = sigma("loss.s1", &mut store, &mut rng)?;
        let s2 = sigma("loss.s2", &mut store, &mut rng)?;
        Ok(Self {
            cfg,
            store,
            seg,
            ssc,
            pvi,
            s1,
            s2,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn seg_net(&self) -> &SegNet {
        &self.seg
    }

    pub fn ssc_net(&self) -> &SscNet {
        &self.ssc
    }

    pub fn pvi_params(&self) -> &PviParams {
        &self.pvi
    }

    /// Ids of the log-variance parameters `(s1, s2)`.
    pub fn log_vars(&self) -> (ParamId, ParamId) {
        (self.s1, self.s2)
    }

    /// Current `(σ1, σ2)`.
    pub fn sigmas(&self) -> (f64, f64) {
        let s = |id| crate::loss::sigma_from_log_var(self.store.value(id).item());
        (s(self.s1), s(self.s2))
    }

    /// Replaces every parameter (values and optimizer state) with the same-named entry
    /// of `other`. Names and shapes must match exactly.
    pub fn load_store(&mut self, other: ParamStore) -> Result<()> {
        if other.len() != self.store.len() {
            return Err(Error::structure(format!(
                "checkpoint holds {} tensors, the model has {}",
                other.len(),
                self.store.len()
            )));
        }
        for (id, p) in self.store.iter() {
            let o = other
                .id_of(&p.name)
                .ok_or_else(|| Error::structure(format!("checkpoint lacks `{}`", p.name)))?;
            if o != id || other.value(o).shape() != p.value.shape() || other.group(o) != p.group {
                return Err(Error::structure(format!("checkpoint entry `{}` does not match the model", p.name)));
            }
        }
        self.store = other;
        Ok(())
    }

    pub fn seg_forward(&self, tape: &mut Tape, positions: &[Vec3]) -> Result<SegOutputs> {
        let geom = SegGeometry::build(positions, self.cfg.seg_voxel_size, self.seg.depth())?;
        self.seg.forward(tape, &self.store, positions, &geom)
    }

    /// Forward pass where segmentation sees `seg_positions` and the completion branch sees
    /// `ssc_positions` (the same points, row for row, possibly under different augmentations).
    pub fn forward_split(
        &self,
        tape: &mut Tape,
        seg_positions: &[Vec3],
        ssc_positions: &[Vec3],
        mode: Mode,
    ) -> Result<ForwardOutput> {
        if seg_positions.len() != ssc_positions.len() {
            return Err(Error::contract("segmentation and completion inputs differ in length"));
        }
        let seg = self.seg_forward(tape, seg_positions)?;
        let mut out = ForwardOutput {
            f_enc: seg.f_enc,
            f_se: seg.f_se,
            seg_logits: seg.logits,
            coarse: None,
            refined: None,
            stats: ForwardStats::default(),
        };
        if mode == Mode::Infer {
            return Ok(out);
        }
        let probs = tape.softmax(seg.logits);
        let coarse = self.ssc.forward(tape, &self.store, probs, ssc_positions)?;
        out.stats.ssc_volumes = 1;
        let centers = centers_from_logits(tape.value(coarse), &self.cfg.ssc_spec)?;
        out.stats.centers = centers.len();
        let refined = if centers.is_empty() {
            coarse
        } else {
            let k = self.pvi.k.min(ssc_positions.len());
            let graph = knn_query(&centers.positions, ssc_positions, k)?;
            out.stats.pvi_graphs = 1;
            let inputs = RefineInputs {
                centers: &centers,
                points: ssc_positions,
                graph: &graph,
            };
            gcn_refine(tape, &self.store, &self.pvi, coarse, seg.f_se, &inputs)?
        };
        out.coarse = Some(coarse);
        out.refined = Some(refined);
        Ok(out)
    }

    pub fn forward(&self, tape: &mut Tape, positions: &[Vec3], mode: Mode) -> Result<ForwardOutput> {
        self.forward_split(tape, positions, positions, mode)
    }

    /// Segmentation logits (`N × C`, column `c` is label `c + 1`).
    pub fn predict(&self, positions: &[Vec3]) -> Result<Matrix> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, positions, Mode::Infer)?;
        Ok(tape.value(out.seg_logits).clone())
    }

    /// Per-point labels in `1..=C`.
    pub fn predict_labels(&self, positions: &[Vec3]) -> Result<Vec<u32>> {
        let logits = self.predict(positions)?;
        Ok((0..logits.rows()).map(|r| logits.argmax_row(r) as u32 + 1).collect())
    }

    /// Refined completion as a dense logit volume and its argmax label grid.
    pub fn predict_completion(&self, positions: &[Vec3]) -> Result<(DenseVolume, LabeledVolume)> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, positions, Mode::Train)?;
        let refined = out.refined.expect("train mode yields a completion");
        let logits = tape.value(refined).clone();
        let labels = (0..logits.rows()).map(|r| logits.argmax_row(r) as u8).collect();
        let vol = LabeledVolume::new(self.cfg.ssc_spec.clone(), labels)?;
        Ok((DenseVolume::new(self.cfg.ssc_spec.clone(), logits)?, vol))
    }
}
