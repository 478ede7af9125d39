//! Reverse-mode differentiation over a fixed operation set, the parameter store and Adam.

mod checkpoint;
mod params;
mod tape;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use params::{lr_schedule, AdamConfig, Param, ParamGrads, ParamGroup, ParamId, ParamStore, StepDecay};
pub use tape::{Gradients, Tape, Var};
