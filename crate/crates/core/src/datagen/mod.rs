//! Dataset ingestion, ground-truth generation and synthetic scenes.

pub mod gt;
pub mod kitti;
pub mod sequence;
pub mod sscv;
pub mod synth;

pub use gt::{generate_gt, label_volume, raycast_visibility, traverse, Visibility};
pub use kitti::{read_calib, read_labels, read_poses, read_scan, write_calib, write_labels, write_poses, write_scan, LabelRemap};
pub use sequence::{aggregate_frames, FrameSource, InMemorySequence, SequenceIndex};
pub use sscv::{read_volume, write_volume};
pub use synth::{synth_generate, SyntheticScene, SyntheticSceneSpec};
