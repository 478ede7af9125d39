//! Joint semantic segmentation and semantic scene completion for sparse LiDAR sweeps.
//!
//! The crate is organized bottom-up:
//!
//! * [`geometry`], [`sparse`], [`volume`]: point clouds, poses, hashed sparse voxel
//!   tensors and dense label grids.
//! * [`sparse_conv`], [`dense`]: compute kernels (submanifold convolution, dense
//!   convolution, channel-to-space upsampling, pointwise layers).
//! * [`autodiff`]: a reverse-mode tape over exactly those kernels, the parameter
//!   store and Adam.
//! * [`pvi`]: voxel-center extraction, exact kNN and graph refinement of the
//!   coarse completion.
//! * [`model`]: the segmentation U-Net, completion decoder and their assembly.
//! * [`loss`], [`metrics`]: training objectives and the evaluation protocol.
//! * [`datagen`]: KITTI-format readers, multi-frame ground-truth generation and
//!   synthetic scenes.
//! * [`train`]: the training loop shared by the CLI and the test suites.

pub mod autodiff;
pub mod datagen;
pub mod dense;
pub mod error;
pub mod geometry;
pub(crate) mod io;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod pvi;
pub mod sparse;
pub mod sparse_conv;
pub mod tensor;
pub mod train;
pub mod volume;

pub use error::{Error, Result};
pub use geometry::{transform_cloud, PointCloud, Pose, VolumeSpec};
pub use sparse::{devoxelize, voxelize_points, PointVoxelMap, SparseTensor};
pub use tensor::Matrix;
pub use volume::{majority_vote_labels, LabeledVolume};
