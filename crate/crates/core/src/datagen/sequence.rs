//! Frame sources and multi-frame aggregation into a center frame.

use std::fs;
use std::path::{Path, PathBuf};

use super::kitti::{attach_labels, read_calib, read_labels, read_poses, read_scan, LabelRemap};
use crate::error::{Error, Result};
use crate::geometry::{transform_cloud, PointCloud, Pose, Vec3};

/// Anything that can hand out labeled frames with their poses.
pub trait FrameSource {
    fn num_frames(&self) -> usize;
    /// Labeled cloud of frame `i` in its own sensor coordinates.
    fn frame(&self, i: usize) -> Result<PointCloud>;
    fn pose(&self, i: usize) -> Pose;
    /// Sensor → pose-frame calibration.
    fn calib(&self) -> Pose;
}

/// One frame of an on-disk sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub scan: PathBuf,
    pub labels: PathBuf,
    pub pose: Pose,
}

/// A KITTI-layout sequence: `velodyne/*.bin`, `labels/*.label`, `poses.txt`, `calib.txt`.
#[derive(Clone, Debug)]
pub struct SequenceIndex {
    pub frames: Vec<FrameRecord>,
    pub calib: Pose,
    pub remap: Option<LabelRemap>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == ext) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

impl SequenceIndex {
    pub fn open(dir: &Path, remap: Option<LabelRemap>) -> Result<Self> {
        let scans = sorted_files(&dir.join("velodyne"), "bin")?;
        let poses = read_poses(&read_text(&dir.join("poses.txt"))?)?;
        let calib = read_calib(&read_text(&dir.join("calib.txt"))?)?;
        if poses.len() != scans.len() {
            return Err(Error::structure(format!(
                "{} scans but {} poses in {}",
                scans.len(),
                poses.len(),
                dir.display()
            )));
        }
        let frames = scans
            .into_iter()
            .zip(poses)
            .map(|(scan, pose)| {
                let stem = scan.file_stem().expect("file has a stem").to_os_string();
                let labels = dir.join("labels").join(stem).with_extension("label");
                FrameRecord { scan, labels, pose }
            })
            .collect();
        Ok(Self { frames, calib, remap })
    }
}

impl FrameSource for SequenceIndex {
    fn num_frames(&self) -> usize {
        self.frames.len()
    }

    fn frame(&self, i: usize) -> Result<PointCloud> {
        let rec = &self.frames[i];
        let scan = fs::read(&rec.scan).map_err(|e| Error::io(&rec.scan, e))?;
        let labels = fs::read(&rec.labels).map_err(|e| Error::io(&rec.labels, e))?;
        let cloud = read_scan(&scan).map_err(|e| name_frame(e, &rec.scan))?;
        let labels = read_labels(&labels, self.remap.as_ref()).map_err(|e| name_frame(e, &rec.labels))?;
        attach_labels(cloud, labels).map_err(|e| name_frame(e, &rec.labels))
    }

    fn pose(&self, i: usize) -> Pose {
        self.frames[i].pose
    }

    fn calib(&self) -> Pose {
        self.calib
    }
}

fn name_frame(e: Error, path: &Path) -> Error {
    match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    }
}

/// Frames held in memory.
#[derive(Clone, Debug)]
pub struct InMemorySequence {
    pub frames: Vec<PointCloud>,
    pub poses: Vec<Pose>,
    pub calib: Pose,
}

impl FrameSource for InMemorySequence {
    fn num_frames(&self) -> usize {
        self.frames.len()
    }

    fn frame(&self, i: usize) -> Result<PointCloud> {
        Ok(self.frames[i].clone())
    }

    fn pose(&self, i: usize) -> Pose {
        self.poses[i]
    }

    fn calib(&self) -> Pose {
        self.calib
    }
}

/// Frame indices of a `window` centered on `center`: `(window-1)/2` before and `window/2`
/// after, truncated at the sequence ends.
pub fn window_range(num_frames: usize, center: usize, window: usize) -> Result<std::ops::Range<usize>> {
    if window == 0 {
        return Err(Error::contract("window must hold at least one frame"));
    }
    if center >= num_frames {
        return Err(Error::contract(format!("center frame {center} outside a {num_frames}-frame sequence")));
    }
    let start = center.saturating_sub((window - 1) / 2);
    let end = (center + window / 2 + 1).min(num_frames);
    Ok(start..end)
}

/// Transform taking frame `j`'s sensor coordinates to frame `center`'s sensor coordinates.
pub fn frame_to_center<S: FrameSource + ?Sized>(src: &S, center: usize, j: usize) -> Pose {
    let tr = src.calib();
    tr.inverse()
        .compose(&src.pose(center).inverse())
        .compose(&src.pose(j))
        .compose(&tr)
}

/// A frame expressed in the center frame, with its sensor origin.
#[derive(Clone, Debug)]
pub struct AlignedFrame {
    pub index: usize,
    pub origin: Vec3,
    pub cloud: PointCloud,
}

pub fn aligned_frames<S: FrameSource + ?Sized>(src: &S, center: usize, window: usize) -> Result<Vec<AlignedFrame>> {
    window_range(src.num_frames(), center, window)?
        .map(|j| {
            let t = frame_to_center(src, center, j);
            Ok(AlignedFrame {
                index: j,
                origin: t.apply(&[0.0; 3]),
                cloud: transform_cloud(&src.frame(j)?, &t),
            })
        })
        .collect()
}

/// Concatenation of every window frame in center-frame coordinates.
pub fn aggregate_frames<S: FrameSource + ?Sized>(src: &S, center: usize, window: usize) -> Result<PointCloud> {
    let frames = aligned_frames(src, center, window)?;
    let mut iter = frames.into_iter();
    let mut out = iter.next().expect("window is non-empty").cloud;
    for f in iter {
        out.extend(&f.cloud)?;
    }
    Ok(out)
}
