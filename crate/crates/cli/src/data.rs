//! Dataset directories: `velodyne/*.bin`, `labels/*.label`, `voxels/*.sscv`.

use std::path::Path;

use ssc_core::datagen::{kitti::attach_labels, read_labels, read_scan, read_volume};
use ssc_core::train::Sample;

use crate::error::{at, CliError, CliResult};
use crate::fsutil;

pub fn load_samples(dir: &Path) -> CliResult<Vec<Sample>> {
    let scans = fsutil::list(&dir.join("velodyne"), "bin")?;
    if scans.is_empty() {
        return Err(CliError::Data(format!("{}: no scans under velodyne/", dir.display())));
    }
    scans
        .iter()
        .map(|scan| {
            let name = fsutil::stem(scan);
            let label_path = dir.join("labels").join(format!("{name}.label"));
            let vox_path = dir.join("voxels").join(format!("{name}.sscv"));
            let cloud = read_scan(&fsutil::read(scan)?).map_err(at(scan))?;
            let labels = read_labels(&fsutil::read(&label_path)?, None).map_err(at(&label_path))?;
            let sweep = attach_labels(cloud, labels).map_err(at(&label_path))?;
            let gt = read_volume(&fsutil::read(&vox_path)?).map_err(at(&vox_path))?;
            Ok(Sample { sweep, gt })
        })
        .collect()
}
