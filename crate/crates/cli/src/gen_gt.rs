use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use ssc_core::datagen::{generate_gt, kitti::LabelRemap, write_volume, FrameSource, SequenceIndex};
use ssc_core::geometry::VolumeSpec;
use ssc_core::model::config::toy_ssc_spec;

use crate::error::{at, CliError, CliResult};
use crate::fsutil;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum VolumePreset {
    /// 51.2 m × 51.2 m × 6.4 m at 0.2 m in front of the sensor.
    Paper,
    /// 6.4 m × 6.4 m × 1.6 m at 0.2 m, matching the synthetic scenes.
    Toy,
}

#[derive(Args, Debug)]
pub struct GenGtArgs {
    /// Sequence directory with velodyne/, labels/, poses.txt and calib.txt.
    #[arg(long)]
    pub sequence: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 70)]
    pub window: usize,
    #[arg(long, value_enum, default_value_t = VolumePreset::Paper)]
    pub volume: VolumePreset,
    /// Volume origin `x,y,z` in meters, overriding the preset.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub origin: Option<Vec<f64>>,
    #[arg(long)]
    pub voxel_size: Option<f64>,
    /// Volume dims `nx,ny,nz`, overriding the preset.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Class remap file with `raw_id target_id` lines.
    #[arg(long)]
    pub remap: Option<PathBuf>,
}

impl GenGtArgs {
    pub fn spec(&self) -> CliResult<VolumeSpec> {
        let base = match self.volume {
            VolumePreset::Paper => VolumeSpec::paper_ssc(),
            VolumePreset::Toy => toy_ssc_spec(),
        };
        let origin = match self.origin.as_deref() {
            None => base.origin,
            Some(&[x, y, z]) => [x, y, z],
            Some(_) => return Err(CliError::Usage("--origin takes x,y,z".into())),
        };
        let dims = match self.dims.as_deref() {
            None => base.dims,
            Some(&[x, y, z]) => [x, y, z],
            Some(_) => return Err(CliError::Usage("--dims takes nx,ny,nz".into())),
        };
        VolumeSpec::new(origin, self.voxel_size.unwrap_or(base.voxel_size), dims)
            .map_err(|e| CliError::Usage(e.to_string()))
    }
}

pub fn run(args: &GenGtArgs) -> CliResult<()> {
    let spec = args.spec()?;
    if args.window == 0 {
        return Err(CliError::Usage("--window must be at least 1".into()));
    }
    let remap = match &args.remap {
        Some(p) => Some(LabelRemap::parse(&fsutil::read_text(p)?).map_err(at(p))?),
        None => None,
    };
    let seq = SequenceIndex::open(&args.sequence, remap)?;
    fsutil::create_dir(&args.out)?;
    let mut manifest = String::new();
    for i in 0..seq.num_frames() {
        let gt = generate_gt(&seq, i, args.window, &spec)?;
        let name = fsutil::stem(&seq.frames[i].scan);
        let file = format!("{name}.sscv");
        fsutil::write(&args.out.join(&file), write_volume(&gt))?;
        let _ = writeln!(manifest, "{name}\t{file}");
    }
    fsutil::write(&args.out.join("manifest.txt"), manifest)
}
