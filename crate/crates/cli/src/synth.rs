use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use ssc_core::datagen::{synth_generate, write_calib, write_labels, write_poses, write_scan, write_volume, SyntheticSceneSpec};
use ssc_core::geometry::Pose;

use crate::error::CliResult;
use crate::fsutil;

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub scenes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 6)]
    pub boxes: usize,
    #[arg(long, default_value_t = 2)]
    pub planes: usize,
    /// Dense samples per square meter of surface.
    #[arg(long, default_value_t = 100.0)]
    pub density: f64,
    /// Share of dense points kept in the sweep.
    #[arg(long, default_value_t = 0.12)]
    pub fraction: f64,
    /// Share of the forward half-plane hidden from the sensor.
    #[arg(long, default_value_t = 0.15)]
    pub occlusion: f64,
}

impl SynthArgs {
    fn scene_spec(&self, index: usize) -> SyntheticSceneSpec {
        SyntheticSceneSpec {
            num_classes: self.classes,
            boxes: self.boxes,
            planes: self.planes,
            density: self.density,
            sweep_fraction: self.fraction,
            occlusion_fraction: self.occlusion,
            seed: self.seed.wrapping_mul(1_000_003).wrapping_add(index as u64),
            ..SyntheticSceneSpec::toy(0)
        }
    }
}

pub fn run(args: &SynthArgs) -> CliResult<()> {
    for sub in ["velodyne", "labels", "voxels"] {
        fsutil::create_dir(&args.out.join(sub))?;
    }
    let mut manifest = String::new();
    for i in 0..args.scenes {
        let spec = args.scene_spec(i);
        let scene = synth_generate(&spec)?;
        let name = format!("{i:06}");
        let labels = scene.sweep.labels.as_deref().unwrap_or_default();
        fsutil::write(&args.out.join("velodyne").join(format!("{name}.bin")), write_scan(&scene.sweep))?;
        fsutil::write(&args.out.join("labels").join(format!("{name}.label")), write_labels(labels))?;
        fsutil::write(&args.out.join("voxels").join(format!("{name}.sscv")), write_volume(&scene.gt))?;
        let _ = writeln!(manifest, "{name}\tseed={}\tpoints={}", spec.seed, scene.sweep.len());
    }
    fsutil::write(&args.out.join("poses.txt"), write_poses(&vec![Pose::identity(); args.scenes]))?;
    fsutil::write(&args.out.join("calib.txt"), write_calib(&Pose::identity()))?;
    fsutil::write(&args.out.join("manifest.txt"), manifest)?;
    Ok(())
}
