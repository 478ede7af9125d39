use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use ssc_core::autodiff::write_checkpoint;
use ssc_core::model::{Js3cNet, ModelConfig, Preset};
use ssc_core::train::{evaluate, ClassWeights, Objective, TrainConfig, Trainer};

use crate::data::load_samples;
use crate::error::{at, CliError, CliResult};
use crate::fsutil;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ObjectiveArg {
    Joint,
    SegOnly,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Optional validation dataset, scored after every epoch.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "toy")]
    pub preset: String,
    /// Model config file (`key = value` lines); overrides `--preset`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Joint)]
    pub objective: ObjectiveArg,
    /// Samples per optimizer step.
    #[arg(long, default_value_t = 1)]
    pub accumulate: usize,
    #[arg(long)]
    pub no_augment: bool,
}

pub fn load_config(config: Option<&Path>, preset: &str) -> CliResult<ModelConfig> {
    match config {
        Some(p) => ModelConfig::from_kv(&fsutil::read_text(p)?).map_err(at(p)),
        None => {
            let p = Preset::parse(preset).map_err(|e| CliError::Usage(e.to_string()))?;
            ModelConfig::from_preset(p).map_err(|e| CliError::Usage(e.to_string()))
        }
    }
}

fn checkpoint_path(out: &Path, epoch: usize) -> PathBuf {
    out.join(format!("checkpoint-{epoch:03}.ssck"))
}

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let cfg = load_config(args.config.as_deref(), &args.preset)?;
    if args.accumulate == 0 {
        return Err(CliError::Usage("--accumulate must be at least 1".into()));
    }
    let samples = load_samples(&args.data)?;
    let val = args.val.as_deref().map(load_samples).transpose()?;
    fsutil::create_dir(&args.out)?;
    fsutil::write(&args.out.join("config.txt"), cfg.to_kv())?;

    let weights = ClassWeights::from_samples(&samples, cfg.num_classes);
    let net = Js3cNet::new(cfg, args.seed)?;
    let tcfg = TrainConfig {
        epochs: args.epochs,
        objective: match args.objective {
            ObjectiveArg::Joint => Objective::Joint,
            ObjectiveArg::SegOnly => Objective::SegOnly,
        },
        accumulate: args.accumulate,
        augment: !args.no_augment,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(net, tcfg, weights)?;
    fsutil::write(&checkpoint_path(&args.out, 0), write_checkpoint(trainer.net.store()))?;

    let log_path = args.out.join("train.log");
    let file = File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let mut epochs = String::new();
    for epoch in 0..args.epochs {
        let steps = trainer.train_epoch(&samples, epoch)?;
        for s in &steps {
            writeln!(log, "{}", s.line()).map_err(|e| CliError::io(&log_path, e))?;
        }
        let mean = steps.iter().map(|s| s.total).sum::<f64>() / steps.len() as f64;
        let _ = write!(epochs, "epoch {}\tmean_total {mean:.9e}", epoch + 1);
        if let Some(v) = &val {
            let ev = evaluate(&trainer.net, v, false)?;
            let _ = write!(epochs, "\tval_seg_miou {:.9e}", ev.seg.miou);
        }
        epochs.push('\n');
        fsutil::write(&checkpoint_path(&args.out, epoch + 1), write_checkpoint(trainer.net.store()))?;
    }
    log.flush().map_err(|e| CliError::io(&log_path, e))?;
    fsutil::write(&args.out.join("epochs.log"), epochs)?;
    Ok(())
}
