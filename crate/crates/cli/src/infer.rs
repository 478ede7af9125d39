use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssc_core::autodiff::{read_checkpoint, Tape};
use ssc_core::datagen::{read_scan, write_labels, write_volume};
use ssc_core::model::{vote_inference, Js3cNet, Mode};
use ssc_core::volume::LabeledVolume;

use crate::error::{at, CliError, CliResult};
use crate::fsutil;
use crate::train::load_config;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Segmentation only.
    Infer,
    /// Segmentation plus completion and refinement.
    Train,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Model config; defaults to `config.txt` next to the checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scan: PathBuf,
    /// Output label file, one little-endian u32 per point.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Infer)]
    pub mode: ModeArg,
    /// Augmented votes averaged per prediction (1 = plain inference).
    #[arg(long, default_value_t = 1)]
    pub votes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Completion volume output (train mode only).
    #[arg(long)]
    pub completion: Option<PathBuf>,
    /// Run log with structure counters; defaults to `<out>.log`.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

pub fn load_model(checkpoint: &Path, config: Option<&Path>) -> CliResult<Js3cNet> {
    let default_cfg = checkpoint.with_file_name("config.txt");
    let cfg = load_config(Some(config.unwrap_or(&default_cfg)), "toy")?;
    let store = read_checkpoint(&fsutil::read(checkpoint)?).map_err(at(checkpoint))?;
    let mut net = Js3cNet::new(cfg, 0)?;
    net.load_store(store).map_err(at(checkpoint))?;
    Ok(net)
}

pub fn run(args: &InferArgs) -> CliResult<()> {
    if args.votes == 0 {
        return Err(CliError::Usage("--votes must be at least 1".into()));
    }
    if args.completion.is_some() && args.mode != ModeArg::Train {
        return Err(CliError::Usage("--completion needs --mode train".into()));
    }
    let net = load_model(&args.checkpoint, args.config.as_deref())?;
    let cloud = read_scan(&fsutil::read(&args.scan)?).map_err(at(&args.scan))?;
    let positions = &cloud.positions;

    let start = Instant::now();
    let mut tape = Tape::new();
    let mode = match args.mode {
        ModeArg::Infer => Mode::Infer,
        ModeArg::Train => Mode::Train,
    };
    let out = net.forward(&mut tape, positions, mode)?;
    let logits = if args.votes > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        vote_inference(&net, positions, args.votes, &mut rng)?
    } else {
        tape.value(out.seg_logits).clone()
    };
    if !logits.is_finite() {
        return Err(CliError::Numerical("non-finite segmentation output".into()));
    }
    let labels: Vec<u32> = (0..logits.rows()).map(|r| logits.argmax_row(r) as u32 + 1).collect();
    let elapsed = start.elapsed();
    fsutil::write(&args.out, write_labels(&labels))?;

    if let (Some(path), Some(refined)) = (&args.completion, out.refined) {
        let v = tape.value(refined);
        let vol = LabeledVolume::new(net.config().ssc_spec, (0..v.rows()).map(|r| v.argmax_row(r) as u8).collect())?;
        fsutil::write(path, write_volume(&vol))?;
    }

    let mut log = String::new();
    let _ = writeln!(log, "mode = {}", if mode == Mode::Infer { "infer" } else { "train" });
    let _ = writeln!(log, "points = {}", positions.len());
    let _ = writeln!(log, "votes = {}", args.votes);
    let _ = writeln!(log, "tape_nodes = {}", tape.len());
    let _ = writeln!(log, "ssc_volumes = {}", out.stats.ssc_volumes);
    let _ = writeln!(log, "pvi_graphs = {}", out.stats.pvi_graphs);
    let _ = writeln!(log, "voxel_centers = {}", out.stats.centers);
    let _ = writeln!(log, "timing.elapsed_ms = {:.3}", elapsed.as_secs_f64() * 1e3);
    let log_path = args.log.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".log");
        p.into()
    });
    fsutil::write(&log_path, log)
}
