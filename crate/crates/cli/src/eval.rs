use std::path::PathBuf;

use clap::Args;
use ssc_core::datagen::{read_labels, read_volume};
use ssc_core::metrics::{sc_metrics, seg_miou, ssc_miou, MetricsReport};
use ssc_core::train::evaluate;

use crate::data::load_samples;
use crate::error::{at, CliError, CliResult};
use crate::fsutil;
use crate::infer::load_model;

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Score a trained model on a dataset directory.
    #[arg(long, requires = "data", conflicts_with_all = ["pred", "truth"])]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Also score completion volumes (checkpoint mode).
    #[arg(long)]
    pub completion: bool,
    /// Predicted per-point label file.
    #[arg(long, requires = "truth")]
    pub pred: Option<PathBuf>,
    /// Ground-truth per-point label file.
    #[arg(long, requires = "pred")]
    pub truth: Option<PathBuf>,
    /// Predicted completion volume.
    #[arg(long, requires = "gt_volume")]
    pub pred_volume: Option<PathBuf>,
    /// Ground-truth completion volume.
    #[arg(long, requires = "pred_volume")]
    pub gt_volume: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    /// Report path; a `key = value` copy is written next to it with extension `.kv`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let report = if let Some(ck) = &args.checkpoint {
        let data = args.data.as_ref().expect("clap enforces --data");
        let net = load_model(ck, args.config.as_deref())?;
        evaluate(&net, &load_samples(data)?, args.completion)?.report()
    } else {
        let mut r = MetricsReport::default();
        if let (Some(p), Some(t)) = (&args.pred, &args.truth) {
            let pred = read_labels(&fsutil::read(p)?, None).map_err(at(p))?;
            let truth = read_labels(&fsutil::read(t)?, None).map_err(at(t))?;
            r.push_scores("seg", &seg_miou(&pred, &truth, args.classes)?);
        }
        if let (Some(p), Some(g)) = (&args.pred_volume, &args.gt_volume) {
            let pred = read_volume(&fsutil::read(p)?).map_err(at(p))?;
            let gt = read_volume(&fsutil::read(g)?).map_err(at(g))?;
            let sc = sc_metrics(&pred, &gt)?;
            r.push("sc.precision", sc.precision);
            r.push("sc.recall", sc.recall);
            r.push("sc.iou", sc.iou);
            r.push_scores("ssc", &ssc_miou(&pred, &gt, args.classes)?);
        }
        if r.entries.is_empty() {
            return Err(CliError::Usage(
                "give --checkpoint with --data, --pred with --truth, or --pred-volume with --gt-volume".into(),
            ));
        }
        r
    };
    fsutil::write(&args.out, report.to_table())?;
    fsutil::write(&args.out.with_extension("kv"), report.to_kv())
}
