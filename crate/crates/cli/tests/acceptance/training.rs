//! Toy-scale joint training against segmentation-only training on synthetic scenes.

use std::time::Instant;

use ssc_core::datagen::{synth_generate, SyntheticSceneSpec};
use ssc_core::model::{Js3cNet, ModelConfig};
use ssc_core::train::{evaluate, mean_total, ClassWeights, Objective, Sample, TrainConfig, Trainer};

use crate::Verdict;

const SEEDS: u64 = 5;
const EPOCHS: usize = 5;
const CLASSES: usize = 4;
const MIN_MIOU: f64 = 0.55;
const RANDOM_BASELINE: f64 = 1.0 / CLASSES as f64;
const NOISE: f64 = 0.05;
const SEED_BUDGET_S: f64 = 15.0 * 60.0;

fn samples(seeds: std::ops::Range<u64>) -> Vec<Sample> {
    seeds
        .map(|s| {
            let scene = synth_generate(&SyntheticSceneSpec::toy(s)).unwrap();
            Sample {
                sweep: scene.sweep,
                gt: scene.gt,
            }
        })
        .collect()
}

struct Run {
    epoch_means: Vec<f64>,
    val_miou: f64,
}

fn train(objective: Objective, seed: u64, data: &[Sample], val: &[Sample]) -> Run {
    let net = Js3cNet::new(ModelConfig::toy(), seed).unwrap();
    let cfg = TrainConfig {
        epochs: EPOCHS,
        objective,
        seed,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(net, cfg, ClassWeights::from_samples(data, CLASSES)).unwrap();
    let epoch_means = (0..EPOCHS)
        .map(|e| mean_total(&trainer.train_epoch(data, e).unwrap()))
        .collect();
    let val_miou = evaluate(&trainer.net, val, false).unwrap().seg.miou;
    Run { epoch_means, val_miou }
}

/// Every epoch's mean total may exceed its predecessor by at most 5% of the
/// predecessor's magnitude.
fn monotone(means: &[f64]) -> bool {
    means.windows(2).all(|w| w[1] <= w[0] + NOISE * w[0].abs())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn run() -> Verdict {
    let data = samples(0..200);
    let val = samples(10_000..10_050);
    let mut joint = Vec::new();
    let mut single = Vec::new();
    let mut notes = Vec::new();
    let mut ok = true;
    let mut slowest = 0.0f64;
    for seed in 0..SEEDS {
        let start = Instant::now();
        let j = train(Objective::Joint, seed, &data, &val);
        let s = train(Objective::SegOnly, seed, &data, &val);
        let secs = start.elapsed().as_secs_f64();
        slowest = slowest.max(secs);
        let mono = monotone(&j.epoch_means);
        let good = j.val_miou >= MIN_MIOU && j.val_miou >= 2.0 * RANDOM_BASELINE;
        ok &= mono && good && secs < SEED_BUDGET_S;
        let means: Vec<String> = j.epoch_means.iter().map(|m| format!("{m:.3}")).collect();
        println!(
            "      seed {seed}: joint mIoU {:.4} (epoch losses {}), seg-only mIoU {:.4}, {secs:.0} s",
            j.val_miou,
            means.join(" "),
            s.val_miou
        );
        if !mono {
            notes.push(format!("seed {seed} loss not monotone"));
        }
        if !good {
            notes.push(format!("seed {seed} mIoU {:.4} below {MIN_MIOU}", j.val_miou));
        }
        joint.push(j.val_miou);
        single.push(s.val_miou);
    }
    let (mj, ms) = (median(joint), median(single));
    ok &= mj >= ms;
    let mut summary = format!(
        "{SEEDS} seeds, median val mIoU joint {mj:.4} vs segmentation-only {ms:.4}, slowest seed {slowest:.0} s"
    );
    if !notes.is_empty() {
        summary.push_str(&format!("; {}", notes.join(", ")));
    }
    Verdict::new(ok, summary)
}
