//! Training loop, per-step logging and evaluation.

use std::fmt::Write;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{lr_schedule, AdamConfig, ParamGrads, Tape};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::loss::inverse_sqrt_frequency;
use crate::metrics::{seg_confusion, ssc_confusion, ClassScores, CompletionScores, ConfusionMatrix, MetricsReport};
use crate::model::{GridTransform, Js3cNet, Mode, SegAugment};
use crate::volume::{LabeledVolume, INVALID};

/// One training or evaluation example.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Labeled sweep in the completion volume's frame.
    pub sweep: PointCloud,
    pub gt: LabeledVolume,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// Uncertainty-weighted segmentation + completion.
    Joint,
    /// Segmentation loss alone; the completion branch is never built.
    SegOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub objective: Objective,
    /// Samples whose gradients are averaged before each optimizer step.
    pub accumulate: usize,
    pub augment: bool,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 4,
            objective: Objective::Joint,
            accumulate: 1,
            augment: true,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

/// Losses of one sample. `l_complet` is 0 under [`Objective::SegOnly`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub l_seg: f64,
    pub l_complet: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub total: f64,
}

impl StepLog {
    pub fn header() -> &'static str {
        "step\tl_seg\tl_complet\tsigma1\tsigma2\ttotal"
    }

    pub fn line(&self) -> String {
        format!(
            "{}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}",
            self.step, self.l_seg, self.l_complet, self.sigma1, self.sigma2, self.total
        )
    }
}

/// Class weights for both cross-entropy terms.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassWeights {
    /// Indexed by `label - 1`.
    pub seg: Rc<Vec<f64>>,
    /// Indexed by volume label `0..=C`.
    pub completion: Rc<Vec<f64>>,
}

impl ClassWeights {
    pub fn uniform(num_classes: usize) -> Self {
        Self {
            seg: Rc::new(vec![1.0; num_classes]),
            completion: Rc::new(vec![1.0; num_classes + 1]),
        }
    }

    /// Inverse square-root frequencies over the training split.
    pub fn from_samples(samples: &[Sample], num_classes: usize) -> Self {
        let mut seg = vec![0u64; num_classes];
        let mut comp = vec![0u64; num_classes + 1];
        for s in samples {
            for &l in s.sweep.labels.iter().flatten() {
                if (1..=num_classes as u32).contains(&l) {
                    seg[l as usize - 1] += 1;
                }
            }
            for &l in &s.gt.labels {
                if (l as usize) <= num_classes {
                    comp[l as usize] += 1;
                }
            }
        }
        Self {
            seg: Rc::new(inverse_sqrt_frequency(&seg)),
            completion: Rc::new(inverse_sqrt_frequency(&comp)),
        }
    }
}

/// Segmentation targets: label `l ≥ 1` → class `l - 1`, label 0 ignored.
pub fn seg_targets(labels: &[u32], num_classes: usize) -> Result<Vec<Option<usize>>> {
    labels
        .iter()
        .map(|&l| match l {
            0 => Ok(None),
            l if l as usize <= num_classes => Ok(Some(l as usize - 1)),
            l => Err(Error::contract(format!("label {l} exceeds {num_classes} classes"))),
        })
        .collect()
}

/// Completion targets: volume labels, invalid cells ignored.
pub fn completion_targets(gt: &LabeledVolume) -> Vec<Option<usize>> {
    gt.labels.iter().map(|&l| (l != INVALID).then_some(l as usize)).collect()
}

pub struct Trainer {
    pub net: Js3cNet,
    pub cfg: TrainConfig,
    pub weights: ClassWeights,
    rng: ChaCha8Rng,
    pending: Option<ParamGrads>,
    pending_count: usize,
    step: u64,
}

impl Trainer {
    pub fn new(net: Js3cNet, cfg: TrainConfig, weights: ClassWeights) -> Result<Self> {
        if cfg.accumulate == 0 {
            return Err(Error::contract("gradient accumulation needs at least one sample"));
        }
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_a11);
        Ok(Self {
            net,
            cfg,
            weights,
            rng,
            pending: None,
            pending_count: 0,
            step: 0,
        })
    }

    /// Forward and backward on one sample; applies an optimizer step once `accumulate`
    /// samples have been seen.
    pub fn train_sample(&mut self, sample: &Sample, epoch: usize) -> Result<StepLog> {
        let spec = self.net.config().ssc_spec;
        let c = self.net.config().num_classes;
        let labels = sample
            .sweep
            .labels
            .as_ref()
            .ok_or_else(|| Error::contract("training sweeps must be labeled"))?;
        let (seg_aug, grid) = if self.cfg.augment {
            let square = spec.dims[0] == spec.dims[1];
            (SegAugment::sample(&mut self.rng), GridTransform::sample(&mut self.rng, square))
        } else {
            (SegAugment::identity(), GridTransform::default())
        };
        let positions = &sample.sweep.positions;
        let seg_pos = seg_aug.apply(positions);

        let mut tape = Tape::new();
        let store = self.net.store();
        let seg_t = Rc::new(seg_targets(labels, c)?);
        let (loss, l_complet) = match self.cfg.objective {
            Objective::SegOnly => {
                let out = self.net.forward_split(&mut tape, &seg_pos, positions, Mode::Infer)?;
                let l_seg = tape.weighted_ce(out.seg_logits, seg_t, self.weights.seg.clone())?;
                (l_seg, None)
            }
            Objective::Joint => {
                let ssc_pos = grid.apply_points(positions, &spec)?;
                let gt = grid.apply_volume(&sample.gt)?;
                let out = self.net.forward_split(&mut tape, &seg_pos, &ssc_pos, Mode::Train)?;
                let l_seg = tape.weighted_ce(out.seg_logits, seg_t, self.weights.seg.clone())?;
                let refined = out.refined.expect("train mode");
                let l_c = tape.weighted_ce(refined, Rc::new(completion_targets(&gt)), self.weights.completion.clone())?;
                let (s1, s2) = self.net.log_vars();
                let (s1, s2) = (tape.param(store, s1), tape.param(store, s2));
                let total = tape.uncertainty(l_seg, l_c, s1, s2)?;
                (total, Some((l_seg, l_c)))
            }
        };
        let total = tape.value(loss).item();
        let (l_seg, l_c) = match l_complet {
            Some((a, b)) => (tape.value(a).item(), tape.value(b).item()),
            None => (total, 0.0),
        };
        if !total.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss at step {}", self.step)));
        }
        let grads = tape.backward(loss)?.param_grads(store);
        if !grads.is_finite() {
            return Err(Error::Numerical(format!("non-finite gradient at step {}", self.step)));
        }
        match self.pending.as_mut() {
            Some(p) => p.accumulate(&grads),
            None => self.pending = Some(grads),
        }
        self.pending_count += 1;
        if self.pending_count == self.cfg.accumulate {
            self.flush(epoch)?;
        }
        let (sigma1, sigma2) = self.net.sigmas();
        let log = StepLog {
            step: self.step,
            l_seg,
            l_complet: l_c,
            sigma1,
            sigma2,
            total,
        };
        self.step += 1;
        Ok(log)
    }

    /// Applies any partially accumulated gradient.
    pub fn flush(&mut self, epoch: usize) -> Result<()> {
        if let Some(mut g) = self.pending.take() {
            g.scale(1.0 / self.pending_count as f64);
            let lr = lr_schedule(epoch);
            self.net.store_mut().adam_step(&g, lr, &self.cfg.adam)?;
        }
        self.pending_count = 0;
        Ok(())
    }

    /// One pass over `samples` in a seeded shuffled order. Returns the per-sample logs.
    pub fn train_epoch(&mut self, samples: &[Sample], epoch: usize) -> Result<Vec<StepLog>> {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        for i in (1..order.len()).rev() {
            let j = self.rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut logs = Vec::with_capacity(samples.len());
        for i in order {
            logs.push(self.train_sample(&samples[i], epoch)?);
        }
        self.flush(epoch)?;
        Ok(logs)
    }
}

/// Mean of `total` over a set of step logs.
pub fn mean_total(logs: &[StepLog]) -> f64 {
    logs.iter().map(|l| l.total).sum::<f64>() / logs.len().max(1) as f64
}

/// Validation scores of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub seg: ClassScores,
    pub completion: Option<(CompletionScores, ClassScores)>,
}

impl Evaluation {
    pub fn report(&self) -> MetricsReport {
        let mut r = MetricsReport::default();
        r.push_scores("seg", &self.seg);
        if let Some((sc, ssc)) = &self.completion {
            r.push("sc.precision", sc.precision);
            r.push("sc.recall", sc.recall);
            r.push("sc.iou", sc.iou);
            r.push_scores("ssc", ssc);
        }
        r
    }
}

/// Segmentation mIoU over all samples and, if `completion`, pooled completion scores.
pub fn evaluate(net: &Js3cNet, samples: &[Sample], completion: bool) -> Result<Evaluation> {
    let c = net.config().num_classes;
    let mut seg_cm = ConfusionMatrix::new(c);
    let mut ssc_cm = ConfusionMatrix::new(c);
    let (mut tp, mut fp, mut fn_) = (0f64, 0f64, 0f64);
    for s in samples {
        let truth = s
            .sweep
            .labels
            .as_ref()
            .ok_or_else(|| Error::contract("evaluation sweeps must be labeled"))?;
        let pred = net.predict_labels(&s.sweep.positions)?;
        seg_cm.merge(&seg_confusion(&pred, truth, c)?)?;
        if completion {
            let (_, vol) = net.predict_completion(&s.sweep.positions)?;
            ssc_cm.merge(&ssc_confusion(&vol, &s.gt, c)?)?;
            for (&p, &g) in vol.labels.iter().zip(&s.gt.labels) {
                if g == INVALID {
                    continue;
                }
                let (po, go) = (p != 0 && p != INVALID, g != 0);
                tp += f64::from(u8::from(po && go));
                fp += f64::from(u8::from(po && !go));
                fn_ += f64::from(u8::from(!po && go));
            }
        }
    }
    let ratio = |n: f64, d: f64| if d == 0.0 { 1.0 } else { n / d };
    let completion = completion.then(|| {
        (
            CompletionScores {
                precision: ratio(tp, tp + fp),
                recall: ratio(tp, tp + fn_),
                iou: ratio(tp, tp + fp + fn_),
            },
            ClassScores {
                per_class: ssc_cm.class_iou(),
                miou: ssc_cm.mean_iou(),
            },
        )
    });
    Ok(Evaluation {
        seg: ClassScores {
            per_class: seg_cm.class_iou(),
            miou: seg_cm.mean_iou(),
        },
        completion,
    })
}

/// Renders step logs as a tab-separated table with a header line.
pub fn format_log(logs: &[StepLog]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", StepLog::header());
    for l in logs {
        let _ = writeln!(s, "{}", l.line());
    }
    s
}
