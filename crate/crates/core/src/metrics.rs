//! Confusion matrices and the segmentation / completion evaluation protocol.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::volume::{LabeledVolume, EMPTY, INVALID};

/// `(C+1) × (C+1)` counts, row = truth, column = prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    size: usize,
    counts: Vec<u64>,
    ignored: u64,
}

impl ConfusionMatrix {
    /// Matrix over labels `0..=num_classes`.
    pub fn new(num_classes: usize) -> Self {
        let size = num_classes + 1;
        Self {
            size,
            counts: vec![0; size * size],
            ignored: 0,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.size - 1
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        // out-of-range predictions are folded into the empty column
        let pred = if pred < self.size { pred } else { 0 };
        self.counts[truth * self.size + pred] += 1;
    }

    pub fn ignore(&mut self) {
        self.ignored += 1;
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.size + pred]
    }

    pub fn ignored(&self) -> u64 {
        self.ignored
    }

    pub fn counted(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds another matrix's counts (associative and commutative).
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.size != self.size {
            return Err(Error::structure("confusion matrices have different class counts"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.ignored += other.ignored;
        Ok(())
    }

    /// `(TP, FP, FN)` for label `c`.
    pub fn tp_fp_fn(&self, c: usize) -> (u64, u64, u64) {
        let tp = self.get(c, c);
        let col: u64 = (0..self.size).map(|t| self.get(t, c)).sum();
        let row: u64 = (0..self.size).map(|p| self.get(c, p)).sum();
        (tp, col - tp, row - tp)
    }

    /// IoU per label `1..=C`; `None` for classes absent from both truth and prediction.
    pub fn class_iou(&self) -> Vec<Option<f64>> {
        (1..self.size)
            .map(|c| {
                let (tp, fp, fn_) = self.tp_fp_fn(c);
                let denom = tp + fp + fn_;
                (denom > 0).then(|| tp as f64 / denom as f64)
            })
            .collect()
    }

    /// Mean IoU over present classes, rounded once from the exact rational mean when
    /// it fits in 128 bits.
    pub fn mean_iou(&self) -> f64 {
        let ratios: Vec<(u64, u64)> = (1..self.size)
            .map(|c| {
                let (tp, fp, fn_) = self.tp_fp_fn(c);
                (tp, tp + fp + fn_)
            })
            .filter(|&(_, d)| d > 0)
            .collect();
        mean_of_ratios(&ratios)
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Mean of `n/d` fractions; 0 for an empty list.
fn mean_of_ratios(ratios: &[(u64, u64)]) -> f64 {
    if ratios.is_empty() {
        return 0.0;
    }
    let exact = ratios.iter().try_fold((0u128, 1u128), |(num, den), &(n, d)| {
        let (n, d) = (n as u128, d as u128);
        let g = gcd(den, d);
        let l = (den / g).checked_mul(d)?;
        let num = num.checked_mul(l / den)?.checked_add(n.checked_mul(l / d)?)?;
        let r = gcd(num, l).max(1);
        Some((num / r, l / r))
    });
    match exact.and_then(|(num, den)| Some((num, den.checked_mul(ratios.len() as u128)?))) {
        Some((num, den)) => {
            let g = gcd(num, den).max(1);
            (num / g) as f64 / (den / g) as f64
        }
        None => ratios.iter().map(|&(n, d)| n as f64 / d as f64).sum::<f64>() / ratios.len() as f64,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassScores {
    /// IoU of classes `1..=C`, `None` where the class never occurs.
    pub per_class: Vec<Option<f64>>,
    pub miou: f64,
}

/// Per-point segmentation IoU. Points with truth label 0 are ignored.
pub fn seg_confusion(pred: &[u32], truth: &[u32], num_classes: usize) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() {
        return Err(Error::structure(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(num_classes);
    for (&p, &t) in pred.iter().zip(truth) {
        if t == 0 {
            cm.ignore();
            continue;
        }
        if t as usize > num_classes {
            return Err(Error::contract(format!("truth label {t} exceeds {num_classes} classes")));
        }
        cm.add(t as usize, p as usize);
    }
    Ok(cm)
}

pub fn seg_miou(pred: &[u32], truth: &[u32], num_classes: usize) -> Result<ClassScores> {
    let cm = seg_confusion(pred, truth, num_classes)?;
    Ok(ClassScores {
        per_class: cm.class_iou(),
        miou: cm.mean_iou(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompletionScores {
    pub precision: f64,
    pub recall: f64,
    pub iou: f64,
}

/// Geometry tolerance when comparing volumes, loose enough for specs stored as `f32`.
const SPEC_TOL: f64 = 1e-5;

fn check_same_spec(a: &LabeledVolume, b: &LabeledVolume) -> Result<()> {
    if !a.spec.approx_eq(&b.spec, SPEC_TOL) {
        return Err(Error::contract("prediction and ground truth use different volume specs"));
    }
    Ok(())
}

#[inline]
fn occupied(l: u8) -> bool {
    l != EMPTY && l != INVALID
}

/// Occupancy-only completion scores over cells that are valid in the ground truth.
/// A ratio with an empty denominator counts as 1 (nothing to get wrong).
pub fn sc_metrics(pred: &LabeledVolume, gt: &LabeledVolume) -> Result<CompletionScores> {
    check_same_spec(pred, gt)?;
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
        if g == INVALID {
            continue;
        }
        match (occupied(p), occupied(g)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |n: u64, d: u64| if d == 0 { 1.0 } else { n as f64 / d as f64 };
    Ok(CompletionScores {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        iou: ratio(tp, tp + fp + fn_),
    })
}

/// Confusion over valid cells, including the empty class in row/column 0.
pub fn ssc_confusion(pred: &LabeledVolume, gt: &LabeledVolume, num_classes: usize) -> Result<ConfusionMatrix> {
    check_same_spec(pred, gt)?;
    let mut cm = ConfusionMatrix::new(num_classes);
    for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
        if g == INVALID {
            cm.ignore();
            continue;
        }
        if g as usize > num_classes {
            return Err(Error::contract(format!("ground-truth label {g} exceeds {num_classes} classes")));
        }
        cm.add(g as usize, if p == INVALID { 0 } else { p as usize });
    }
    Ok(cm)
}

/// Semantic completion mIoU over classes `1..=C` (the empty class is not averaged).
pub fn ssc_miou(pred: &LabeledVolume, gt: &LabeledVolume, num_classes: usize) -> Result<ClassScores> {
    let cm = ssc_confusion(pred, gt, num_classes)?;
    Ok(ClassScores {
        per_class: cm.class_iou(),
        miou: cm.mean_iou(),
    })
}

/// Ordered metric name/value pairs, rendered as a text table or `key = value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub entries: Vec<(String, f64)>,
}

impl MetricsReport {
    pub fn push(&mut self, key: impl Into<String>, value: f64) {
        self.entries.push((key.into(), value));
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn push_scores(&mut self, prefix: &str, scores: &ClassScores) {
        self.push(format!("{prefix}.miou"), scores.miou);
        for (i, s) in scores.per_class.iter().enumerate() {
            if let Some(v) = s {
                self.push(format!("{prefix}.iou.{}", i + 1), *v);
            }
        }
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn to_table(&self) -> String {
        let width = self.entries.iter().map(|(k, _)| k.len()).max().unwrap_or(6).max(6);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>10}", "metric", "value");
        let _ = writeln!(s, "{}  {}", "-".repeat(width), "-".repeat(10));
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k:<width$}  {:>10.4}", v);
        }
        s
    }
}
