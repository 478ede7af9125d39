//! Disposability of the completion branch and byte-level reproducibility of the CLI.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use ssc_core::autodiff::{write_checkpoint, Tape};
use ssc_core::datagen::{read_labels, synth_generate, write_scan, SyntheticSceneSpec};
use ssc_core::model::{Js3cNet, Mode, ModelConfig};
use ssc_core::train::{ClassWeights, Sample, TrainConfig, Trainer};

use crate::Verdict;

fn ssc(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ssc"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scene(seed: u64) -> Sample {
    let sc = synth_generate(&SyntheticSceneSpec::toy(seed)).unwrap();
    Sample {
        sweep: sc.sweep,
        gt: sc.gt,
    }
}

/// A toy network after a few joint steps, so every branch has moved off its init.
fn trained_net() -> Js3cNet {
    let data: Vec<Sample> = (500..506).map(scene).collect();
    let net = Js3cNet::new(ModelConfig::toy(), 7).unwrap();
    let mut t = Trainer::new(net, TrainConfig::default(), ClassWeights::from_samples(&data, 4)).unwrap();
    t.train_epoch(&data, 0).unwrap();
    t.net
}

fn log_value(log: &str, key: &str) -> Option<usize> {
    log.lines()
        .find_map(|l| l.strip_prefix(key)?.trim_start().strip_prefix('=')?.trim().parse().ok())
}

pub fn disposability() -> Verdict {
    let net = trained_net();
    let mut identical = 0;
    let mut infer_clean = 0;
    for seed in 0..10 {
        let positions = scene(900 + seed).sweep.positions;
        let mut t1 = Tape::new();
        let train = net.forward(&mut t1, &positions, Mode::Train).unwrap();
        let mut t2 = Tape::new();
        let infer = net.forward(&mut t2, &positions, Mode::Infer).unwrap();
        let bits = |t: &Tape, v| t.value(v).as_slice().iter().map(|x: &f64| x.to_bits()).collect::<Vec<_>>();
        if bits(&t1, train.seg_logits) == bits(&t2, infer.seg_logits) && train.stats.ssc_volumes == 1 {
            identical += 1;
        }
        if infer.coarse.is_none() && infer.refined.is_none() && infer.stats.ssc_volumes == 0 && infer.stats.pvi_graphs == 0 {
            infer_clean += 1;
        }
    }

    let cli = (|| -> Result<String, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let d = dir.path();
        fs::write(d.join("config.txt"), net.config().to_kv()).map_err(|e| e.to_string())?;
        let ck = d.join("model.ssck");
        fs::write(&ck, write_checkpoint(net.store())).map_err(|e| e.to_string())?;
        let mut agree = 0;
        let mut counters = 0;
        for seed in 0..3 {
            let scan = d.join(format!("scan{seed}.bin"));
            fs::write(&scan, write_scan(&scene(950 + seed).sweep)).map_err(|e| e.to_string())?;
            let mut labels = Vec::new();
            let mut logs = Vec::new();
            for mode in ["infer", "train"] {
                let out = d.join(format!("{mode}{seed}.label"));
                ssc(&["infer", "--checkpoint", s(&ck), "--scan", s(&scan), "--out", s(&out), "--mode", mode])?;
                labels.push(read_labels(&fs::read(&out).unwrap(), None).unwrap());
                let mut log = out.into_os_string();
                log.push(".log");
                logs.push(fs::read_to_string(PathBuf::from(log)).unwrap());
            }
            agree += usize::from(labels[0] == labels[1]);
            let infer_zero = ["ssc_volumes", "pvi_graphs", "voxel_centers"]
                .iter()
                .all(|k| log_value(&logs[0], k) == Some(0));
            counters += usize::from(infer_zero && log_value(&logs[1], "ssc_volumes") == Some(1));
        }
        if agree == 3 && counters == 3 {
            Ok("CLI labels agree across modes on 3 scans, infer log counters all 0".into())
        } else {
            Err(format!("CLI labels agree {agree}/3, counters as expected {counters}/3"))
        }
    })();

    let summary = format!(
        "segmentation logits bitwise equal {identical}/10, infer builds no completion or graph {infer_clean}/10; {}",
        cli.as_ref().unwrap_or_else(|e| e)
    );
    Verdict::new(identical == 10 && infer_clean == 10 && cli.is_ok(), summary)
}

fn strip_timing(bytes: &[u8]) -> Vec<u8> {
    match std::str::from_utf8(bytes) {
        Ok(text) => text
            .lines()
            .filter(|l| !l.trim_start().starts_with("timing."))
            .collect::<Vec<_>>()
            .join("\n")
            .into_bytes(),
        Err(_) => bytes.to_vec(),
    }
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let bytes = fs::read(&p).unwrap();
                let bytes = if p.extension().is_some_and(|e| e == "log") {
                    strip_timing(&bytes)
                } else {
                    bytes
                };
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    out
}

/// Every subcommand, run in a fresh directory.
fn pipeline(root: &Path) -> Result<(), String> {
    let data = root.join("data");
    let run = root.join("run");
    let ck = run.join("checkpoint-002.ssck");
    let pred = root.join("pred.label");
    let pred_vol = root.join("pred.sscv");
    ssc(&["synth", "--out", s(&data), "--scenes", "6", "--seed", "3"])?;
    ssc(&["gen-gt", "--sequence", s(&data), "--out", s(&root.join("gt")), "--window", "3", "--volume", "toy"])?;
    ssc(&[
        "train", "--data", s(&data), "--val", s(&data), "--out", s(&run), "--epochs", "2", "--seed", "5",
    ])?;
    ssc(&[
        "train", "--data", s(&data), "--out", s(&root.join("run-seg")), "--epochs", "1", "--seed", "5", "--objective",
        "seg-only", "--accumulate", "2",
    ])?;
    ssc(&[
        "infer",
        "--checkpoint",
        s(&ck),
        "--scan",
        s(&data.join("velodyne/000000.bin")),
        "--out",
        s(&pred),
        "--mode",
        "train",
        "--completion",
        s(&pred_vol),
        "--votes",
        "3",
        "--seed",
        "1",
    ])?;
    ssc(&[
        "eval", "--checkpoint", s(&ck), "--data", s(&data), "--completion", "--out", s(&root.join("report.txt")),
    ])?;
    ssc(&[
        "eval",
        "--pred",
        s(&pred),
        "--truth",
        s(&data.join("labels/000000.label")),
        "--pred-volume",
        s(&pred_vol),
        "--gt-volume",
        s(&data.join("voxels/000000.sscv")),
        "--out",
        s(&root.join("direct.txt")),
    ])?;
    Ok(())
}

pub fn determinism() -> Verdict {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    for root in [&a, &b] {
        fs::create_dir_all(root).unwrap();
        if let Err(e) = pipeline(root) {
            return Verdict::new(false, format!("command failed: {e}"));
        }
    }
    let (ta, tb) = (tree(&a), tree(&b));
    let names_match = ta.iter().map(|f| &f.0).eq(tb.iter().map(|f| &f.0));
    let differing: Vec<String> = ta
        .iter()
        .zip(&tb)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    let bytes: usize = ta.iter().map(|f| f.1.len()).sum();
    let pass = names_match && differing.is_empty() && !ta.is_empty();
    let mut summary = format!(
        "synth, gen-gt, train (joint and segmentation-only), infer with votes, eval: {} files, {bytes} bytes compared",
        ta.len()
    );
    if !names_match {
        summary.push_str("; file sets differ");
    }
    if !differing.is_empty() {
        summary.push_str(&format!("; differing: {}", differing.join(", ")));
    }
    Verdict::new(pass, summary)
}
