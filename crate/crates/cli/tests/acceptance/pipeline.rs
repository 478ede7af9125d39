//! Ground-truth generation against an independent merge / vote / carve implementation,
//! grid traversal against a densely sampled segment, and the volume file round trip.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssc_core::datagen::{generate_gt, read_volume, traverse, write_volume, InMemorySequence};
use ssc_core::geometry::Vec3;
use ssc_core::{LabeledVolume, PointCloud, Pose, VolumeSpec};

use crate::Verdict;

type Mat4 = [[f64; 4]; 4];

fn to_mat(p: &Pose) -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for r in 0..3 {
        m[r][..3].copy_from_slice(&p.rotation[r]);
        m[r][3] = p.translation[r];
    }
    m[3][3] = 1.0;
    m
}

fn mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            m[r][c] = (0..4).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    m
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(a: &Mat4) -> Mat4 {
    let mut m = *a;
    let mut inv = [[0.0; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..4 {
        let piv = (col..4).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, piv);
        inv.swap(col, piv);
        let d = m[col][col];
        for c in 0..4 {
            m[col][c] /= d;
            inv[col][c] /= d;
        }
        for r in 0..4 {
            if r != col {
                let f = m[r][col];
                for c in 0..4 {
                    m[r][c] -= f * m[col][c];
                    inv[r][c] -= f * inv[col][c];
                }
            }
        }
    }
    inv
}

fn apply(m: &Mat4, p: &Vec3) -> Vec3 {
    let mut out = [0.0; 3];
    for (r, o) in out.iter_mut().enumerate() {
        *o = m[r][0] * p[0] + m[r][1] * p[1] + m[r][2] * p[2] + m[r][3];
    }
    out
}

fn euler(rng: &mut ChaCha8Rng, yaw: f64, tilt: f64, shift: [f64; 3]) -> Pose {
    let (a, b, c) = (rng.gen_range(-yaw..yaw), rng.gen_range(-tilt..tilt), rng.gen_range(-tilt..tilt));
    let rz = [[a.cos(), -a.sin(), 0.0], [a.sin(), a.cos(), 0.0], [0.0, 0.0, 1.0]];
    let ry = [[b.cos(), 0.0, b.sin()], [0.0, 1.0, 0.0], [-b.sin(), 0.0, b.cos()]];
    let rx = [[1.0, 0.0, 0.0], [0.0, c.cos(), -c.sin()], [0.0, c.sin(), c.cos()]];
    let m3 = |x: [[f64; 3]; 3], y: [[f64; 3]; 3]| {
        let mut o = [[0.0; 3]; 3];
        for r in 0..3 {
            for col in 0..3 {
                o[r][col] = (0..3).map(|k| x[r][k] * y[k][col]).sum();
            }
        }
        o
    };
    let t = [
        rng.gen_range(-shift[0]..shift[0]),
        rng.gen_range(-shift[1]..shift[1]),
        rng.gen_range(-shift[2]..shift[2]),
    ];
    Pose::new(m3(m3(rz, ry), rx), t, 1e-9).unwrap()
}

fn cell(spec: &VolumeSpec, p: &Vec3) -> [i64; 3] {
    let mut c = [0; 3];
    for a in 0..3 {
        c[a] = ((p[a] - spec.origin[a]) / spec.voxel_size).floor() as i64;
    }
    c
}

fn inside(spec: &VolumeSpec, c: [i64; 3]) -> bool {
    (0..3).all(|a| c[a] >= 0 && c[a] < spec.dims[a] as i64)
}

/// Length of the segment `from → to` inside the closed cell `c`.
fn slab_length(spec: &VolumeSpec, from: &Vec3, to: &Vec3, c: [i64; 3]) -> f64 {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for a in 0..3 {
        let lo = spec.origin[a] + c[a] as f64 * spec.voxel_size;
        let hi = lo + spec.voxel_size;
        let d = to[a] - from[a];
        if d == 0.0 {
            if from[a] < lo || from[a] > hi {
                return 0.0;
            }
        } else {
            let (ta, tb) = ((lo - from[a]) / d, (hi - from[a]) / d);
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
    }
    let len = ((0..3).map(|a| (to[a] - from[a]).powi(2)).sum::<f64>()).sqrt();
    (t1 - t0).max(0.0) * len
}

struct MiniSequence {
    seq: InMemorySequence,
    center: usize,
    window: usize,
}

fn mini_sequence(rng: &mut ChaCha8Rng) -> MiniSequence {
    let frames = rng.gen_range(3..=7);
    let calib = euler(rng, 0.3, 0.05, [0.2, 0.2, 0.1]);
    let mut clouds = Vec::new();
    let mut poses = Vec::new();
    for _ in 0..frames {
        let n = rng.gen_range(20..=60);
        let pts: Vec<Vec3> = (0..n)
            .map(|_| [rng.gen_range(-1.6..1.6), rng.gen_range(-1.6..1.6), rng.gen_range(-0.8..0.8)])
            .collect();
        let labels = (0..n).map(|_| if rng.gen_bool(0.15) { 0 } else { rng.gen_range(1..=3) }).collect();
        clouds.push(PointCloud::new(pts).with_labels(labels).unwrap());
        poses.push(euler(rng, 0.4, 0.1, [0.4, 0.4, 0.1]));
    }
    MiniSequence {
        center: rng.gen_range(0..frames),
        window: rng.gen_range(1..=frames + 1),
        seq: InMemorySequence {
            frames: clouds,
            poses,
            calib,
        },
    }
}

/// Merge, vote and carve written directly from the definitions: frames `j` within the
/// window are mapped by `Tr⁻¹ · P_c⁻¹ · P_j · Tr`; every cell a ray crosses with positive
/// length, other than its endpoint cell, is free.
fn oracle_gt(m: &MiniSequence, spec: &VolumeSpec) -> LabeledVolume {
    let n = m.seq.frames.len();
    let lo = m.center.saturating_sub((m.window - 1) / 2);
    let hi = (m.center + m.window / 2).min(n - 1);
    let tr = to_mat(&m.seq.calib);
    let pc_inv = invert(&to_mat(&m.seq.poses[m.center]));
    let mut votes: BTreeMap<usize, BTreeMap<u32, usize>> = BTreeMap::new();
    let mut free = vec![false; spec.num_cells()];
    let linear = |c: [i64; 3]| (c[0] + spec.dims[0] as i64 * (c[1] + spec.dims[1] as i64 * c[2])) as usize;
    for j in lo..=hi {
        let t = mul(&mul(&mul(&invert(&tr), &pc_inv), &to_mat(&m.seq.poses[j])), &tr);
        let origin = apply(&t, &[0.0; 3]);
        let cloud = &m.seq.frames[j];
        let labels = cloud.labels.as_ref().unwrap();
        for (p, &l) in cloud.positions.iter().zip(labels) {
            let q = apply(&t, p);
            let end = cell(spec, &q);
            if inside(spec, end) {
                *votes.entry(linear(end)).or_default().entry(l).or_default() += 1;
            }
            for idx in 0..spec.num_cells() {
                let c = [
                    (idx % spec.dims[0]) as i64,
                    ((idx / spec.dims[0]) % spec.dims[1]) as i64,
                    (idx / (spec.dims[0] * spec.dims[1])) as i64,
                ];
                if c != end && slab_length(spec, &origin, &q, c) > 0.0 {
                    free[idx] = true;
                }
            }
        }
    }
    let mut out = vec![255u8; spec.num_cells()];
    for (idx, o) in out.iter_mut().enumerate() {
        if let Some(counts) = votes.get(&idx) {
            let best = counts
                .iter()
                .filter(|(l, _)| **l != 0)
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)));
            *o = best.map_or(255, |(l, _)| *l as u8);
        } else if free[idx] {
            *o = 0;
        }
    }
    LabeledVolume::new(*spec, out).unwrap()
}

fn gt_oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x67);
    let spec = VolumeSpec::new([-1.0, -1.0, -0.5], 0.25, [8, 8, 4]).unwrap();
    let mut differing = 0;
    let mut cells_checked = 0;
    let mut census = [0usize; 3];
    for _ in 0..20 {
        let m = mini_sequence(&mut rng);
        let got = generate_gt(&m.seq, m.center, m.window, &spec).unwrap();
        let want = oracle_gt(&m, &spec);
        differing += got.labels.iter().zip(&want.labels).filter(|(a, b)| a != b).count();
        cells_checked += want.labels.len();
        for &l in &want.labels {
            census[match l {
                0 => 0,
                255 => 2,
                _ => 1,
            }] += 1;
        }
    }
    (
        differing == 0,
        format!(
            "gt: 20 sequences, {differing}/{cells_checked} cells differ (oracle has {} empty, {} labeled, {} invalid)",
            census[0], census[1], census[2]
        ),
    )
}

/// The traversal must contain every sampled cell, and any cell it adds beyond the samples
/// must be a sliver shorter than the sample spacing.
fn ray_oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a1);
    let spec = VolumeSpec::new([-3.0, -3.0, -1.0], 0.2, [30, 30, 10]).unwrap();
    let mut exact = 0;
    let mut violations = 0;
    let mut slivers = 0;
    for _ in 0..100 {
        let mut pt = || [rng.gen_range(-3.5..3.5), rng.gen_range(-3.5..3.5), rng.gen_range(-1.2..1.2)];
        let (from, to) = (pt(), pt());
        let cells = traverse(&from, &to, &spec);
        let connected = cells
            .windows(2)
            .all(|w| (0..3).map(|a| (w[1][a] - w[0][a]).abs()).sum::<i64>() == 1);
        let walked: HashSet<[i64; 3]> = cells.iter().copied().collect();

        let len = ((0..3).map(|a| (to[a] - from[a]).powi(2)).sum::<f64>()).sqrt();
        let step = spec.voxel_size / 200.0;
        let samples = (len / step).ceil().max(1.0) as usize;
        let mut sampled: HashSet<[i64; 3]> = HashSet::new();
        for j in 0..samples {
            let t = j as f64 / samples as f64;
            sampled.insert(cell(&spec, &[
                from[0] + t * (to[0] - from[0]),
                from[1] + t * (to[1] - from[1]),
                from[2] + t * (to[2] - from[2]),
            ]));
        }
        sampled.insert(cell(&spec, &to));

        let missing = sampled.difference(&walked).count();
        let extra: Vec<_> = walked.difference(&sampled).collect();
        let thin = extra.iter().all(|c| slab_length(&spec, &from, &to, **c) < step);
        if extra.is_empty() && missing == 0 {
            exact += 1;
        }
        slivers += extra.len();
        if missing > 0 || !thin || !connected || cells.len() != walked.len() {
            violations += 1;
        }
    }
    (
        violations == 0,
        format!("rays: 100 random, {exact} identical sets, {slivers} sub-sample slivers, {violations} violations"),
    )
}

fn sscv_round_trip() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x55c);
    let mut ok = 0;
    for _ in 0..50 {
        let dims = [rng.gen_range(1..=12), rng.gen_range(1..=12), rng.gen_range(1..=6)];
        let origin = [
            rng.gen_range(-80..80) as f64 / 8.0,
            rng.gen_range(-80..80) as f64 / 8.0,
            rng.gen_range(-16..16) as f64 / 8.0,
        ];
        let spec = VolumeSpec::new(origin, rng.gen_range(1..=16) as f64 / 32.0, dims).unwrap();
        let labels = (0..spec.num_cells())
            .map(|_| if rng.gen_bool(0.2) { 255 } else { rng.gen_range(0..20) })
            .collect();
        let vol = LabeledVolume::new(spec, labels).unwrap();
        let bytes = write_volume(&vol);
        let back = read_volume(&bytes).unwrap();
        if back == vol && write_volume(&back) == bytes {
            ok += 1;
        }
    }
    (ok == 50, format!("volume files: {ok}/50 bitwise round trips"))
}

pub fn run() -> Verdict {
    let parts = [gt_oracle(), ray_oracle(), sscv_round_trip()];
    Verdict::new(
        parts.iter().all(|p| p.0),
        parts.iter().map(|p| p.1.as_str()).collect::<Vec<_>>().join("; "),
    )
}
