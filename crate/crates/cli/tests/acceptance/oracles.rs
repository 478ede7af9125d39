//! Kernel-level oracles: sparse convolution, the uncertainty objective, kNN, metrics and
//! the interaction module.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssc_core::autodiff::{ParamStore, Tape};
use ssc_core::dense::{conv3d, ConvGeom};
use ssc_core::geometry::Vec3;
use ssc_core::loss::{uncertainty_dsigma, uncertainty_loss, uncertainty_loss_log_var};
use ssc_core::metrics::{sc_metrics, seg_miou};
use ssc_core::pvi::{centers_from_logits, gcn_refine, knn_brute_force, knn_query, NeighborGraph, PviParams, RefineInputs};
use ssc_core::sparse::CoordSet;
use ssc_core::sparse_conv::{build_rulebook, submanifold_conv};
use ssc_core::{LabeledVolume, Matrix, VolumeSpec};

use crate::gradients::rand_mat;
use crate::Verdict;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Submanifold convolution against a zero-filled dense convolution read at the active
/// sites, and each rulebook against an explicit scan of all site pairs.
pub fn sparse_conv() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5c0);
    let mut worst = 0.0f64;
    let mut count_mismatches = 0;
    let mut total_rules = 0usize;
    let mut cases = 0;
    for k in [3usize, 5] {
        for _ in 0..100 {
            let dims = [rng.gen_range(1..=6), rng.gen_range(1..=6), rng.gen_range(1..=6)];
            let density = rng.gen_range(0.05..0.7);
            let shift = [rng.gen_range(-20..20), rng.gen_range(-20..20), rng.gen_range(-20..20)];
            let mut local = Vec::new();
            for z in 0..dims[2] {
                for y in 0..dims[1] {
                    for x in 0..dims[0] {
                        if rng.gen_bool(density) {
                            local.push([x, y, z]);
                        }
                    }
                }
            }
            if local.is_empty() {
                local.push([0, 0, 0]);
            }
            local.shuffle(&mut rng);
            let coords: Vec<[i64; 3]> = local
                .iter()
                .map(|c| [c[0] as i64 + shift[0], c[1] as i64 + shift[1], c[2] as i64 + shift[2]])
                .collect();
            let set = CoordSet::new(coords.clone()).unwrap();
            let rb = build_rulebook(&set, k).unwrap();

            let r = (k / 2) as i64;
            for o in 0..k * k * k {
                let d = [o as i64 % k as i64 - r, (o as i64 / k as i64) % k as i64 - r, o as i64 / (k * k) as i64 - r];
                let mut brute: Vec<(usize, usize)> = Vec::new();
                for (j, cj) in coords.iter().enumerate() {
                    for (i, ci) in coords.iter().enumerate() {
                        if (0..3).all(|a| ci[a] == cj[a] + d[a]) {
                            brute.push((i, j));
                        }
                    }
                }
                let mut got = rb.rules(o).to_vec();
                got.sort_by_key(|&(i, j)| (j, i));
                if got != brute {
                    count_mismatches += 1;
                }
                total_rules += brute.len();
            }

            let (fin, fout) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
            let x = rand_mat(&mut rng, coords.len(), fin);
            let w = rand_mat(&mut rng, k * k * k * fin, fout);
            let b = rand_mat(&mut rng, 1, fout);
            let sparse = submanifold_conv(&x, &w, &b, &rb).unwrap();

            let n = dims[0] * dims[1] * dims[2];
            let linear = |c: &[usize; 3]| c[0] + dims[0] * (c[1] + dims[1] * c[2]);
            let mut dense_in = Matrix::zeros(n, fin);
            for (s, c) in local.iter().enumerate() {
                dense_in.row_mut(linear(c)).copy_from_slice(x.row(s));
            }
            let geom = ConvGeom {
                dims,
                kernel: k,
                stride: 1,
                padding: k / 2,
            };
            let dense = conv3d(&dense_in, &w, &b, &geom).unwrap();
            for (s, c) in local.iter().enumerate() {
                for (a, e) in sparse.row(s).iter().zip(dense.row(linear(c))) {
                    worst = worst.max(rel(*a, *e));
                }
            }
            cases += 1;
        }
    }
    let pass = worst <= 1e-6 && count_mismatches == 0;
    Verdict::new(
        pass,
        format!(
            "{cases} instances (k = 3, 5), max rel diff {worst:.2e}, {total_rules} brute-force rules, {count_mismatches} rulebook mismatches"
        ),
    )
}

/// Closed form, stationary point and the unit-σ half sum.
pub fn uncertainty() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x2e9);
    let mut notes = Vec::new();

    let fixture = uncertainty_loss(0.5, 2.0, 1.0, 2.0);
    let fixture_err = (fixture - (0.25 + 0.25 + std::f64::consts::LN_2)).abs();
    let mut closed = fixture_err;
    for _ in 0..1000 {
        let (l1, l2) = (rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0));
        let (s1, s2): (f64, f64) = (rng.gen_range(0.2..3.0), rng.gen_range(0.2..3.0));
        let analytic = 0.5 * (l1 / (s1 * s1) + l2 / (s2 * s2)) + (s1 * s2).ln();
        closed = closed.max((uncertainty_loss(l1, l2, s1, s2) - analytic).abs());
        let (v1, v2) = ((s1 * s1).ln(), (s2 * s2).ln());
        closed = closed.max((uncertainty_loss_log_var(l1, l2, v1, v2) - analytic).abs());
        let mut t = Tape::new();
        let vars: Vec<_> = [l1, l2, v1, v2].iter().map(|v| t.leaf(Matrix::scalar(*v))).collect();
        let out = t.uncertainty(vars[0], vars[1], vars[2], vars[3]).unwrap();
        closed = closed.max((t.value(out).item() - analytic).abs());
    }
    notes.push(format!("closed-form max abs err {closed:.1e}"));

    // Plain gradient descent on σ, then on s = log σ² through the tape.
    let mut stationary = 0.0f64;
    let mut targets = vec![(0.5, 2.0)];
    targets.extend((0..20).map(|_| (rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0))));
    for &(l1, l2) in &targets {
        let (mut s1, mut s2) = (1.0f64, 1.0f64);
        for _ in 0..20_000 {
            s1 -= 0.01 * uncertainty_dsigma(l1, s1);
            s2 -= 0.01 * uncertainty_dsigma(l2, s2);
        }
        stationary = stationary.max((s1 * s1 - l1).abs()).max((s2 * s2 - l2).abs());

        let (mut v1, mut v2) = (0.0f64, 0.0f64);
        for _ in 0..2_000 {
            let mut t = Tape::new();
            let a = t.constant(Matrix::scalar(l1));
            let b = t.constant(Matrix::scalar(l2));
            let (p1, p2) = (t.leaf(Matrix::scalar(v1)), t.leaf(Matrix::scalar(v2)));
            let loss = t.uncertainty(a, b, p1, p2).unwrap();
            let g = t.backward(loss).unwrap();
            v1 -= 0.1 * g.get(p1).item();
            v2 -= 0.1 * g.get(p2).item();
        }
        stationary = stationary.max((v1.exp() - l1).abs()).max((v2.exp() - l2).abs());
    }
    notes.push(format!("max |σ² − L| {stationary:.1e} over {} loss pairs", targets.len()));

    let mut half_sum_exact = true;
    for _ in 0..1000 {
        let (l1, l2) = (rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0));
        let half = 0.5 * l1 + 0.5 * l2;
        half_sum_exact &= uncertainty_loss(l1, l2, 1.0, 1.0) == half;
        half_sum_exact &= uncertainty_loss_log_var(l1, l2, 0.0, 0.0) == half;
        let mut t = Tape::new();
        let vars: Vec<_> = [l1, l2, 0.0, 0.0].iter().map(|v| t.leaf(Matrix::scalar(*v))).collect();
        let out = t.uncertainty(vars[0], vars[1], vars[2], vars[3]).unwrap();
        half_sum_exact &= t.value(out).item() == half;
    }
    notes.push(format!("unit-σ half sum exact: {half_sum_exact}"));

    let pass = closed <= 1e-12 && stationary <= 1e-3 && half_sum_exact;
    Verdict::new(pass, notes.join(", "))
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, lattice: bool) -> Vec<Vec3> {
    (0..n)
        .map(|_| {
            if lattice {
                [
                    rng.gen_range(-3..=3) as f64 * 0.5,
                    rng.gen_range(-3..=3) as f64 * 0.5,
                    rng.gen_range(-1..=1) as f64 * 0.5,
                ]
            } else {
                [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0), rng.gen_range(-1.0..1.0)]
            }
        })
        .collect()
}

/// Grid kNN against the exhaustive scan. Half the instances sit on a coarse lattice so
/// that equal distances are common.
pub fn knn() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4e4e);
    let mut mismatches = 0;
    let mut tie_instances = 0;
    for inst in 0..50 {
        let lattice = inst % 2 == 1;
        let n = rng.gen_range(1..=400);
        let points = random_points(&mut rng, n, lattice);
        let m = rng.gen_range(1..=60);
        let centers = random_points(&mut rng, m, lattice);
        let k = rng.gen_range(1..=n.min(16));
        let fast = knn_query(&centers, &points, k).unwrap();
        let brute = knn_brute_force(&centers, &points, k).unwrap();
        let same_ids = fast.neighbor_ids == brute.neighbor_ids;
        let same_dist = fast.distances.len() == brute.distances.len()
            && fast.distances.iter().zip(&brute.distances).all(|(a, b)| a.to_bits() == b.to_bits());
        if !(same_ids && same_dist && fast.k == k) {
            mismatches += 1;
        }
        if brute.distances.windows(2).any(|w| w[0] == w[1]) {
            tie_instances += 1;
        }
    }
    Verdict::new(
        mismatches == 0,
        format!("50 instances ({tie_instances} with tied distances), {mismatches} mismatches in ids or distance bits"),
    )
}

/// Mean IoU by explicit TP/FP/FN counting, summed as one integer fraction.
fn counted_miou(pred: &[u32], truth: &[u32], classes: u32) -> f64 {
    let mut ious = Vec::new();
    for c in 1..=classes {
        let tp = pred.iter().zip(truth).filter(|(p, t)| **p == c && **t == c).count();
        let fp = pred.iter().zip(truth).filter(|(p, t)| **p == c && **t != c).count();
        let fn_ = pred.iter().zip(truth).filter(|(p, t)| **p != c && **t == c).count();
        if tp + fp + fn_ > 0 {
            ious.push((tp, tp + fp + fn_));
        }
    }
    let den: usize = ious.iter().map(|(_, d)| d).product();
    let num: usize = ious.iter().map(|(n, d)| n * den / d).sum();
    num as f64 / (den * ious.len()) as f64
}

pub fn metrics() -> Verdict {
    let (pred, truth) = ([1, 2, 2, 2], [1, 1, 2, 2]);
    let seg = seg_miou(&pred, &truth, 2).unwrap();
    let hand = counted_miou(&pred, &truth, 2);
    let seg_ok = seg.miou == 7.0 / 12.0 && hand == 7.0 / 12.0;

    let spec = VolumeSpec::new([0.0; 3], 1.0, [4, 1, 1]).unwrap();
    let p = LabeledVolume::new(spec, vec![1, 1, 1, 0]).unwrap();
    let g = LabeledVolume::new(spec, vec![0, 1, 1, 1]).unwrap();
    let sc = sc_metrics(&p, &g).unwrap();
    let sc_ok = (sc.precision, sc.recall, sc.iou) == (2.0 / 3.0, 2.0 / 3.0, 0.5);
    Verdict::new(
        seg_ok && sc_ok,
        format!(
            "mIoU {} (7/12 = {}), SC (P, R, IoU) = ({}, {}, {})",
            seg.miou,
            7.0 / 12.0,
            sc.precision,
            sc.recall,
            sc.iou
        ),
    )
}

struct PviCase {
    store: ParamStore,
    params: PviParams,
    coarse: Matrix,
    embedding: Matrix,
    points: Vec<Vec3>,
    spec: VolumeSpec,
}

fn pvi_case(rng: &mut ChaCha8Rng, random_head: bool) -> PviCase {
    let spec = VolumeSpec::new([0.0, 0.0, 0.0], 0.5, [4, 4, 2]).unwrap();
    let c = rng.gen_range(1..=4);
    let embed = rng.gen_range(1..=4);
    let hidden = rng.gen_range(2..=6);
    let layers = rng.gen_range(1..=2);
    let k = rng.gen_range(1..=6);
    let mut store = ParamStore::new();
    let params = PviParams::register(&mut store, rng, embed, c + 1, hidden, layers, k).unwrap();
    if random_head {
        for layer in &params.layers {
            for id in [layer.head.0, layer.head.1] {
                let m = store.value_mut(id);
                for v in m.as_mut_slice() {
                    *v = rng.gen_range(-1.0..1.0);
                }
            }
        }
    }
    let mut coarse = rand_mat(rng, spec.num_cells(), c + 1);
    coarse.scale(2.0);
    let n = rng.gen_range(k.max(2)..=40);
    let points = (0..n)
        .map(|_| [rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..1.0)])
        .collect();
    let embedding = rand_mat(rng, n, embed);
    PviCase {
        store,
        params,
        coarse,
        embedding,
        points,
        spec,
    }
}

fn refine(case: &PviCase, graph: &NeighborGraph) -> (Matrix, Matrix) {
    let centers = centers_from_logits(&case.coarse, &case.spec).unwrap();
    let mut tape = Tape::new();
    let coarse = tape.leaf(case.coarse.clone());
    let emb = tape.leaf(case.embedding.clone());
    let inputs = RefineInputs {
        centers: &centers,
        points: &case.points,
        graph,
    };
    let out = gcn_refine(&mut tape, &case.store, &case.params, coarse, emb, &inputs).unwrap();
    (tape.value(coarse).clone(), tape.value(out).clone())
}

fn graph_of(case: &PviCase) -> NeighborGraph {
    let centers = centers_from_logits(&case.coarse, &case.spec).unwrap();
    let k = case.params.k.min(case.points.len());
    knn_query(&centers.positions, &case.points, k).unwrap()
}

/// Zero residual heads give the identity; permuting each center's neighbor list leaves
/// the output bits unchanged.
pub fn pvi() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9f1);
    let mut identity_ok = 0;
    let mut perm_ok = 0;
    let mut moved = 0;
    const CASES: usize = 50;
    for _ in 0..CASES {
        let case = pvi_case(&mut rng, false);
        let (coarse, refined) = refine(&case, &graph_of(&case));
        if coarse == refined {
            identity_ok += 1;
        }

        let case = pvi_case(&mut rng, true);
        let graph = graph_of(&case);
        let (coarse, base) = refine(&case, &graph);
        if base != coarse {
            moved += 1;
        }
        let mut permuted = graph.clone();
        for i in 0..graph.num_centers() {
            let mut order: Vec<usize> = (0..graph.k).collect();
            order.shuffle(&mut rng);
            for (slot, &src) in order.iter().enumerate() {
                permuted.neighbor_ids[i * graph.k + slot] = graph.neighbor_ids[i * graph.k + src];
                permuted.distances[i * graph.k + slot] = graph.distances[i * graph.k + src];
            }
        }
        let (_, shuffled) = refine(&case, &permuted);
        let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        if bits(&base) == bits(&shuffled) {
            perm_ok += 1;
        }
    }
    Verdict::new(
        identity_ok == CASES && perm_ok == CASES && moved > 0,
        format!(
            "zero head identity {identity_ok}/{CASES}, neighbor permutation bitwise {perm_ok}/{CASES} ({moved} cases with a nonzero residual)"
        ),
    )
}
