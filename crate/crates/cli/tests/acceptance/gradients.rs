//! Central finite differences against the tape's reverse pass for every differentiable op.

use std::rc::Rc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssc_core::autodiff::{Tape, Var};
use ssc_core::dense::ConvGeom;
use ssc_core::sparse::CoordSet;
use ssc_core::sparse_conv::{build_rulebook, pool_coords};
use ssc_core::{Matrix, Result};

use crate::Verdict;

pub const INSTANCES: usize = 20;
const STEP: f64 = 1e-6;
const TOL: f64 = 1e-4;

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

pub struct Instance {
    pub inputs: Vec<Matrix>,
    pub build: Build,
}

pub fn rand_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn projected(tape: &mut Tape, build: &Build, inputs: &[Matrix], proj: Option<&Matrix>) -> Result<(Var, Vec<Var>, Matrix)> {
    let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = build(tape, &vars)?;
    let value = tape.value(out).clone();
    let p = match proj {
        Some(p) => tape.constant(p.clone()),
        None => tape.constant(Matrix::filled(value.rows(), value.cols(), 1.0)),
    };
    let weighted = tape.mul(out, p)?;
    Ok((tape.sum(weighted), vars, value))
}

/// Largest `|analytic − fd| / max(1, |fd|)` over every input entry.
pub fn check(inst: &Instance, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut tape = Tape::new();
    let (_, _, value) = projected(&mut tape, &inst.build, &inst.inputs, None)?;
    let proj = rand_mat(rng, value.rows(), value.cols());
    let mut tape = Tape::new();
    let (loss, vars, _) = projected(&mut tape, &inst.build, &inst.inputs, Some(&proj))?;
    let grads = tape.backward(loss)?;
    let eval = |inputs: &[Matrix]| -> Result<f64> {
        let mut t = Tape::new();
        let (l, _, _) = projected(&mut t, &inst.build, inputs, Some(&proj))?;
        Ok(t.value(l).item())
    };
    let mut worst = 0.0f64;
    let mut inputs = inst.inputs.clone();
    for (i, &v) in vars.iter().enumerate() {
        let g = grads.get(v);
        for j in 0..inputs[i].as_slice().len() {
            let x0 = inputs[i].as_slice()[j];
            inputs[i].as_mut_slice()[j] = x0 + STEP;
            let fp = eval(&inputs)?;
            inputs[i].as_mut_slice()[j] = x0 - STEP;
            let fm = eval(&inputs)?;
            inputs[i].as_mut_slice()[j] = x0;
            let fd = (fp - fm) / (2.0 * STEP);
            let err = (g.as_slice()[j] - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn dims_upto(rng: &mut ChaCha8Rng, max: usize) -> [usize; 3] {
    [rng.gen_range(1..=max), rng.gen_range(1..=max), rng.gen_range(1..=max)]
}

fn even_dims(rng: &mut ChaCha8Rng) -> [usize; 3] {
    [2 * rng.gen_range(1..=2), 2 * rng.gen_range(1..=2), 2 * rng.gen_range(1..=2)]
}

fn cells(d: [usize; 3]) -> usize {
    d[0] * d[1] * d[2]
}

fn random_coords(rng: &mut ChaCha8Rng, dims: [usize; 3], density: f64) -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    for z in 0..dims[2] as i64 {
        for y in 0..dims[1] as i64 {
            for x in 0..dims[0] as i64 {
                if rng.gen_bool(density) {
                    out.push([x, y, z]);
                }
            }
        }
    }
    if out.is_empty() {
        out.push([0, 0, 0]);
    }
    out.shuffle(rng);
    out
}

fn linear(rng: &mut ChaCha8Rng) -> Instance {
    let (n, a, b) = (rng.gen_range(1..=5), rng.gen_range(1..=5), rng.gen_range(1..=5));
    Instance {
        inputs: vec![rand_mat(rng, n, a), rand_mat(rng, a, b), rand_mat(rng, 1, b)],
        build: Box::new(|t, v| t.linear(v[0], v[1], v[2])),
    }
}

fn leaky_relu(rng: &mut ChaCha8Rng) -> Instance {
    let slope = rng.gen_range(0.01..0.3);
    let (n, f) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
    Instance {
        inputs: vec![rand_mat(rng, n, f)],
        build: Box::new(move |t, v| Ok(t.leaky_relu(v[0], slope))),
    }
}

fn relu(rng: &mut ChaCha8Rng) -> Instance {
    let (n, f) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
    Instance {
        inputs: vec![rand_mat(rng, n, f)],
        build: Box::new(|t, v| Ok(t.relu(v[0]))),
    }
}

fn softmax(rng: &mut ChaCha8Rng) -> Instance {
    let (n, f) = (rng.gen_range(1..=5), rng.gen_range(1..=6));
    let mut x = rand_mat(rng, n, f);
    x.scale(3.0);
    Instance {
        inputs: vec![x],
        build: Box::new(|t, v| Ok(t.softmax(v[0]))),
    }
}

fn affine(rng: &mut ChaCha8Rng) -> Instance {
    let (n, f) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
    Instance {
        inputs: vec![rand_mat(rng, n, f), rand_mat(rng, 1, f), rand_mat(rng, 1, f)],
        build: Box::new(|t, v| t.affine(v[0], v[1], v[2])),
    }
}

fn elementwise(rng: &mut ChaCha8Rng) -> Instance {
    let (n, f) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
    let k = rng.gen_range(-2.0..2.0);
    Instance {
        inputs: vec![rand_mat(rng, n, f), rand_mat(rng, n, f)],
        build: Box::new(move |t, v| {
            let s = t.add(v[0], v[1])?;
            let p = t.mul(v[0], v[1])?;
            let d = t.sub(v[0], v[1])?;
            let d = t.scale(d, k);
            t.concat(&[s, p, d])
        }),
    }
}

fn sparse_conv(rng: &mut ChaCha8Rng) -> Instance {
    let k = if rng.gen_bool(0.5) { 3 } else { 5 };
    let dims = dims_upto(rng, 4);
    let coords = random_coords(rng, dims, 0.35);
    let rb = Rc::new(build_rulebook(&CoordSet::new(coords).unwrap(), k).unwrap());
    let (fin, fout) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    Instance {
        inputs: vec![
            rand_mat(rng, rb.num_sites(), fin),
            rand_mat(rng, k * k * k * fin, fout),
            rand_mat(rng, 1, fout),
        ],
        build: Box::new(move |t, v| t.sparse_conv(v[0], v[1], v[2], rb.clone())),
    }
}

fn sparse_pool(rng: &mut ChaCha8Rng) -> Instance {
    let dims = dims_upto(rng, 5);
    let coords = random_coords(rng, dims, 0.4);
    let n = coords.len();
    let map = pool_coords(&CoordSet::new(coords).unwrap());
    let f = rng.gen_range(1..=3);
    Instance {
        inputs: vec![rand_mat(rng, n, f)],
        build: Box::new(move |t, v| t.sparse_pool(v[0], &map)),
    }
}

fn sparse_unpool(rng: &mut ChaCha8Rng) -> Instance {
    let dims = dims_upto(rng, 5);
    let coords = random_coords(rng, dims, 0.4);
    let map = Rc::new(pool_coords(&CoordSet::new(coords).unwrap()));
    let f = rng.gen_range(1..=3);
    Instance {
        inputs: vec![rand_mat(rng, map.coarse.len(), f)],
        build: Box::new(move |t, v| t.sparse_unpool(v[0], map.clone())),
    }
}

fn conv3d(rng: &mut ChaCha8Rng) -> Instance {
    let kernel = rng.gen_range(1..=3);
    let padding = rng.gen_range(0..=1);
    let stride = rng.gen_range(1..=2);
    let mut dims = dims_upto(rng, 4);
    for d in &mut dims {
        *d = (*d).max(kernel);
    }
    let geom = ConvGeom {
        dims,
        kernel,
        stride,
        padding,
    };
    let (fin, fout) = (rng.gen_range(1..=2), rng.gen_range(1..=3));
    Instance {
        inputs: vec![
            rand_mat(rng, cells(dims), fin),
            rand_mat(rng, kernel.pow(3) * fin, fout),
            rand_mat(rng, 1, fout),
        ],
        build: Box::new(move |t, v| t.conv3d(v[0], v[1], v[2], geom)),
    }
}

fn max_pool2(rng: &mut ChaCha8Rng) -> Instance {
    let dims = even_dims(rng);
    let f = rng.gen_range(1..=3);
    Instance {
        inputs: vec![rand_mat(rng, cells(dims), f)],
        build: Box::new(move |t, v| Ok(t.max_pool2(v[0], dims)?.0)),
    }
}

fn voxel_shuffle(rng: &mut ChaCha8Rng) -> Instance {
    let dims = dims_upto(rng, 2);
    let c = rng.gen_range(1..=2);
    Instance {
        inputs: vec![rand_mat(rng, cells(dims), 8 * c)],
        build: Box::new(move |t, v| Ok(t.voxel_shuffle(v[0], dims, 2)?.0)),
    }
}

fn voxel_unshuffle(rng: &mut ChaCha8Rng) -> Instance {
    let dims = even_dims(rng);
    let c = rng.gen_range(1..=2);
    Instance {
        inputs: vec![rand_mat(rng, cells(dims), c)],
        build: Box::new(move |t, v| Ok(t.voxel_unshuffle(v[0], dims, 2)?.0)),
    }
}

fn gather_scatter(rng: &mut ChaCha8Rng) -> Instance {
    let (n, f, m) = (rng.gen_range(1..=6), rng.gen_range(1..=3), rng.gen_range(1..=5));
    let idx: Rc<Vec<usize>> = Rc::new((0..rng.gen_range(1..=8)).map(|_| rng.gen_range(0..n)).collect());
    let assign: Rc<Vec<Option<usize>>> = Rc::new(
        (0..idx.len())
            .map(|_| if rng.gen_bool(0.8) { Some(rng.gen_range(0..m)) } else { None })
            .collect(),
    );
    Instance {
        inputs: vec![rand_mat(rng, n, f)],
        build: Box::new(move |t, v| {
            let g = t.gather_rows(v[0], idx.clone())?;
            t.scatter_mean(g, assign.clone(), m)
        }),
    }
}

/// One edge layer: `[c, c − p]` over a random kNN-shaped graph, then a linear map and
/// leaky ReLU.
fn edge_features(rng: &mut ChaCha8Rng) -> Instance {
    let (m, n, k, d) = (
        rng.gen_range(1..=3),
        rng.gen_range(2..=6),
        rng.gen_range(1..=3),
        rng.gen_range(1..=3),
    );
    let center_pos = rand_mat(rng, m, 3);
    let point_pos = rand_mat(rng, n, 3);
    let repeat: Rc<Vec<usize>> = Rc::new((0..m).flat_map(|i| std::iter::repeat(i).take(k)).collect());
    let nbr: Rc<Vec<usize>> = Rc::new((0..m * k).map(|_| rng.gen_range(0..n)).collect());
    let hidden = rng.gen_range(1..=3);
    let width = 2 * (3 + d);
    Instance {
        inputs: vec![
            rand_mat(rng, m, d),
            rand_mat(rng, n, d),
            rand_mat(rng, width, hidden),
            rand_mat(rng, 1, hidden),
        ],
        build: Box::new(move |t, v| {
            let cp = t.constant(center_pos.clone());
            let pp = t.constant(point_pos.clone());
            let cs = t.concat(&[cp, v[0]])?;
            let ps = t.concat(&[pp, v[1]])?;
            let a = t.gather_rows(cs, repeat.clone())?;
            let b = t.gather_rows(ps, nbr.clone())?;
            let diff = t.sub(a, b)?;
            let e = t.concat(&[a, diff])?;
            let z = t.linear(e, v[2], v[3])?;
            Ok(t.leaky_relu(z, 0.1))
        }),
    }
}

/// Max over each center's `k` edges, then residual scatter into the coarse logits.
fn graph_aggregation(rng: &mut ChaCha8Rng) -> Instance {
    let (cells_n, c, k) = (rng.gen_range(2..=6), rng.gen_range(1..=3), rng.gen_range(1..=4));
    let mut ids: Vec<usize> = (0..cells_n).collect();
    ids.shuffle(rng);
    let centers = rng.gen_range(1..=cells_n);
    let idx = Rc::new(ids[..centers].to_vec());
    Instance {
        inputs: vec![rand_mat(rng, cells_n, c), rand_mat(rng, centers * k, c)],
        build: Box::new(move |t, v| {
            let pooled = t.group_max(v[1], k)?;
            t.scatter_add_rows(v[0], pooled, idx.clone())
        }),
    }
}

fn seg_loss(rng: &mut ChaCha8Rng) -> Instance {
    let (n, c) = (rng.gen_range(1..=8), rng.gen_range(2..=5));
    let mut targets: Vec<Option<usize>> = (0..n)
        .map(|_| if rng.gen_bool(0.85) { Some(rng.gen_range(0..c)) } else { None })
        .collect();
    targets[0] = Some(rng.gen_range(0..c));
    let targets = Rc::new(targets);
    let weights = Rc::new((0..c).map(|_| rng.gen_range(0.2..2.0)).collect::<Vec<f64>>());
    let mut logits = rand_mat(rng, n, c);
    logits.scale(2.0);
    Instance {
        inputs: vec![logits],
        build: Box::new(move |t, v| t.weighted_ce(v[0], targets.clone(), weights.clone())),
    }
}

/// Completion cross-entropy: `C + 1` channels, invalid cells carry no target.
fn completion_loss(rng: &mut ChaCha8Rng) -> Instance {
    let dims = dims_upto(rng, 3);
    let c = rng.gen_range(1..=4) + 1;
    let labels: Vec<u8> = (0..cells(dims))
        .map(|_| if rng.gen_bool(0.2) { 255 } else { rng.gen_range(0..c as u8) })
        .collect();
    let mut targets: Vec<Option<usize>> = labels.iter().map(|&l| (l != 255).then_some(l as usize)).collect();
    targets[0] = Some(0);
    let targets = Rc::new(targets);
    let weights = Rc::new((0..c).map(|_| rng.gen_range(0.2..2.0)).collect::<Vec<f64>>());
    Instance {
        inputs: vec![rand_mat(rng, cells(dims), c)],
        build: Box::new(move |t, v| t.weighted_ce(v[0], targets.clone(), weights.clone())),
    }
}

fn uncertainty(rng: &mut ChaCha8Rng) -> Instance {
    let pos = |rng: &mut ChaCha8Rng| Matrix::scalar(rng.gen_range(0.05..3.0));
    let (l1, l2) = (pos(rng), pos(rng));
    Instance {
        inputs: vec![
            l1,
            l2,
            Matrix::scalar(rng.gen_range(-1.5..1.5)),
            Matrix::scalar(rng.gen_range(-1.5..1.5)),
        ],
        build: Box::new(|t, v| t.uncertainty(v[0], v[1], v[2], v[3])),
    }
}

type Generator = fn(&mut ChaCha8Rng) -> Instance;

pub const OPS: [(&str, Generator); 19] = [
    ("linear", linear),
    ("leaky_relu", leaky_relu),
    ("relu", relu),
    ("softmax", softmax),
    ("affine", affine),
    ("add/sub/mul/scale/concat", elementwise),
    ("sparse_conv", sparse_conv),
    ("sparse_pool", sparse_pool),
    ("sparse_unpool", sparse_unpool),
    ("conv3d", conv3d),
    ("max_pool2", max_pool2),
    ("voxel_shuffle", voxel_shuffle),
    ("voxel_unshuffle", voxel_unshuffle),
    ("gather/scatter_mean", gather_scatter),
    ("edge_features", edge_features),
    ("graph_aggregation", graph_aggregation),
    ("segmentation_loss", seg_loss),
    ("completion_loss", completion_loss),
    ("uncertainty_weighting", uncertainty),
];

pub fn run() -> Verdict {
    let start = Instant::now();
    let mut worst = (0.0f64, "");
    let mut failures = Vec::new();
    for (op_index, (name, gen)) in OPS.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6ead + op_index as u64);
        for i in 0..INSTANCES {
            let inst = gen(&mut rng);
            match check(&inst, &mut rng) {
                Ok(err) => {
                    if err > worst.0 {
                        worst = (err, name);
                    }
                    if !(err <= TOL) {
                        failures.push(format!("{name}#{i} err {err:.2e}"));
                    }
                }
                Err(e) => failures.push(format!("{name}#{i} error {e}")),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 120.0;
    let mut summary = format!(
        "{} ops x {INSTANCES} instances, max rel err {:.2e} ({}), {secs:.1} s of a 120 s budget",
        OPS.len(),
        worst.0,
        worst.1
    );
    if !failures.is_empty() {
        summary.push_str(&format!("; failures: {}", failures.join(", ")));
    }
    Verdict::new(pass, summary)
}
