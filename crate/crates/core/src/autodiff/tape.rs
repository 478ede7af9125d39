use std::rc::Rc;

use super::params::{ParamGrads, ParamId, ParamStore};
use crate::dense::{self, ConvGeom};
use crate::error::{Error, Result};
use crate::sparse_conv::{self, PoolMap, Rulebook};
use crate::tensor::{gemm_acc, Matrix};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Constant,
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    LeakyRelu { x: Var, slope: f64 },
    Affine { x: Var, gamma: Var, beta: Var },
    Concat(Vec<Var>),
    Softmax(Var),
    Sum(Var),
    SparseConv { x: Var, w: Var, b: Var, rb: Rc<Rulebook> },
    SparsePool { x: Var, arg: Vec<usize> },
    SparseUnpool { x: Var, map: Rc<PoolMap> },
    Conv3d { x: Var, w: Var, b: Var, geom: ConvGeom },
    MaxPool2 { x: Var, arg: Vec<usize> },
    VoxelShuffle { x: Var, dims: [usize; 3], r: usize },
    VoxelUnshuffle { x: Var, dims: [usize; 3], r: usize },
    GatherRows { x: Var, idx: Rc<Vec<usize>> },
    ScatterMean { x: Var, assign: Rc<Vec<Option<usize>>>, counts: Vec<usize> },
    ScatterAddRows { base: Var, rows: Var, idx: Rc<Vec<usize>> },
    GroupMax { x: Var, arg: Vec<usize> },
    WeightedCe { logits: Var, targets: Rc<Vec<Option<usize>>>, weights: Rc<Vec<f64>>, count: usize },
    Uncertainty { l_seg: Var, l_complet: Var, s1: Var, s2: Var },
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Records a forward computation for one backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
}

/// Adjoints for every node reachable from a scalar loss.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient of `v`; zero when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn is_zero(&self, v: Var) -> bool {
        self.grads[v.0]
            .as_ref()
            .map_or(true, |g| g.as_slice().iter().all(|x| *x == 0.0))
    }

    /// Per-parameter gradients, summed over every place a parameter was bound.
    pub fn param_grads(&self, store: &ParamStore) -> ParamGrads {
        let mut out = ParamGrads::zeros_like(store);
        for &(id, v) in &self.params {
            if let Some(g) = &self.grads[v.0] {
                out.accumulate_one(id, g);
            }
        }
        out
    }
}

fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Constant)
    }

    /// A differentiable input.
    pub fn leaf(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf)
    }

    /// Binds a trainable parameter's current value.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.value(id).clone(), Op::Leaf);
        self.params.push((id, v));
        v
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let out = dense::linear(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(out, Op::Linear { x, w, b }))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::contract(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let mut out = self.value(a).clone();
        for (o, v) in out.as_mut_slice().iter_mut().zip(self.value(b).as_slice()) {
            *o -= v;
        }
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let mut out = self.value(a).clone();
        for (o, v) in out.as_mut_slice().iter_mut().zip(self.value(b).as_slice()) {
            *o *= v;
        }
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let mut out = self.value(x).clone();
        out.scale(k);
        self.push(out, Op::Scale(x, k))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = dense::leaky_relu(self.value(x), slope);
        self.push(out, Op::LeakyRelu { x, slope })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, 0.0)
    }

    /// Per-channel `x · gamma + beta`.
    pub fn affine(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let f = self.value(x).cols();
        if self.value(gamma).shape() != (1, f) || self.value(beta).shape() != (1, f) {
            return Err(Error::contract("affine parameters must be 1×F"));
        }
        let mut out = self.value(x).clone();
        let (g, b) = (self.value(gamma).as_slice(), self.value(beta).as_slice());
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = *v * g[c] + b[c];
            }
        }
        Ok(self.push(out, Op::Affine { x, gamma, beta }))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let out = dense::concat(&mats)?;
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let out = dense::softmax(self.value(x));
        self.push(out, Op::Softmax(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).as_slice().iter().sum();
        self.push(Matrix::scalar(s), Op::Sum(x))
    }

    pub fn sparse_conv(&mut self, x: Var, w: Var, b: Var, rb: Rc<Rulebook>) -> Result<Var> {
        let out = sparse_conv::submanifold_conv(self.value(x), self.value(w), self.value(b), &rb)?;
        Ok(self.push(out, Op::SparseConv { x, w, b, rb }))
    }

    pub fn sparse_pool(&mut self, x: Var, map: &PoolMap) -> Result<Var> {
        let (out, arg) = sparse_conv::sparse_pool(self.value(x), map)?;
        Ok(self.push(out, Op::SparsePool { x, arg }))
    }

    pub fn sparse_unpool(&mut self, x: Var, map: Rc<PoolMap>) -> Result<Var> {
        let out = sparse_conv::sparse_unpool(self.value(x), &map)?;
        Ok(self.push(out, Op::SparseUnpool { x, map }))
    }

    pub fn conv3d(&mut self, x: Var, w: Var, b: Var, geom: ConvGeom) -> Result<Var> {
        let out = dense::conv3d(self.value(x), self.value(w), self.value(b), &geom)?;
        Ok(self.push(out, Op::Conv3d { x, w, b, geom }))
    }

    pub fn max_pool2(&mut self, x: Var, dims: [usize; 3]) -> Result<(Var, [usize; 3])> {
        let (out, od, arg) = dense::max_pool2(self.value(x), dims)?;
        Ok((self.push(out, Op::MaxPool2 { x, arg }), od))
    }

    pub fn voxel_shuffle(&mut self, x: Var, dims: [usize; 3], r: usize) -> Result<(Var, [usize; 3])> {
        let (out, od) = dense::voxel_shuffle(self.value(x), dims, r)?;
        Ok((self.push(out, Op::VoxelShuffle { x, dims, r }), od))
    }

    pub fn voxel_unshuffle(&mut self, x: Var, dims: [usize; 3], r: usize) -> Result<(Var, [usize; 3])> {
        let (out, od) = dense::voxel_unshuffle(self.value(x), dims, r)?;
        Ok((self.push(out, Op::VoxelUnshuffle { x, dims, r }), od))
    }

    /// `out[r] = x[idx[r]]`.
    pub fn gather_rows(&mut self, x: Var, idx: Rc<Vec<usize>>) -> Result<Var> {
        let src = self.value(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= src.rows()) {
            return Err(Error::structure(format!("gather index {bad} out of {} rows", src.rows())));
        }
        let mut out = Matrix::zeros(idx.len(), src.cols());
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(src.row(i));
        }
        Ok(self.push(out, Op::GatherRows { x, idx }))
    }

    /// Mean of the rows assigned to each of `out_rows` targets; unassigned targets are zero.
    pub fn scatter_mean(&mut self, x: Var, assign: Rc<Vec<Option<usize>>>, out_rows: usize) -> Result<Var> {
        let src = self.value(x);
        if assign.len() != src.rows() {
            return Err(Error::structure("scatter assignment length does not match input rows"));
        }
        let mut out = Matrix::zeros(out_rows, src.cols());
        let mut counts = vec![0usize; out_rows];
        for (i, a) in assign.iter().enumerate() {
            if let Some(t) = *a {
                if t >= out_rows {
                    return Err(Error::structure(format!("scatter target {t} out of {out_rows}")));
                }
                counts[t] += 1;
                for (o, v) in out.row_mut(t).iter_mut().zip(src.row(i)) {
                    *o += v;
                }
            }
        }
        for (t, &n) in counts.iter().enumerate() {
            if n > 1 {
                let inv = 1.0 / n as f64;
                out.row_mut(t).iter_mut().for_each(|v| *v *= inv);
            }
        }
        Ok(self.push(out, Op::ScatterMean { x, assign, counts }))
    }

    /// `out = base; out[idx[r]] += rows[r]`.
    pub fn scatter_add_rows(&mut self, base: Var, rows: Var, idx: Rc<Vec<usize>>) -> Result<Var> {
        let (b, r) = (self.value(base), self.value(rows));
        if r.rows() != idx.len() || r.cols() != b.cols() {
            return Err(Error::structure("scatter-add rows do not match index or width"));
        }
        let mut out = b.clone();
        for (k, &i) in idx.iter().enumerate() {
            if i >= out.rows() {
                return Err(Error::structure(format!("scatter-add index {i} out of range")));
            }
            for (o, v) in out.row_mut(i).iter_mut().zip(r.row(k)) {
                *o += v;
            }
        }
        Ok(self.push(out, Op::ScatterAddRows { base, rows, idx }))
    }

    /// Column-wise max over consecutive groups of `k` rows; ties keep the earliest row.
    pub fn group_max(&mut self, x: Var, k: usize) -> Result<Var> {
        let src = self.value(x);
        if k == 0 || src.rows() % k != 0 {
            return Err(Error::contract(format!("{} rows do not split into groups of {k}", src.rows())));
        }
        let groups = src.rows() / k;
        let f = src.cols();
        let mut out = Matrix::zeros(groups, f);
        let mut arg = vec![0usize; groups * f];
        for g in 0..groups {
            let row = out.row_mut(g);
            row.copy_from_slice(src.row(g * k));
            for c in 0..f {
                arg[g * f + c] = g * k;
            }
            for r in g * k + 1..(g + 1) * k {
                for (c, &v) in src.row(r).iter().enumerate() {
                    if v > row[c] {
                        row[c] = v;
                        arg[g * f + c] = r;
                    }
                }
            }
        }
        Ok(self.push(out, Op::GroupMax { x, arg }))
    }

    /// Mean over non-ignored rows of `weights[t] · −log softmax(logits)[t]`.
    pub fn weighted_ce(&mut self, logits: Var, targets: Rc<Vec<Option<usize>>>, weights: Rc<Vec<f64>>) -> Result<Var> {
        let lg = self.value(logits);
        if targets.len() != lg.rows() || weights.len() != lg.cols() {
            return Err(Error::contract(format!(
                "cross-entropy: {} targets / {} weights for logits {:?}",
                targets.len(),
                weights.len(),
                lg.shape()
            )));
        }
        let loss = crate::loss::weighted_ce(lg, &targets, &weights)?;
        let count = targets.iter().filter(|t| t.is_some()).count();
        Ok(self.push(Matrix::scalar(loss), Op::WeightedCe { logits, targets, weights, count }))
    }

    /// Joint objective `½e^{−s₁}L_seg + ½e^{−s₂}L_complet + ½s₁ + ½s₂` with `s = log σ²`.
    pub fn uncertainty(&mut self, l_seg: Var, l_complet: Var, s1: Var, s2: Var) -> Result<Var> {
        for v in [l_seg, l_complet, s1, s2] {
            if self.value(v).shape() != (1, 1) {
                return Err(Error::contract("uncertainty weighting takes scalars"));
            }
        }
        let out = crate::loss::uncertainty_loss_log_var(
            self.value(l_seg).item(),
            self.value(l_complet).item(),
            self.value(s1).item(),
            self.value(s2).item(),
        );
        Ok(self.push(Matrix::scalar(out), Op::Uncertainty { l_seg, l_complet, s1, s2 }))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::contract("backward called on a value that was never computed"));
        }
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
            params: self.params.clone(),
        })
    }

    fn backprop_node(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Constant | Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (val(*x), val(*w));
                let (n, k, m) = (xv.rows(), xv.cols(), wv.cols());
                let mut gx = Matrix::zeros(n, k);
                for r in 0..n {
                    crate::tensor::times_transpose(wv.as_slice(), g.row(r), gx.row_mut(r));
                }
                // gw = xᵀ g
                let mut xt = Matrix::zeros(k, n);
                for r in 0..n {
                    for c in 0..k {
                        xt.set(c, r, xv.get(r, c));
                    }
                }
                let mut gw = Matrix::zeros(k, m);
                gemm_acc(xt.as_slice(), g.as_slice(), gw.as_mut_slice(), k, n, m);
                let mut gb = Matrix::zeros(1, m);
                for r in 0..n {
                    for (a, v) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                        *a += v;
                    }
                }
                acc(grads, *x, gx);
                acc(grads, *w, gw);
                acc(grads, *b, gb);
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                let mut n = g.clone();
                n.scale(-1.0);
                acc(grads, *b, n);
            }
            Op::Mul(a, b) => {
                let mut ga = g.clone();
                for (o, v) in ga.as_mut_slice().iter_mut().zip(val(*b).as_slice()) {
                    *o *= v;
                }
                let mut gb = g.clone();
                for (o, v) in gb.as_mut_slice().iter_mut().zip(val(*a).as_slice()) {
                    *o *= v;
                }
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::Scale(x, k) => {
                let mut gx = g.clone();
                gx.scale(*k);
                acc(grads, *x, gx);
            }
            Op::LeakyRelu { x, slope } => {
                let mut gx = g.clone();
                for (o, v) in gx.as_mut_slice().iter_mut().zip(val(*x).as_slice()) {
                    if *v < 0.0 {
                        *o *= slope;
                    }
                }
                acc(grads, *x, gx);
            }
            Op::Affine { x, gamma, beta } => {
                let xv = val(*x);
                let gam = val(*gamma).as_slice();
                let f = xv.cols();
                let mut gx = g.clone();
                let mut gg = Matrix::zeros(1, f);
                let mut gbeta = Matrix::zeros(1, f);
                for r in 0..xv.rows() {
                    let gr = g.row(r);
                    let xr = xv.row(r);
                    for c in 0..f {
                        gg.as_mut_slice()[c] += gr[c] * xr[c];
                        gbeta.as_mut_slice()[c] += gr[c];
                    }
                    for (c, o) in gx.row_mut(r).iter_mut().enumerate() {
                        *o *= gam[c];
                    }
                }
                acc(grads, *x, gx);
                acc(grads, *gamma, gg);
                acc(grads, *beta, gbeta);
            }
            Op::Concat(parts) => {
                let mut c0 = 0;
                for &p in parts {
                    let w = val(p).cols();
                    let mut gp = Matrix::zeros(g.rows(), w);
                    for r in 0..g.rows() {
                        gp.row_mut(r).copy_from_slice(&g.row(r)[c0..c0 + w]);
                    }
                    c0 += w;
                    acc(grads, p, gp);
                }
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let mut gx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (c, o) in gx.row_mut(r).iter_mut().enumerate() {
                        *o = yr[c] * (gr[c] - dot);
                    }
                }
                acc(grads, *x, gx);
            }
            Op::Sum(x) => {
                let (r, c) = val(*x).shape();
                acc(grads, *x, Matrix::filled(r, c, g.item()));
            }
            Op::SparseConv { x, w, b, rb } => {
                let (gx, gw, gb) = sparse_conv::submanifold_conv_backward(val(*x), val(*w), rb, g);
                acc(grads, *x, gx);
                acc(grads, *w, gw);
                acc(grads, *b, gb);
            }
            Op::SparsePool { x, arg } | Op::MaxPool2 { x, arg } => {
                let (r, c) = val(*x).shape();
                let mut gx = Matrix::zeros(r, c);
                let gs = g.as_slice();
                for (k, &src) in arg.iter().enumerate() {
                    let ch = k % c;
                    gx.as_mut_slice()[src * c + ch] += gs[k];
                }
                acc(grads, *x, gx);
            }
            Op::SparseUnpool { x, map } => {
                let mut gx = Matrix::zeros(val(*x).rows(), g.cols());
                for (i, &p) in map.fine_to_coarse.iter().enumerate() {
                    for (o, v) in gx.row_mut(p).iter_mut().zip(g.row(i)) {
                        *o += v;
                    }
                }
                acc(grads, *x, gx);
            }
            Op::Conv3d { x, w, b, geom } => {
                let (gx, gw, gb) = dense::conv3d_backward(val(*x), val(*w), geom, g);
                acc(grads, *x, gx);
                acc(grads, *w, gw);
                acc(grads, *b, gb);
            }
            Op::VoxelShuffle { x, dims, r } => {
                let od = [dims[0] * r, dims[1] * r, dims[2] * r];
                let (gx, _) = dense::voxel_unshuffle(g, od, *r).expect("shape fixed by forward");
                acc(grads, *x, gx);
            }
            Op::VoxelUnshuffle { x, dims, r } => {
                let od = [dims[0] / r, dims[1] / r, dims[2] / r];
                let (gx, _) = dense::voxel_shuffle(g, od, *r).expect("shape fixed by forward");
                acc(grads, *x, gx);
            }
            Op::GatherRows { x, idx } => {
                let mut gx = Matrix::zeros(val(*x).rows(), g.cols());
                for (r, &i) in idx.iter().enumerate() {
                    for (o, v) in gx.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                acc(grads, *x, gx);
            }
            Op::ScatterMean { x, assign, counts } => {
                let mut gx = Matrix::zeros(assign.len(), g.cols());
                for (i, a) in assign.iter().enumerate() {
                    if let Some(t) = *a {
                        let inv = 1.0 / counts[t] as f64;
                        for (o, v) in gx.row_mut(i).iter_mut().zip(g.row(t)) {
                            *o = v * inv;
                        }
                    }
                }
                acc(grads, *x, gx);
            }
            Op::ScatterAddRows { base, rows, idx } => {
                let mut gr = Matrix::zeros(idx.len(), g.cols());
                for (k, &i) in idx.iter().enumerate() {
                    gr.row_mut(k).copy_from_slice(g.row(i));
                }
                acc(grads, *base, g.clone());
                acc(grads, *rows, gr);
            }
            Op::GroupMax { x, arg } => {
                let (r, c) = val(*x).shape();
                let mut gx = Matrix::zeros(r, c);
                for (k, &src) in arg.iter().enumerate() {
                    gx.as_mut_slice()[src * c + k % c] += g.as_slice()[k];
                }
                acc(grads, *x, gx);
            }
            Op::WeightedCe { logits, targets, weights, count } => {
                let lg = val(*logits);
                let mut gx = Matrix::zeros(lg.rows(), lg.cols());
                let scale = g.item() / *count as f64;
                for (r, t) in targets.iter().enumerate() {
                    let Some(t) = *t else { continue };
                    let row = lg.row(r);
                    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
                    let k = weights[t] * scale;
                    for (c, o) in gx.row_mut(r).iter_mut().enumerate() {
                        let p = (row[c] - m).exp() / z;
                        *o = k * (p - if c == t { 1.0 } else { 0.0 });
                    }
                }
                acc(grads, *logits, gx);
            }
            Op::Uncertainty { l_seg, l_complet, s1, s2 } => {
                let go = g.item();
                let (ls, lc) = (val(*l_seg).item(), val(*l_complet).item());
                let (e1, e2) = ((-val(*s1).item()).exp(), (-val(*s2).item()).exp());
                acc(grads, *l_seg, Matrix::scalar(go * 0.5 * e1));
                acc(grads, *l_complet, Matrix::scalar(go * 0.5 * e2));
                acc(grads, *s1, Matrix::scalar(go * (0.5 - 0.5 * e1 * ls)));
                acc(grads, *s2, Matrix::scalar(go * (0.5 - 0.5 * e2 * lc)));
            }
        }
    }
}
