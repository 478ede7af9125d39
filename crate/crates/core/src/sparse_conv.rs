//! Submanifold sparse convolution over rulebooks, and stride-2 sparse pooling.

use crate::error::{Error, Result};
use crate::sparse::{Coord, CoordSet};
use crate::tensor::{outer_acc, row_times, times_transpose, Matrix};

/// Per-offset gather/scatter pairs for one active coordinate set and kernel size.
///
/// Offsets are indexed `(dx+r) + K·((dy+r) + K·(dz+r))`. Each offset's pairs are
/// sorted by output row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rulebook {
    kernel_size: usize,
    num_sites: usize,
    rules: Vec<Vec<(usize, usize)>>,
}

impl Rulebook {
    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn num_offsets(&self) -> usize {
        self.rules.len()
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn offset(&self, o: usize) -> Coord {
        offset_of(o, self.kernel_size)
    }

    /// `(input_row, output_row)` pairs at offset index `o`.
    pub fn rules(&self, o: usize) -> &[(usize, usize)] {
        &self.rules[o]
    }

    pub fn total_rules(&self) -> usize {
        self.rules.iter().map(Vec::len).sum()
    }

    pub fn center_offset(&self) -> usize {
        self.rules.len() / 2
    }
}

pub(crate) fn offset_of(o: usize, k: usize) -> Coord {
    let r = (k / 2) as i64;
    let k = k as i64;
    let o = o as i64;
    [o % k - r, (o / k) % k - r, o / (k * k) - r]
}

/// Builds the submanifold rulebook: `(i, j)` at offset `o` iff `coords[i] = coords[j] + o`.
pub fn build_rulebook(coords: &CoordSet, kernel_size: usize) -> Result<Rulebook> {
    if kernel_size % 2 == 0 {
        return Err(Error::contract(format!("kernel size {kernel_size} must be odd")));
    }
    let nk = kernel_size.pow(3);
    let offsets: Vec<Coord> = (0..nk).map(|o| offset_of(o, kernel_size)).collect();
    let mut rules = vec![Vec::new(); nk];
    for (j, c) in coords.coords().iter().enumerate() {
        for (o, d) in offsets.iter().enumerate() {
            if let Some(i) = coords.lookup(&[c[0] + d[0], c[1] + d[1], c[2] + d[2]]) {
                rules[o].push((i, j));
            }
        }
    }
    Ok(Rulebook {
        kernel_size,
        num_sites: coords.len(),
        rules,
    })
}

fn check_conv(x: &Matrix, w: &Matrix, b: &Matrix, rb: &Rulebook) -> Result<(usize, usize)> {
    let nk = rb.num_offsets();
    if x.rows() != rb.num_sites {
        return Err(Error::contract(format!(
            "input has {} rows but rulebook covers {} sites",
            x.rows(),
            rb.num_sites
        )));
    }
    let fin = x.cols();
    if w.rows() != nk * fin {
        return Err(Error::contract(format!(
            "weights have {} rows, expected {nk}×{fin}",
            w.rows()
        )));
    }
    if b.shape() != (1, w.cols()) {
        return Err(Error::contract("bias must be 1×F_out"));
    }
    Ok((fin, w.cols()))
}

/// `out[j] = b + Σ_o Σ_{(i,j) ∈ rules[o]} x[i] · W_o`.
pub fn submanifold_conv(x: &Matrix, w: &Matrix, b: &Matrix, rb: &Rulebook) -> Result<Matrix> {
    let (fin, fout) = check_conv(x, w, b, rb)?;
    let mut out = Matrix::zeros(x.rows(), fout);
    for j in 0..x.rows() {
        out.row_mut(j).copy_from_slice(b.as_slice());
    }
    let ws = w.as_slice();
    for o in 0..rb.num_offsets() {
        let wo = &ws[o * fin * fout..(o + 1) * fin * fout];
        for &(i, j) in rb.rules(o) {
            let (xi, oj) = (x.row(i), out.row_mut(j));
            row_times(xi, wo, oj);
        }
    }
    Ok(out)
}

/// Adjoints of [`submanifold_conv`] with respect to input, weights and bias.
pub fn submanifold_conv_backward(
    x: &Matrix,
    w: &Matrix,
    rb: &Rulebook,
    grad_out: &Matrix,
) -> (Matrix, Matrix, Matrix) {
    let fin = x.cols();
    let fout = w.cols();
    let mut gx = Matrix::zeros(x.rows(), fin);
    let mut gw = Matrix::zeros(w.rows(), fout);
    let mut gb = Matrix::zeros(1, fout);
    for j in 0..grad_out.rows() {
        for (acc, g) in gb.as_mut_slice().iter_mut().zip(grad_out.row(j)) {
            *acc += g;
        }
    }
    let ws = w.as_slice();
    for o in 0..rb.num_offsets() {
        let wo = &ws[o * fin * fout..(o + 1) * fin * fout];
        for &(i, j) in rb.rules(o) {
            let g = grad_out.row(j);
            times_transpose(wo, g, gx.row_mut(i));
            let gwo = &mut gw.as_mut_slice()[o * fin * fout..(o + 1) * fin * fout];
            outer_acc(x.row(i), g, gwo);
        }
    }
    (gx, gw, gb)
}

/// Fine → coarse assignment for stride-2 pooling.
#[derive(Clone, Debug)]
pub struct PoolMap {
    pub coarse: CoordSet,
    pub fine_to_coarse: Vec<usize>,
}

impl PoolMap {
    pub fn num_fine(&self) -> usize {
        self.fine_to_coarse.len()
    }
}

/// Groups fine sites by `floor(coord / 2)`; coarse sites appear in order of first child.
pub fn pool_coords(fine: &CoordSet) -> PoolMap {
    let mut coarse_coords: Vec<Coord> = Vec::new();
    let mut lookup = std::collections::HashMap::new();
    let mut fine_to_coarse = Vec::with_capacity(fine.len());
    for c in fine.coords() {
        let p = [c[0].div_euclid(2), c[1].div_euclid(2), c[2].div_euclid(2)];
        let idx = *lookup.entry(p).or_insert_with(|| {
            coarse_coords.push(p);
            coarse_coords.len() - 1
        });
        fine_to_coarse.push(idx);
    }
    PoolMap {
        coarse: CoordSet::new(coarse_coords).expect("coarse coordinates are unique"),
        fine_to_coarse,
    }
}

/// Channel-wise max over each coarse site's children; returns the winning fine row per entry.
pub fn sparse_pool(x: &Matrix, map: &PoolMap) -> Result<(Matrix, Vec<usize>)> {
    if x.rows() != map.num_fine() {
        return Err(Error::structure("pool map does not match input rows"));
    }
    let f = x.cols();
    let m = map.coarse.len();
    let mut out = Matrix::filled(m, f, f64::NEG_INFINITY);
    let mut arg = vec![usize::MAX; m * f];
    for (i, &p) in map.fine_to_coarse.iter().enumerate() {
        let xi = x.row(i);
        let row = out.row_mut(p);
        for c in 0..f {
            if xi[c] > row[c] || arg[p * f + c] == usize::MAX {
                row[c] = xi[c];
                arg[p * f + c] = i;
            }
        }
    }
    Ok((out, arg))
}

/// Copies each coarse row back to all of its fine children.
pub fn sparse_unpool(coarse: &Matrix, map: &PoolMap) -> Result<Matrix> {
    if coarse.rows() != map.coarse.len() {
        return Err(Error::structure(format!(
            "coarse tensor has {} rows, map expects {}",
            coarse.rows(),
            map.coarse.len()
        )));
    }
    let mut out = Matrix::zeros(map.num_fine(), coarse.cols());
    for (i, &p) in map.fine_to_coarse.iter().enumerate() {
        out.row_mut(i).copy_from_slice(coarse.row(p));
    }
    Ok(out)
}
