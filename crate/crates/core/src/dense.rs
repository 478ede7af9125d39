//! Dense 3D volumes and the pointwise / volumetric kernels used by the completion decoder
//! and the MLP heads.

use crate::error::{Error, Result};
use crate::geometry::VolumeSpec;
use crate::tensor::{gemm_acc, outer_acc, row_times, times_transpose, Matrix};

/// A `dims × channels` grid; rows of `data` are cells in x-fastest order.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseVolume {
    pub spec: VolumeSpec,
    pub data: Matrix,
}

impl DenseVolume {
    pub fn new(spec: VolumeSpec, data: Matrix) -> Result<Self> {
        if data.rows() != spec.num_cells() || data.cols() == 0 {
            return Err(Error::structure(format!(
                "volume {:?} needs {} rows with ≥1 channel, got {}×{}",
                spec.dims,
                spec.num_cells(),
                data.rows(),
                data.cols()
            )));
        }
        Ok(Self { spec, data })
    }

    pub fn channels(&self) -> usize {
        self.data.cols()
    }

    pub fn dims(&self) -> [usize; 3] {
        self.spec.dims
    }
}

/// Stride and zero padding of a dense convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub dims: [usize; 3],
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn out_dims(&self) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let span = self.dims[a] + 2 * self.padding;
            if span < self.kernel || self.stride == 0 {
                return Err(Error::contract(format!(
                    "kernel {} does not fit axis {a} of size {} with padding {}",
                    self.kernel, self.dims[a], self.padding
                )));
            }
            out[a] = (span - self.kernel) / self.stride + 1;
        }
        Ok(out)
    }
}

#[inline]
fn cells(d: [usize; 3]) -> usize {
    d[0] * d[1] * d[2]
}

/// Calls `f(out_cell, kernel_offset, in_cell)` for every in-bounds tap.
#[inline]
fn for_each_tap(g: &ConvGeom, od: [usize; 3], mut f: impl FnMut(usize, usize, usize)) {
    let k = g.kernel;
    let d = g.dims;
    let p = g.padding as i64;
    let s = g.stride as i64;
    for oz in 0..od[2] {
        for oy in 0..od[1] {
            for ox in 0..od[0] {
                let ocell = ox + od[0] * (oy + od[1] * oz);
                for kz in 0..k {
                    let iz = oz as i64 * s - p + kz as i64;
                    if iz < 0 || iz >= d[2] as i64 {
                        continue;
                    }
                    for ky in 0..k {
                        let iy = oy as i64 * s - p + ky as i64;
                        if iy < 0 || iy >= d[1] as i64 {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = ox as i64 * s - p + kx as i64;
                            if ix < 0 || ix >= d[0] as i64 {
                                continue;
                            }
                            let icell = ix as usize + d[0] * (iy as usize + d[1] * iz as usize);
                            f(ocell, kx + k * (ky + k * kz), icell);
                        }
                    }
                }
            }
        }
    }
}

fn check_conv3d(x: &Matrix, w: &Matrix, b: &Matrix, g: &ConvGeom) -> Result<[usize; 3]> {
    if g.kernel == 0 {
        return Err(Error::contract("kernel size must be positive"));
    }
    if x.rows() != cells(g.dims) {
        return Err(Error::contract(format!(
            "input has {} cells, geometry {:?} needs {}",
            x.rows(),
            g.dims,
            cells(g.dims)
        )));
    }
    if w.rows() != g.kernel.pow(3) * x.cols() {
        return Err(Error::contract(format!(
            "weights have {} rows, expected {}³×{}",
            w.rows(),
            g.kernel,
            x.cols()
        )));
    }
    if b.shape() != (1, w.cols()) {
        return Err(Error::contract("bias must be 1×F_out"));
    }
    g.out_dims()
}

/// Zero-padded cross-correlation; weights are `(K³·F_in) × F_out` with taps indexed
/// `kx + K·(ky + K·kz)`.
pub fn conv3d(x: &Matrix, w: &Matrix, b: &Matrix, g: &ConvGeom) -> Result<Matrix> {
    let od = check_conv3d(x, w, b, g)?;
    let (fin, fout) = (x.cols(), w.cols());
    let mut out = Matrix::zeros(cells(od), fout);
    for r in 0..out.rows() {
        out.row_mut(r).copy_from_slice(b.as_slice());
    }
    let ws = w.as_slice();
    let xs = x.as_slice();
    let os = out.as_mut_slice();
    for_each_tap(g, od, |oc, k, ic| {
        row_times(
            &xs[ic * fin..(ic + 1) * fin],
            &ws[k * fin * fout..(k + 1) * fin * fout],
            &mut os[oc * fout..(oc + 1) * fout],
        );
    });
    Ok(out)
}

pub fn conv3d_backward(x: &Matrix, w: &Matrix, g: &ConvGeom, grad_out: &Matrix) -> (Matrix, Matrix, Matrix) {
    let od = g.out_dims().expect("validated in forward");
    let (fin, fout) = (x.cols(), w.cols());
    let mut gx = Matrix::zeros(x.rows(), fin);
    let mut gw = Matrix::zeros(w.rows(), fout);
    let mut gb = Matrix::zeros(1, fout);
    for r in 0..grad_out.rows() {
        for (acc, v) in gb.as_mut_slice().iter_mut().zip(grad_out.row(r)) {
            *acc += v;
        }
    }
    let ws = w.as_slice();
    let xs = x.as_slice();
    let gs = grad_out.as_slice();
    {
        let gxs = gx.as_mut_slice();
        let gws = gw.as_mut_slice();
        for_each_tap(g, od, |oc, k, ic| {
            let go = &gs[oc * fout..(oc + 1) * fout];
            if go.iter().all(|v| *v == 0.0) {
                return;
            }
            let wk = &ws[k * fin * fout..(k + 1) * fin * fout];
            times_transpose(wk, go, &mut gxs[ic * fin..(ic + 1) * fin]);
            outer_acc(&xs[ic * fin..(ic + 1) * fin], go, &mut gws[k * fin * fout..(k + 1) * fin * fout]);
        });
    }
    (gx, gw, gb)
}

/// 2×2×2 max pooling with stride 2; returns the winning input cell per output entry.
pub fn max_pool2(x: &Matrix, dims: [usize; 3]) -> Result<(Matrix, [usize; 3], Vec<usize>)> {
    if dims.iter().any(|d| d % 2 != 0) || x.rows() != cells(dims) {
        return Err(Error::contract(format!("max pooling needs even dims matching the input, got {dims:?}")));
    }
    let od = [dims[0] / 2, dims[1] / 2, dims[2] / 2];
    let f = x.cols();
    let mut out = Matrix::filled(cells(od), f, f64::NEG_INFINITY);
    let mut arg = vec![0usize; cells(od) * f];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for xx in 0..dims[0] {
                let ic = xx + dims[0] * (y + dims[1] * z);
                let oc = xx / 2 + od[0] * (y / 2 + od[1] * (z / 2));
                let xi = x.row(ic);
                let row = out.row_mut(oc);
                for c in 0..f {
                    if xi[c] > row[c] {
                        row[c] = xi[c];
                        arg[oc * f + c] = ic;
                    }
                }
            }
        }
    }
    Ok((out, od, arg))
}

#[inline]
fn sub_offset(x: usize, y: usize, z: usize, r: usize) -> usize {
    x % r + r * (y % r + r * (z % r))
}

/// Channel-to-space rearrangement: `c·r³` channels at `dims` become `c` channels at `r·dims`.
pub fn voxel_shuffle(x: &Matrix, dims: [usize; 3], r: usize) -> Result<(Matrix, [usize; 3])> {
    let r3 = r * r * r;
    if r == 0 || x.cols() % r3 != 0 || x.rows() != cells(dims) {
        return Err(Error::contract(format!(
            "{} channels are not divisible by {r}³ or dims {dims:?} do not match",
            x.cols()
        )));
    }
    let c = x.cols() / r3;
    let od = [dims[0] * r, dims[1] * r, dims[2] * r];
    let mut out = Matrix::zeros(cells(od), c);
    for z in 0..od[2] {
        for y in 0..od[1] {
            for xx in 0..od[0] {
                let oc = xx + od[0] * (y + od[1] * z);
                let ic = xx / r + dims[0] * (y / r + dims[1] * (z / r));
                let off = sub_offset(xx, y, z, r);
                let src = x.row(ic);
                let dst = out.row_mut(oc);
                for ch in 0..c {
                    dst[ch] = src[ch * r3 + off];
                }
            }
        }
    }
    Ok((out, od))
}

/// Exact inverse of [`voxel_shuffle`] (space-to-channel).
pub fn voxel_unshuffle(x: &Matrix, dims: [usize; 3], r: usize) -> Result<(Matrix, [usize; 3])> {
    if r == 0 || dims.iter().any(|d| d % r != 0) || x.rows() != cells(dims) {
        return Err(Error::contract(format!("dims {dims:?} are not divisible by {r}")));
    }
    let r3 = r * r * r;
    let c = x.cols();
    let od = [dims[0] / r, dims[1] / r, dims[2] / r];
    let mut out = Matrix::zeros(cells(od), c * r3);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for xx in 0..dims[0] {
                let ic = xx + dims[0] * (y + dims[1] * z);
                let oc = xx / r + od[0] * (y / r + od[1] * (z / r));
                let off = sub_offset(xx, y, z, r);
                let src = x.row(ic);
                let dst = out.row_mut(oc);
                for ch in 0..c {
                    dst[ch * r3 + off] = src[ch];
                }
            }
        }
    }
    Ok((out, od))
}

/// `x · W + b` for `x: N×F_in`, `W: F_in×F_out`, `b: 1×F_out`.
pub fn linear(x: &Matrix, w: &Matrix, b: &Matrix) -> Result<Matrix> {
    if x.cols() != w.rows() || b.shape() != (1, w.cols()) {
        return Err(Error::contract(format!(
            "linear: input {:?}, weight {:?}, bias {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let (n, k, m) = (x.rows(), x.cols(), w.cols());
    let mut out = Matrix::zeros(n, m);
    for r in 0..n {
        out.row_mut(r).copy_from_slice(b.as_slice());
    }
    gemm_acc(x.as_slice(), w.as_slice(), out.as_mut_slice(), n, k, m);
    Ok(out)
}

pub fn leaky_relu(x: &Matrix, slope: f64) -> Matrix {
    let mut out = x.clone();
    out.as_mut_slice().iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v *= slope
        }
    });
    out
}

/// Row-wise softmax.
pub fn softmax(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

/// Row-wise log-softmax.
pub fn log_softmax(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

/// Column-wise concatenation.
pub fn concat(parts: &[&Matrix]) -> Result<Matrix> {
    let n = parts.first().map_or(0, |m| m.rows());
    if parts.iter().any(|m| m.rows() != n) {
        return Err(Error::contract("concat parts have different row counts"));
    }
    let total: usize = parts.iter().map(|m| m.cols()).sum();
    let mut out = Matrix::zeros(n, total);
    for r in 0..n {
        let mut c0 = 0;
        let dst = out.row_mut(r);
        for m in parts {
            dst[c0..c0 + m.cols()].copy_from_slice(m.row(r));
            c0 += m.cols();
        }
    }
    Ok(out)
}
