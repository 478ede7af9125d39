//! Browser bindings: a synthetic scene viewer, voxel ray traversal and the
//! uncertainty-weighted loss landscape.

use ssc_core::datagen::{synth_generate, traverse, SyntheticSceneSpec};
use ssc_core::loss::{uncertainty_loss, uncertainty_loss_log_var};
use wasm_bindgen::prelude::*;

/// Volume dimensions `[x, y, z]` of the toy scenes.
#[wasm_bindgen]
pub fn scene_dims() -> Vec<u32> {
    SyntheticSceneSpec::toy(0).volume.dims.iter().map(|&d| d as u32).collect()
}

/// One horizontal layer of a synthetic scene, row-major over `y` then `x`.
///
/// Each cell holds the ground-truth label (`0` empty, `255` unobserved) in the low byte
/// and the number of sweep points in the cell above it.
#[wasm_bindgen]
pub fn scene_slice(seed: u64, z: u32) -> Result<Vec<u32>, JsError> {
    let scene = synth_generate(&SyntheticSceneSpec::toy(seed)).map_err(|e| JsError::new(&e.to_string()))?;
    let spec = &scene.gt.spec;
    let [nx, ny, nz] = spec.dims;
    if z as usize >= nz {
        return Err(JsError::new(&format!("layer {z} outside 0..{nz}")));
    }
    let mut out: Vec<u32> = (0..nx * ny)
        .map(|i| u32::from(scene.gt.get([(i % nx) as i64, (i / nx) as i64, z as i64])))
        .collect();
    for p in &scene.sweep.positions {
        let [x, y, cz] = spec.cell_of(p);
        if cz == z as i64 && (0..nx as i64).contains(&x) && (0..ny as i64).contains(&y) {
            out[y as usize * nx + x as usize] += 256;
        }
    }
    Ok(out)
}

/// Cells visited by a segment in the toy volume's middle layer, as flat `[x, y, ...]`.
/// Endpoints are in cell units.
#[wasm_bindgen]
pub fn ray_cells(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<i32> {
    let spec = SyntheticSceneSpec::toy(0).volume;
    let vs = spec.voxel_size;
    let z = spec.origin[2] + vs * (spec.dims[2] as f64 * 0.5 + 0.5);
    let world = |x: f64, y: f64| [spec.origin[0] + x * vs, spec.origin[1] + y * vs, z];
    traverse(&world(x0, y0), &world(x1, y1), &spec)
        .into_iter()
        .flat_map(|c| [c[0] as i32, c[1] as i32])
        .collect()
}

/// Joint objective as a function of `σ₁` over `[lo, hi]` with `σ₂` at its optimum `√L₂`.
#[wasm_bindgen]
pub fn uncertainty_curve(l_seg: f64, l_complet: f64, lo: f64, hi: f64, n: u32) -> Result<Vec<f64>, JsError> {
    if !(l_seg > 0.0 && l_complet > 0.0 && lo > 0.0 && hi > lo && n >= 2) {
        return Err(JsError::new("need positive losses, 0 < lo < hi and n >= 2"));
    }
    let sigma2 = l_complet.sqrt();
    Ok((0..n)
        .map(|i| {
            let s1 = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            uncertainty_loss(l_seg, l_complet, s1, sigma2)
        })
        .collect())
}

/// The minimum of the joint objective, reached at `σᵢ = √Lᵢ`.
#[wasm_bindgen]
pub fn uncertainty_minimum(l_seg: f64, l_complet: f64) -> f64 {
    uncertainty_loss_log_var(l_seg, l_complet, l_seg.ln(), l_complet.ln())
}
