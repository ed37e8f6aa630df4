//! Browser demo of the geometry side of the completion pipeline.
//!
//! The plain functions work on point slices and are tested natively; the
//! `#[wasm_bindgen]` exports wrap them with flat `x, y, z, x, y, z, ...`
//! arrays for JavaScript.

use mmc_core::data::{crop_half_space, sample_surface, synth_shape, SYNTH_CATEGORIES};
use mmc_core::geometry::{chamfer_distance, fscore, resample, Point, PointCloud, ResampleMethod};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

/// A procedural shape normalised to the unit cube and its cropped partial.
#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    pub complete: Vec<Point>,
    pub partial: Vec<Point>,
}

pub fn make_shape(category: &str, seed: u64, points: usize) -> Result<Shape, String> {
    if !SYNTH_CATEGORIES.contains(&category) {
        return Err(format!("unknown category `{category}`"));
    }
    if points < 4 {
        return Err("need at least 4 points".into());
    }
    let parts = synth_shape(category, &mut ChaCha8Rng::seed_from_u64(seed));
    let raw = PointCloud::new(sample_surface(&parts, points, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed))).map_err(|e| e.to_string())?;
    let complete = raw.unit_transform().map_err(|e| e.to_string())?.apply_cloud(&raw).into_points();
    let keep = crop_half_space(&complete, &mut ChaCha8Rng::seed_from_u64(seed ^ 0xc409));
    let partial = keep.into_iter().map(|i| complete[i]).collect();
    Ok(Shape { complete, partial })
}

/// F-Score of `pred` against `gt` at each threshold.
pub fn fscore_curve(pred: &[Point], gt: &[Point], taus: &[f64]) -> Result<Vec<f64>, String> {
    taus.iter().map(|&t| fscore(pred, gt, t).map_err(|e| e.to_string())).collect()
}

/// Farthest-point subset of `count` points starting from the first point.
pub fn fps(points: &[Point], count: usize) -> Result<Vec<Point>, String> {
    let cloud = PointCloud::new(points.to_vec()).map_err(|e| e.to_string())?;
    let count = count.clamp(1, points.len());
    Ok(resample(&cloud, count, ResampleMethod::FarthestPoint { start: 0 }, 0).map_err(|e| e.to_string())?.into_points())
}

pub fn flatten(points: &[Point]) -> Vec<f64> {
    points.iter().flatten().copied().collect()
}

pub fn unflatten(flat: &[f64]) -> Result<Vec<Point>, String> {
    if flat.len() % 3 != 0 {
        return Err(format!("coordinate array length {} is not a multiple of 3", flat.len()));
    }
    Ok(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

// ---- JavaScript exports ----

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen(js_name = Shape)]
pub struct JsShape(Shape);

#[wasm_bindgen(js_class = Shape)]
impl JsShape {
    #[wasm_bindgen(getter)]
    pub fn complete(&self) -> Vec<f64> {
        flatten(&self.0.complete)
    }

    #[wasm_bindgen(getter)]
    pub fn partial(&self) -> Vec<f64> {
        flatten(&self.0.partial)
    }
}

#[wasm_bindgen]
pub fn categories() -> Vec<String> {
    SYNTH_CATEGORIES.iter().map(|c| c.to_string()).collect()
}

/// Samples `points` surface points of a seeded shape and crops a partial view.
#[wasm_bindgen]
pub fn synth(category: &str, seed: u32, points: usize) -> Result<JsShape, JsError> {
    make_shape(category, seed.into(), points).map(JsShape).map_err(js)
}

#[wasm_bindgen]
pub fn chamfer(pred: &[f64], gt: &[f64]) -> Result<f64, JsError> {
    chamfer_distance(&unflatten(pred).map_err(js)?, &unflatten(gt).map_err(js)?).map_err(|e| js(e.to_string()))
}

#[wasm_bindgen(js_name = fscoreCurve)]
pub fn fscore_curve_js(pred: &[f64], gt: &[f64], taus: &[f64]) -> Result<Vec<f64>, JsError> {
    fscore_curve(&unflatten(pred).map_err(js)?, &unflatten(gt).map_err(js)?, taus).map_err(js)
}

#[wasm_bindgen(js_name = fpsResample)]
pub fn fps_resample(points: &[f64], count: usize) -> Result<Vec<f64>, JsError> {
    fps(&unflatten(points).map_err(js)?, count).map(|p| flatten(&p)).map_err(js)
}
