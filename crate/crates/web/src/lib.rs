//! WebAssembly bindings for the demo page in `www/`.
//!
//! Three operations: build and draw a synthetic scene, project an edited
//! plan, and score a caption against a reference. Each has a plain Rust
//! core (`*_view`, `score_pair`) that the tests call directly; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use serde::Serialize;
use t2c_core::dataset::{build_plan, caption_for, render_camera_image, SceneParams};
use t2c_core::geometry::{CameraModel, TrajectoryPlan};
use t2c_core::metrics::{score_predictions, split_caption, EvalTable};
use t2c_core::raster::{overlay, render_trajectory_image, RgbImage};
use t2c_core::text::tokenize;
use wasm_bindgen::prelude::*;

/// RGBA bytes in the layout a canvas `ImageData` expects.
pub fn to_rgba(img: &RgbImage) -> Vec<u8> {
    img.as_bytes().chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct SceneView {
    width: usize,
    height: usize,
    camera: Vec<u8>,
    trajectory: Vec<u8>,
    overlaid: Vec<u8>,
    caption: String,
    plan_json: String,
}

#[wasm_bindgen]
impl SceneView {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn camera(&self) -> Vec<u8> {
        self.camera.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn trajectory(&self) -> Vec<u8> {
        self.trajectory.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn overlaid(&self) -> Vec<u8> {
        self.overlaid.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn caption(&self) -> String {
        self.caption.clone()
    }

    #[wasm_bindgen(getter, js_name = planJson)]
    pub fn plan_json(&self) -> String {
        self.plan_json.clone()
    }
}

fn camera_or_default(calib_json: &str) -> Result<CameraModel, String> {
    if calib_json.trim().is_empty() {
        return Ok(CameraModel::toy_default());
    }
    let cam = CameraModel::from_json_str(calib_json).map_err(|e| format!("calibration: {e}"))?;
    cam.validate().map_err(|e| e.to_string())?;
    Ok(cam)
}

fn view(camera_img: RgbImage, plan: &TrajectoryPlan, cam: &CameraModel, caption: String) -> Result<SceneView, String> {
    let traj = render_trajectory_image(plan, cam);
    let over = overlay(&camera_img, &traj).map_err(|e| e.to_string())?;
    Ok(SceneView {
        width: cam.width,
        height: cam.height,
        camera: to_rgba(&camera_img),
        trajectory: to_rgba(&traj),
        overlaid: to_rgba(&over),
        caption,
        plan_json: plan.to_json_string(),
    })
}

/// Camera image, trajectory image, composite and template caption for a
/// scene given as JSON; an empty calibration selects the built-in camera.
pub fn scene_view(scene_json: &str, calib_json: &str) -> Result<SceneView, String> {
    let scene: SceneParams = serde_json::from_str(scene_json).map_err(|e| format!("scene: {e}"))?;
    scene.validate().map_err(|e| e.to_string())?;
    let cam = camera_or_default(calib_json)?;
    let plan = build_plan(&scene).map_err(|e| e.to_string())?;
    view(render_camera_image(&scene, &cam), &plan, &cam, caption_for(&scene))
}

/// Draws an edited plan over the camera image of `scene_json`.
pub fn plan_view(scene_json: &str, plan_json: &str, calib_json: &str) -> Result<SceneView, String> {
    let scene: SceneParams = serde_json::from_str(scene_json).map_err(|e| format!("scene: {e}"))?;
    let cam = camera_or_default(calib_json)?;
    let plan = TrajectoryPlan::from_json_str(plan_json).map_err(|e| format!("plan: {e}"))?;
    plan.validate().map_err(|e| e.to_string())?;
    view(render_camera_image(&scene, &cam), &plan, &cam, caption_for(&scene))
}

#[derive(Debug, Clone, Serialize)]
pub struct PairScore {
    pub table: EvalTable,
    pub action_match: bool,
    pub candidate_action: String,
    pub candidate_justification: String,
    pub missing_delimiter: bool,
}

/// BLEU-4 and ROUGE-L of one caption against one reference, per segment.
pub fn score_pair(candidate: &str, reference: &str) -> Result<PairScore, String> {
    let rep = score_predictions(&[("c".into(), candidate.into(), reference.into())]).map_err(|e| e.to_string())?;
    let (c, r) = (split_caption(candidate), split_caption(reference));
    Ok(PairScore {
        table: rep.table,
        action_match: tokenize(&c.action) == tokenize(&r.action),
        candidate_action: c.action,
        candidate_justification: c.justification,
        missing_delimiter: c.missing_delimiter,
    })
}

#[wasm_bindgen(js_name = sceneView)]
pub fn scene_view_js(scene_json: &str, calib_json: &str) -> Result<SceneView, JsError> {
    scene_view(scene_json, calib_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = planView)]
pub fn plan_view_js(scene_json: &str, plan_json: &str, calib_json: &str) -> Result<SceneView, JsError> {
    plan_view(scene_json, plan_json, calib_json).map_err(|e| JsError::new(&e))
}

/// JSON-encoded [`PairScore`].
#[wasm_bindgen(js_name = scoreCaption)]
pub fn score_caption_js(candidate: &str, reference: &str) -> Result<String, JsError> {
    let s = score_pair(candidate, reference).map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&s).map_err(|e| JsError::new(&e.to_string()))
}
