//! Placing a reference object's depth into a background depth map.
//!
//! The object's depth patch is shifted so that its anchor pixel lands exactly
//! on the requested scalar depth, resized into the target box, and merged with
//! the background according to the inference mode.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bbox::{BBox, Location25D};
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::mask::{Mask, MaskKind};
use crate::resample;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Place,
    Replace,
    IdTransfer,
    Inpaint,
}

impl FusionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FusionMode::Place => "place",
            FusionMode::Replace => "replace",
            FusionMode::IdTransfer => "id_transfer",
            FusionMode::Inpaint => "inpaint",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "place" => Ok(Self::Place),
            "replace" => Ok(Self::Replace),
            "id_transfer" => Ok(Self::IdTransfer),
            "inpaint" => Ok(Self::Inpaint),
            other => Err(format!("unknown mode {other:?}; expected place, replace, id_transfer or inpaint")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionRule {
    /// Per-pixel maximum: whichever surface is nearer stays visible.
    #[default]
    NearestWins,
    Overwrite,
}

impl FromStr for OcclusionRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "nearest_wins" => Ok(Self::NearestWins),
            "overwrite" => Ok(Self::Overwrite),
            other => Err(format!("unknown occlusion rule {other:?}; expected nearest_wins or overwrite")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FusionRequest {
    pub bg_depth: DepthMap,
    /// Reference object depth in the object's own frame.
    pub obj_depth: DepthMap,
    /// Binary object mask, same frame as `obj_depth`.
    pub obj_mask: Mask,
    pub location: Location25D,
    pub mode: FusionMode,
    /// Scale applied to the object's depth relief around its anchor.
    pub alpha: f64,
    pub occlusion: OcclusionRule,
}

impl FusionRequest {
    pub fn new(
        bg_depth: DepthMap,
        obj_depth: DepthMap,
        obj_mask: Mask,
        location: Location25D,
        mode: FusionMode,
    ) -> Self {
        Self { bg_depth, obj_depth, obj_mask, location, mode, alpha: 1.0, occlusion: OcclusionRule::NearestWins }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionResult {
    pub fused_depth: DepthMap,
    /// Region the compositor must synthesize.
    pub scene_mask: Mask,
    /// Object footprint in the background frame.
    pub placed_obj_mask: Mask,
    /// Rescaled object depth in the background frame; zero off the footprint.
    pub object_depth: DepthMap,
}

/// Value at the pixel nearest the box center.
pub fn anchor_depth(depth: &DepthMap, box_: &BBox) -> Result<f32> {
    let (w, h) = depth.dims();
    let rect = box_.to_pixel_rect(w, h);
    if !rect.fits_in(w, h) {
        return Err(Error::BBoxOutOfFrame { width: w, height: h });
    }
    let (x, y) = box_.center_pixel(w, h);
    Ok(depth.get(x, y))
}

fn masked_lower_median(depth: &DepthMap, mask: &Mask) -> Option<f32> {
    let mut values: Vec<f32> = mask.set_pixels().map(|(x, y)| depth.get(x, y)).collect();
    if values.is_empty() {
        return None;
    }
    values.sort_by(f32::total_cmp);
    Some(values[(values.len() - 1) / 2])
}

fn check_target(target_d: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&target_d) {
        return Err(Error::OutOfRange { what: "target depth", value: target_d });
    }
    Ok(())
}

fn rescale_with_anchor(
    obj_depth: &DepthMap,
    obj_mask: &Mask,
    target_d: f64,
    alpha: f64,
    anchor: (u32, u32),
) -> Result<DepthMap> {
    let c = if obj_mask.is_set(anchor.0, anchor.1) {
        obj_depth.get(anchor.0, anchor.1)
    } else {
        masked_lower_median(obj_depth, obj_mask).ok_or(Error::EmptyMask)?
    } as f64;
    DepthMap::from_fn(obj_depth.width(), obj_depth.height(), |x, y| {
        if obj_mask.is_set(x, y) {
            (target_d + alpha * (obj_depth.get(x, y) as f64 - c)).clamp(0.0, 1.0) as f32
        } else {
            0.0
        }
    })
}

/// Shifts the masked object depth so its anchor equals `target_d`.
///
/// The anchor is the value at the center pixel of the mask's bounding box, or
/// the masked median when that pixel falls outside the mask. Output is
/// `clamp(target_d + alpha * (depth - anchor), 0, 1)` on the mask and 0 elsewhere.
pub fn rescale_object_depth(obj_depth: &DepthMap, obj_mask: &Mask, target_d: f64, alpha: f64) -> Result<DepthMap> {
    check_target(target_d)?;
    obj_depth.raster().same_dims(obj_mask.raster())?;
    let rect = obj_mask.bounding_rect().ok_or(Error::EmptyMask)?;
    let anchor = ((rect.x0 + rect.x1) / 2, (rect.y0 + rect.y1) / 2);
    rescale_with_anchor(obj_depth, obj_mask, target_d, alpha, anchor)
}

/// Fuses the request's object into its background depth map.
pub fn fuse(req: &FusionRequest) -> Result<FusionResult> {
    check_target(req.location.depth())?;
    req.obj_depth.raster().same_dims(req.obj_mask.raster())?;
    let (w, h) = req.bg_depth.dims();
    let bbox = req.location.bbox;
    let rect = bbox.to_pixel_rect(w, h);
    if !rect.fits_in(w, h) {
        return Err(Error::BBoxOutOfFrame { width: w, height: h });
    }

    // tight crop around the object, then stretch it over the target box
    let obj_rect = req.obj_mask.bounding_rect().ok_or(Error::EmptyMask)?;
    let obj_depth = resample::crop(req.obj_depth.raster(), obj_rect)?;
    let obj_mask = resample::crop(req.obj_mask.raster(), obj_rect)?;
    let patch_depth = DepthMap::new(resample::resize_bilinear_f32(&obj_depth, rect.width(), rect.height())?)?;
    let patch_mask =
        Mask::new(resample::resize_nearest(&obj_mask, rect.width(), rect.height())?, MaskKind::Segmentation)?;
    if patch_mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (cx, cy) = bbox.center_pixel(w, h);
    let patch =
        rescale_with_anchor(&patch_depth, &patch_mask, req.location.depth(), req.alpha, (cx - rect.x0, cy - rect.y0))?;

    let placed = Mask::from_fn(w, h, MaskKind::Segmentation, |x, y| {
        rect.contains(x, y) && patch_mask.is_set(x - rect.x0, y - rect.y0)
    })?;
    let obj_at = |x: u32, y: u32| patch.get(x - rect.x0, y - rect.y0);
    let bg = &req.bg_depth;
    let bbox_mask = Mask::from_rect(w, h, rect)?;

    let (fused, scene_mask, object_depth) = match req.mode {
        FusionMode::Place => {
            let fused = DepthMap::from_fn(w, h, |x, y| {
                if placed.is_set(x, y) {
                    match req.occlusion {
                        OcclusionRule::NearestWins => bg.get(x, y).max(obj_at(x, y)),
                        OcclusionRule::Overwrite => obj_at(x, y),
                    }
                } else {
                    bg.get(x, y)
                }
            })?;
            let obj = DepthMap::from_fn(w, h, |x, y| if placed.is_set(x, y) { obj_at(x, y) } else { 0.0 })?;
            (fused, bbox_mask, obj)
        }
        FusionMode::Replace => {
            let fused = DepthMap::from_fn(w, h, |x, y| {
                if placed.is_set(x, y) {
                    obj_at(x, y)
                } else if rect.contains(x, y) {
                    0.0
                } else {
                    bg.get(x, y)
                }
            })?;
            let obj = DepthMap::from_fn(w, h, |x, y| if placed.is_set(x, y) { obj_at(x, y) } else { 0.0 })?;
            (fused, bbox_mask, obj)
        }
        FusionMode::IdTransfer | FusionMode::Inpaint => {
            // depth is left untouched; the object takes over its footprint
            let obj = DepthMap::from_fn(w, h, |x, y| if placed.is_set(x, y) { bg.get(x, y) } else { 0.0 })?;
            let region = placed.clone().with_kind(MaskKind::Augmented);
            (bg.clone(), region, obj)
        }
    };

    Ok(FusionResult { fused_depth: fused, scene_mask, placed_obj_mask: placed, object_depth })
}

/// Pixels where the placed object is in front of (or level with) the fused depth.
pub fn visible_object_mask(result: &FusionResult) -> Result<Mask> {
    visible_mask(&result.placed_obj_mask, &result.object_depth, &result.fused_depth)
}

/// `{p : mask(p) and object_depth(p) >= fused_depth(p)}`.
pub fn visible_mask(placed: &Mask, object_depth: &DepthMap, fused_depth: &DepthMap) -> Result<Mask> {
    placed.raster().same_dims(object_depth.raster())?;
    placed.raster().same_dims(fused_depth.raster())?;
    Mask::from_fn(placed.width(), placed.height(), MaskKind::Segmentation, |x, y| {
        placed.is_set(x, y) && object_depth.get(x, y) >= fused_depth.get(x, y)
    })
}
