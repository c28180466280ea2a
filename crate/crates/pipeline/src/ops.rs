//! Single-step operations on encoded files.
//!
//! The CLI subcommands and the HTTP service both call these, which is what
//! makes their outputs byte-identical.

use forge_core::codec::{decode_pfm, decode_pfm_raster, decode_png, encode_pfm, encode_pfm_raster, encode_png};
use forge_core::detail::{augment_mask, hf_extract, stitch_collage, DEFAULT_DILATE_FRAC};
use forge_core::fusion::{fuse, FusionRequest};
use forge_core::{BBox, FusionMode, HFMap, Location25D, Mask, MaskKind, MaskLevel, OcclusionRule};
use serde::{Deserialize, Serialize};

use crate::error::Result;

fn default_alpha() -> f64 {
    1.0
}

fn default_dilate_frac() -> f64 {
    DEFAULT_DILATE_FRAC
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuseParams {
    pub location: Location25D,
    pub mode: FusionMode,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub occlusion: OcclusionRule,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FuseArtifacts {
    /// PFM.
    pub fused_depth: Vec<u8>,
    /// PFM.
    pub object_depth: Vec<u8>,
    /// PNG.
    pub scene_mask: Vec<u8>,
    /// PNG.
    pub placed_mask: Vec<u8>,
}

pub fn decode_mask(png: &[u8], kind: MaskKind) -> Result<Mask> {
    Ok(Mask::from_image(&decode_png(png)?, kind)?)
}

pub fn fuse_depth(bg_pfm: &[u8], obj_pfm: &[u8], obj_mask_png: &[u8], p: &FuseParams) -> Result<FuseArtifacts> {
    let mut req = FusionRequest::new(
        decode_pfm(bg_pfm)?.map,
        decode_pfm(obj_pfm)?.map,
        decode_mask(obj_mask_png, MaskKind::Segmentation)?,
        p.location,
        p.mode,
    );
    req.alpha = p.alpha;
    req.occlusion = p.occlusion;
    let r = fuse(&req)?;
    Ok(FuseArtifacts {
        fused_depth: encode_pfm(&r.fused_depth),
        object_depth: encode_pfm(&r.object_depth),
        scene_mask: encode_png(&r.scene_mask.to_image())?,
        placed_mask: encode_png(&r.placed_obj_mask.to_image())?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskParams {
    pub level: MaskLevel,
    #[serde(default = "default_dilate_frac")]
    pub dilate_frac: f64,
}

/// HF map of an object image under its augmented mask, as PFM.
pub fn detail_map(obj_png: &[u8], mask_png: &[u8], p: &MaskParams) -> Result<Vec<u8>> {
    let image = decode_png(obj_png)?;
    let aug = augment_mask(&decode_mask(mask_png, MaskKind::Segmentation)?, p.level, p.dilate_frac)?;
    Ok(encode_pfm_raster(hf_extract(&image, &aug)?.raster())?)
}

/// Scene with the HF map stitched into `bbox`, as PNG.
pub fn collage(scene_png: &[u8], hf_pfm: &[u8], bbox: &BBox) -> Result<Vec<u8>> {
    let (raster, _) = decode_pfm_raster(hf_pfm)?;
    Ok(encode_png(&stitch_collage(&decode_png(scene_png)?, &HFMap::new(raster)?, bbox)?)?)
}

/// Augmented mask at the requested level, as PNG.
pub fn augment(mask_png: &[u8], p: &MaskParams) -> Result<Vec<u8>> {
    let m = augment_mask(&decode_mask(mask_png, MaskKind::Segmentation)?, p.level, p.dilate_frac)?;
    Ok(encode_png(&m.to_image())?)
}
