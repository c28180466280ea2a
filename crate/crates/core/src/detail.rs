//! High-frequency detail maps, collage stitching and coarse-mask augmentation.

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::mask::{Mask, MaskKind};
use crate::morphology;
use crate::raster::{FloatRaster, ImageRaster, Raster};
use crate::resample;

/// Largest possible `|Gh| + |Gv|` response of the 3x3 Sobel pair on 8-bit input.
pub const SOBEL_NORMALIZER: f64 = 8.0 * 255.0;

pub const DEFAULT_DILATE_FRAC: f64 = 0.02;

/// Grayscale edge-response map in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HFMap {
    raster: FloatRaster,
}

impl HFMap {
    pub fn new(raster: FloatRaster) -> Result<Self> {
        if raster.channels() != 1 {
            return Err(Error::InvalidRaster("HF maps are single-channel".into()));
        }
        if let Some(&v) = raster.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange { what: "HF sample", value: v as f64 });
        }
        Ok(Self { raster })
    }

    pub fn raster(&self) -> &FloatRaster {
        &self.raster
    }

    pub fn dims(&self) -> (u32, u32) {
        self.raster.dims()
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.raster.value(x, y)
    }
}

/// Coarseness level of an augmented mask: 1 is the exact segmentation, 5 the box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct MaskLevel(u8);

impl MaskLevel {
    pub const EXACT: MaskLevel = MaskLevel(1);
    pub const BOX: MaskLevel = MaskLevel(5);

    pub fn new(level: u8) -> Result<Self> {
        if (1..=5).contains(&level) {
            Ok(Self(level))
        } else {
            Err(Error::InvalidMaskLevel(level))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = MaskLevel> {
        (1..=5).map(MaskLevel)
    }
}

impl TryFrom<u8> for MaskLevel {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        MaskLevel::new(v)
    }
}

impl From<MaskLevel> for u8 {
    fn from(l: MaskLevel) -> u8 {
        l.0
    }
}

fn luma_plane(image: &ImageRaster) -> Vec<f64> {
    let (w, h) = image.dims();
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            out.push(image.luma(x, y));
        }
    }
    out
}

/// Sobel edge magnitude of the object's luma, restricted to `aug_mask`.
///
/// Computes `(|Gh| + |Gv|) / (8 * 255)` with replicate-padded borders and
/// multiplies the result pointwise by the mask value.
pub fn hf_extract(obj_image: &ImageRaster, aug_mask: &Mask) -> Result<HFMap> {
    obj_image.same_dims(aug_mask.raster())?;
    let (w, h) = obj_image.dims();
    let luma = luma_plane(obj_image);
    let at = |x: i64, y: i64| -> f64 {
        let xc = x.clamp(0, w as i64 - 1) as usize;
        let yc = y.clamp(0, h as i64 - 1) as usize;
        luma[yc * w as usize + xc]
    };
    let raster = FloatRaster::from_fn(w, h, 1, |x, y, _| {
        let m = aug_mask.value(x, y);
        if m == 0.0 {
            return 0.0;
        }
        let (x, y) = (x as i64, y as i64);
        let gh = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
        let gv = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        let response = ((gh.abs() + gv.abs()) / SOBEL_NORMALIZER).clamp(0.0, 1.0);
        (response * m as f64) as f32
    })?;
    HFMap::new(raster)
}

/// Dilation radius in pixels for a mask of the given size.
pub fn dilation_radius(width: u32, height: u32, dilate_frac: f64) -> u32 {
    (dilate_frac * width.max(height) as f64).round().max(0.0) as u32
}

/// Coarsens a segmentation to the requested level.
///
/// Level 1 is the segmentation itself, 2 dilates it by a disk, 3 fills the
/// convex hull of level 2, 4 dilates that again, and 5 is the bounding box of
/// level 4. Each level contains the previous one.
pub fn augment_mask(seg: &Mask, level: MaskLevel, dilate_frac: f64) -> Result<Mask> {
    if seg.is_empty() {
        return Err(Error::EmptyMask);
    }
    if !(dilate_frac.is_finite() && dilate_frac >= 0.0) {
        return Err(Error::OutOfRange { what: "dilate fraction", value: dilate_frac });
    }
    let r = dilation_radius(seg.width(), seg.height(), dilate_frac);
    let binary = Mask::from_fn(seg.width(), seg.height(), MaskKind::Augmented, |x, y| seg.is_set(x, y))?;
    let mut current = binary;
    for step in 2..=level.get() {
        current = match step {
            2 | 4 => morphology::dilate_disk(&current, r)?,
            3 => morphology::fill_convex_hull(&current)?,
            _ => morphology::fill_bounding_rect(&current)?,
        };
    }
    let kind = if level == MaskLevel::BOX { MaskKind::Box } else { MaskKind::Augmented };
    Ok(current.with_kind(kind))
}

/// All five levels, index 0 holding level 1.
pub fn augment_ladder(seg: &Mask, dilate_frac: f64) -> Result<[Mask; 5]> {
    let l1 = augment_mask(seg, MaskLevel::EXACT, dilate_frac)?;
    let r = dilation_radius(seg.width(), seg.height(), dilate_frac);
    let l2 = morphology::dilate_disk(&l1, r)?;
    let l3 = morphology::fill_convex_hull(&l2)?;
    let l4 = morphology::dilate_disk(&l3, r)?;
    let l5 = morphology::fill_bounding_rect(&l4)?;
    Ok([l1, l2, l3, l4, l5])
}

/// Renders `hf` as gray into `box_` of `scene`; pixels outside the box are untouched.
pub fn stitch_collage(scene: &ImageRaster, hf: &HFMap, box_: &BBox) -> Result<ImageRaster> {
    let (w, h) = scene.dims();
    let rect = box_.to_pixel_rect(w, h);
    if !rect.fits_in(w, h) {
        return Err(Error::BBoxOutOfFrame { width: w, height: h });
    }
    let patch = resample::resize_bilinear_f32(hf.raster(), rect.width(), rect.height())?;
    let channels = scene.channels();
    Raster::from_fn(w, h, channels, |x, y, c| {
        if !rect.contains(x, y) {
            return scene.get(x, y, c);
        }
        if c == 3 {
            return 255;
        }
        let v = patch.value(x - rect.x0, y - rect.y0) as f64;
        (v * 255.0).round().clamp(0.0, 255.0) as u8
    })
}
