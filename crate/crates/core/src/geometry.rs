//! Square zoom-in crops and the 2.5D location metrics.

use serde::{Deserialize, Serialize};

use crate::bbox::{BBox, Location25D, PixelRect};
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::raster::{FloatRaster, ImageRaster};
use crate::resample;

pub const DEFAULT_ZOOM_RATIO: f64 = 2.0;
pub const DEFAULT_TARGET_RESOLUTION: u32 = 512;

/// Square crop window in source pixels plus the resize factor to the target resolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    pub square: PixelRect,
    pub scale: f64,
    pub target_resolution: u32,
}

/// Expands `box_` into a square of side `ratio * max(w, h)` around its center.
///
/// The square is shifted (never truncated) to stay inside the image, and its
/// side is clamped to the short image dimension.
pub fn zoom_in(image_size: (u32, u32), box_: &BBox, ratio: f64, target: u32) -> Result<CropSpec> {
    let (w, h) = image_size;
    if !(ratio.is_finite() && ratio >= 1.0) {
        return Err(Error::OutOfRange { what: "zoom ratio", value: ratio });
    }
    if target == 0 {
        return Err(Error::OutOfRange { what: "target resolution", value: 0.0 });
    }
    let [x1, y1, x2, y2] = box_.to_pixels(w, h);
    let (bw, bh) = (x2.round() - x1.round(), y2.round() - y1.round());
    if bw <= 0.0 || bh <= 0.0 {
        return Err(Error::DegenerateBox);
    }
    let side = ((ratio * (x2 - x1).max(y2 - y1)).round() as u32).clamp(1, w.min(h));
    let (cx, cy) = ((x1 + x2) / 2.0, (y1 + y2) / 2.0);
    let place = |center: f64, len: u32| -> u32 {
        let start = (center - side as f64 / 2.0).round();
        start.clamp(0.0, (len - side) as f64) as u32
    };
    let (x0, y0) = (place(cx, w), place(cy, h));
    Ok(CropSpec {
        square: PixelRect { x0, y0, x1: x0 + side, y1: y0 + side },
        scale: target as f64 / side as f64,
        target_resolution: target,
    })
}

impl CropSpec {
    pub fn side(&self) -> u32 {
        self.square.width()
    }

    /// Re-expresses a box from the source frame in the crop's normalized frame.
    pub fn map_bbox(&self, b: &BBox, image_size: (u32, u32)) -> Result<BBox> {
        let [x1, y1, x2, y2] = b.to_pixels(image_size.0, image_size.1);
        let side = self.side() as f64;
        let to_crop = |v: f64, o: u32| ((v - o as f64) / side).clamp(0.0, 1.0);
        BBox::new(
            to_crop(x1, self.square.x0),
            to_crop(y1, self.square.y0),
            to_crop(x2, self.square.x0),
            to_crop(y2, self.square.y0),
        )
    }

    pub fn crop_image(&self, image: &ImageRaster) -> Result<ImageRaster> {
        let t = self.target_resolution;
        resample::resize_bilinear_u8(&resample::crop(image, self.square)?, t, t)
    }

    pub fn crop_float(&self, raster: &FloatRaster) -> Result<FloatRaster> {
        let t = self.target_resolution;
        resample::resize_bilinear_f32(&resample::crop(raster, self.square)?, t, t)
    }

    pub fn crop_depth(&self, depth: &DepthMap) -> Result<DepthMap> {
        DepthMap::new(self.crop_float(depth.raster())?)
    }

    /// Nearest-neighbor, for depth that is only defined under a mask.
    pub fn crop_depth_nearest(&self, depth: &DepthMap) -> Result<DepthMap> {
        let t = self.target_resolution;
        DepthMap::new(resample::resize_nearest(&resample::crop(depth.raster(), self.square)?, t, t)?)
    }

    /// Nearest-neighbor so binary masks stay binary.
    pub fn crop_mask(&self, mask: &Mask) -> Result<Mask> {
        let t = self.target_resolution;
        let r = resample::resize_nearest(&resample::crop(mask.raster(), self.square)?, t, t)?;
        Mask::new(r, mask.kind())
    }
}

/// Intersection over union of two normalized boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Mean squared error over the four normalized corner coordinates.
pub fn bbox_mse(pred: &BBox, gt: &BBox) -> f64 {
    pred.coords().iter().zip(gt.coords()).map(|(p, g)| (p - g).powi(2)).sum::<f64>() / 4.0
}

pub fn depth_mse(pred: f64, gt: f64) -> Result<f64> {
    for v in [pred, gt] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange { what: "depth", value: v });
        }
    }
    Ok((pred - gt).powi(2))
}

/// Aggregated location metrics, serialized as the evaluation report core.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub n: usize,
    pub bbox_mse: f64,
    pub iou_mean: f64,
    pub depth_mse: f64,
}

/// Per-record metric values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordMetrics {
    pub iou: f64,
    pub bbox_mse: f64,
    pub depth_mse: f64,
}

impl RecordMetrics {
    pub fn compute(pred: &Location25D, gt: &Location25D) -> Result<Self> {
        Ok(Self {
            iou: iou(&pred.bbox, &gt.bbox),
            bbox_mse: bbox_mse(&pred.bbox, &gt.bbox),
            depth_mse: depth_mse(pred.depth(), gt.depth())?,
        })
    }
}

/// Means over a batch. Empty input is an error.
pub fn summarize(records: &[RecordMetrics]) -> Result<MetricsSummary> {
    if records.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = records.len();
    let mean = |f: fn(&RecordMetrics) -> f64| records.iter().map(f).sum::<f64>() / n as f64;
    Ok(MetricsSummary {
        n,
        bbox_mse: mean(|r| r.bbox_mse),
        iou_mean: mean(|r| r.iou),
        depth_mse: mean(|r| r.depth_mse),
    })
}
