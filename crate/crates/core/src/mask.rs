use serde::{Deserialize, Serialize};

use crate::bbox::PixelRect;
use crate::error::{Error, Result};
use crate::raster::{FloatRaster, ImageRaster, Raster};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Segmentation,
    Augmented,
    Box,
}

/// Single-channel mask with values in `[0, 1]`. Pixels at or above 0.5 count as set.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    raster: FloatRaster,
    kind: MaskKind,
}

impl Mask {
    pub fn new(raster: FloatRaster, kind: MaskKind) -> Result<Self> {
        if raster.channels() != 1 {
            return Err(Error::InvalidRaster(format!("masks are single-channel, got {}", raster.channels())));
        }
        if let Some(&v) = raster.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange { what: "mask sample", value: v as f64 });
        }
        Ok(Self { raster, kind })
    }

    pub fn from_fn(width: u32, height: u32, kind: MaskKind, mut f: impl FnMut(u32, u32) -> bool) -> Result<Self> {
        let raster = FloatRaster::from_fn(width, height, 1, |x, y, _| if f(x, y) { 1.0 } else { 0.0 })?;
        Ok(Self { raster, kind })
    }

    pub fn empty(width: u32, height: u32, kind: MaskKind) -> Result<Self> {
        Self::from_fn(width, height, kind, |_, _| false)
    }

    /// Filled rectangle.
    pub fn from_rect(width: u32, height: u32, rect: PixelRect) -> Result<Self> {
        Self::from_fn(width, height, MaskKind::Box, |x, y| rect.contains(x, y))
    }

    /// Thresholds an 8-bit image at 128 (luma for color input).
    pub fn from_image(image: &ImageRaster, kind: MaskKind) -> Result<Self> {
        Self::from_fn(image.width(), image.height(), kind, |x, y| image.luma(x, y) >= 127.5)
    }

    /// Renders set pixels as 255 and the rest as 0 (soft values are thresholded).
    pub fn to_image(&self) -> ImageRaster {
        Raster::from_fn(self.width(), self.height(), 1, |x, y, _| if self.is_set(x, y) { 255 } else { 0 })
            .expect("mask dims are valid")
    }

    pub fn with_kind(mut self, kind: MaskKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn width(&self) -> u32 {
        self.raster.width()
    }

    pub fn height(&self) -> u32 {
        self.raster.height()
    }

    pub fn dims(&self) -> (u32, u32) {
        self.raster.dims()
    }

    pub fn raster(&self) -> &FloatRaster {
        &self.raster
    }

    #[inline]
    pub fn value(&self, x: u32, y: u32) -> f32 {
        self.raster.value(x, y)
    }

    #[inline]
    pub fn is_set(&self, x: u32, y: u32) -> bool {
        self.raster.value(x, y) >= 0.5
    }

    pub fn is_binary(&self) -> bool {
        self.raster.data().iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn count(&self) -> usize {
        self.raster.data().iter().filter(|&&v| v >= 0.5).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Tight pixel rectangle around the set pixels.
    pub fn bounding_rect(&self) -> Option<PixelRect> {
        let (w, h) = self.dims();
        let mut rect: Option<PixelRect> = None;
        for y in 0..h {
            for x in 0..w {
                if self.is_set(x, y) {
                    let r = rect.get_or_insert(PixelRect { x0: x, y0: y, x1: x + 1, y1: y + 1 });
                    r.x0 = r.x0.min(x);
                    r.y0 = r.y0.min(y);
                    r.x1 = r.x1.max(x + 1);
                    r.y1 = r.y1.max(y + 1);
                }
            }
        }
        rect
    }

    /// Whether every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.dims() == other.dims()
            && self.raster.data().iter().zip(other.raster.data()).all(|(&a, &b)| a < 0.5 || b >= 0.5)
    }

    /// Pixels set in the mask, in row-major order.
    pub fn set_pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width();
        self.raster
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= 0.5)
            .map(move |(i, _)| ((i as u32) % w, (i as u32) / w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounding_rect_and_count() {
        let m = Mask::from_fn(6, 5, MaskKind::Segmentation, |x, y| (2..4).contains(&x) && (1..4).contains(&y)).unwrap();
        assert_eq!(m.count(), 6);
        assert_eq!(m.bounding_rect(), Some(PixelRect { x0: 2, y0: 1, x1: 4, y1: 4 }));
        assert!(Mask::empty(3, 3, MaskKind::Box).unwrap().bounding_rect().is_none());
    }

    #[test]
    fn image_round_trip_is_exact_for_binary() {
        let m = Mask::from_fn(4, 4, MaskKind::Segmentation, |x, y| (x + y) % 3 == 0).unwrap();
        let back = Mask::from_image(&m.to_image(), MaskKind::Segmentation).unwrap();
        assert_eq!(back, m);
        assert!(back.is_binary());
    }

    #[test]
    fn soft_values_allowed_but_not_binary() {
        let r = FloatRaster::from_vec(2, 1, vec![0.25, 1.0]).unwrap();
        let m = Mask::new(r, MaskKind::Augmented).unwrap();
        assert!(!m.is_binary());
        assert_eq!(m.count(), 1);
        assert!(Mask::new(FloatRaster::from_vec(1, 1, vec![1.5]).unwrap(), MaskKind::Box).is_err());
    }
}
