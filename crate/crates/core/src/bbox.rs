//! Normalized boxes, pixel rectangles and 2.5D locations.
//!
//! Boxes are stored in normalized `[0, 1]` coordinates with the origin at the
//! top-left corner. Pixel coordinates only appear at I/O edges through
//! [`PixelRect`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in normalized image coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let coords = [x1, y1, x2, y2];
        if coords.iter().any(|c| !c.is_finite() || *c < 0.0 || *c > 1.0) {
            return Err(Error::InvalidBBox(format!("coordinates {coords:?} must lie in [0, 1]")));
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(Error::InvalidBBox(format!("{coords:?} requires x1 < x2 and y1 < y2")));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Box from a center and a size, clipped to the unit square.
    pub fn from_center_clipped(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new((cx - w / 2.0).max(0.0), (cy - h / 2.0).max(0.0), (cx + w / 2.0).min(1.0), (cy + h / 2.0).min(1.0))
    }

    /// Converts a pixel box `(x1, y1, x2, y2)` in a `width x height` frame.
    pub fn from_pixels(x1: f64, y1: f64, x2: f64, y2: f64, width: u32, height: u32) -> Result<Self> {
        let (w, h) = (width as f64, height as f64);
        if x1 < 0.0 || y1 < 0.0 || x2 > w || y2 > h {
            return Err(Error::BBoxOutOfFrame { width, height });
        }
        Self::new(x1 / w, y1 / h, x2 / w, y2 / h)
    }

    pub fn from_rect(rect: PixelRect, width: u32, height: u32) -> Result<Self> {
        Self::from_pixels(rect.x0 as f64, rect.y0 as f64, rect.x1 as f64, rect.y1 as f64, width, height)
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Area of the overlap with `other` (zero when disjoint).
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    /// Pixel coordinates in a `width x height` frame (unrounded).
    pub fn to_pixels(&self, width: u32, height: u32) -> [f64; 4] {
        let (w, h) = (width as f64, height as f64);
        [self.x1 * w, self.y1 * h, self.x2 * w, self.y2 * h]
    }

    /// Rounds to the covered pixel rectangle; always at least one pixel.
    pub fn to_pixel_rect(&self, width: u32, height: u32) -> PixelRect {
        let [px1, py1, px2, py2] = self.to_pixels(width, height);
        let round_axis = |a: f64, b: f64, n: u32| {
            let lo = (a.round() as i64).clamp(0, n as i64 - 1) as u32;
            let hi = (b.round() as i64).clamp(lo as i64 + 1, n as i64) as u32;
            (lo, hi)
        };
        let (x0, x1) = round_axis(px1, px2, width);
        let (y0, y1) = round_axis(py1, py2, height);
        PixelRect { x0, y0, x1, y1 }
    }

    /// The pixel nearest the box center, kept inside the box's pixel rect.
    pub fn center_pixel(&self, width: u32, height: u32) -> (u32, u32) {
        let rect = self.to_pixel_rect(width, height);
        let (cx, cy) = self.center();
        let px = ((cx * width as f64).floor() as i64).clamp(rect.x0 as i64, rect.x1 as i64 - 1);
        let py = ((cy * height as f64).floor() as i64).clamp(rect.y0 as i64, rect.y1 as i64 - 1);
        (px as u32, py as u32)
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.coords()
    }
}

impl std::str::FromStr for BBox {
    type Err = Error;

    /// Parses `x1,y1,x2,y2`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidBBox(format!("{s:?}: {e}")))?;
        let coords: [f64; 4] = parts
            .try_into()
            .map_err(|_| Error::InvalidBBox(format!("{s:?}: expected four comma-separated numbers")))?;
        BBox::try_from(coords)
    }
}

/// Half-open integer rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1 && self.x1 <= width && self.y1 <= height
    }
}

/// Normalized box plus a scalar depth in `[0, 1]` (larger is nearer).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLocation")]
pub struct Location25D {
    pub bbox: BBox,
    depth: f64,
}

#[derive(Deserialize)]
struct RawLocation {
    bbox: BBox,
    depth: f64,
}

impl TryFrom<RawLocation> for Location25D {
    type Error = Error;

    fn try_from(raw: RawLocation) -> Result<Self> {
        Location25D::new(raw.bbox, raw.depth)
    }
}

impl Location25D {
    pub fn new(bbox: BBox, depth: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&depth) {
            return Err(Error::OutOfRange { what: "depth", value: depth });
        }
        Ok(Self { bbox, depth })
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_inverted_and_out_of_range() {
        assert!(BBox::new(0.5, 0.1, 0.4, 0.2).is_err());
        assert!(BBox::new(0.1, 0.1, 0.1, 0.2).is_err());
        assert!(BBox::new(-0.1, 0.1, 0.4, 0.2).is_err());
        assert!(BBox::new(0.1, 0.1, 1.2, 0.2).is_err());
        assert!(BBox::new(0.1, f64::NAN, 0.3, 0.2).is_err());
    }

    #[test]
    fn location_json_shape() {
        let loc = Location25D::new(BBox::new(0.1, 0.2, 0.3, 0.4).unwrap(), 0.5).unwrap();
        let json = serde_json::to_string(&loc).unwrap();
        assert_eq!(json, r#"{"bbox":[0.1,0.2,0.3,0.4],"depth":0.5}"#);
        let back: Location25D = serde_json::from_str(&json).unwrap();
        assert_eq!(back, loc);
        assert!(serde_json::from_str::<Location25D>(r#"{"bbox":[0.1,0.2,0.3,0.4],"depth":1.5}"#).is_err());
        assert!(serde_json::from_str::<Location25D>(r#"{"bbox":[0.3,0.2,0.1,0.4],"depth":0.5}"#).is_err());
    }

    #[test]
    fn parses_cli_form() {
        let b: BBox = "0.1, 0.2,0.5,0.6".parse().unwrap();
        assert_eq!(b.coords(), [0.1, 0.2, 0.5, 0.6]);
        assert!("0.1,0.2,0.5".parse::<BBox>().is_err());
        assert!("a,b,c,d".parse::<BBox>().is_err());
    }

    #[test]
    fn center_pixel_of_tiny_box_stays_inside() {
        let b = BBox::new(0.36, 0.0, 0.39, 0.1).unwrap();
        let rect = b.to_pixel_rect(10, 10);
        assert_eq!(rect.width(), 1);
        let (px, py) = b.center_pixel(10, 10);
        assert!(rect.contains(px, py));
    }

    #[test]
    fn pixel_box_out_of_frame() {
        assert!(matches!(BBox::from_pixels(-1.0, 0.0, 10.0, 10.0, 100, 100), Err(Error::BBoxOutOfFrame { .. })));
    }

    proptest! {
        #[test]
        fn pixel_round_trip_within_half_pixel(
            a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, d in 0.0f64..1.0,
            w in 1u32..2000, h in 1u32..2000,
        ) {
            prop_assume!((a - b).abs() > 1e-6 && (c - d).abs() > 1e-6);
            let bbox = BBox::new(a.min(b), c.min(d), a.max(b), c.max(d)).unwrap();
            let px = bbox.to_pixels(w, h);
            let back = BBox::from_pixels(px[0], px[1], px[2], px[3], w, h).unwrap();
            let dims = [w, h, w, h];
            for ((b, a), dim) in back.coords().iter().zip(bbox.coords()).zip(dims) {
                prop_assert!((b - a).abs() * dim as f64 <= 0.5);
            }
            let rect = bbox.to_pixel_rect(w, h);
            prop_assert!(rect.fits_in(w, h));
            let rounded = [rect.x0, rect.y0, rect.x1, rect.y1];
            for i in 0..4 {
                // at least one pixel wide, so the far edge may be pushed by one
                prop_assert!((rounded[i] as f64 - px[i]).abs() <= 1.5);
            }
        }
    }
}
