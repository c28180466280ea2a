use crate::error::{Error, Result};
use crate::raster::FloatRaster;

/// Single-channel depth raster with values in `[0, 1]`; larger is nearer.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    raster: FloatRaster,
}

impl DepthMap {
    /// Wraps `raster`, rejecting anything outside `[0, 1]`.
    pub fn new(raster: FloatRaster) -> Result<Self> {
        if raster.channels() != 1 {
            return Err(Error::InvalidRaster(format!("depth maps are single-channel, got {}", raster.channels())));
        }
        if let Some(&v) = raster.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange { what: "depth sample", value: v as f64 });
        }
        Ok(Self { raster })
    }

    /// Wraps `raster` after clamping to `[0, 1]`; returns how many samples moved.
    pub fn clamped(mut raster: FloatRaster) -> Result<(Self, usize)> {
        if raster.channels() != 1 {
            return Err(Error::InvalidRaster(format!("depth maps are single-channel, got {}", raster.channels())));
        }
        let mut moved = 0;
        for v in raster.data_mut() {
            let c = v.clamp(0.0, 1.0);
            if c != *v {
                moved += 1;
                *v = c;
            }
        }
        Ok((Self { raster }, moved))
    }

    /// Per-image min-max normalization to `[0, 1]`; a constant input maps to 1.
    pub fn normalized(raster: FloatRaster) -> Result<Self> {
        let (lo, hi) =
            raster.data().iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        let out = if span > 0.0 { raster.map(|v| ((v - lo) / span).clamp(0.0, 1.0))? } else { raster.map(|_| 1.0)? };
        Self::new(out)
    }

    pub fn constant(width: u32, height: u32, value: f32) -> Result<Self> {
        Self::new(FloatRaster::filled(width, height, 1, value)?)
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> f32) -> Result<Self> {
        Self::new(FloatRaster::from_fn(width, height, 1, |x, y, _| f(x, y))?)
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

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.raster.value(x, y)
    }

    pub fn raster(&self) -> &FloatRaster {
        &self.raster
    }

    pub fn into_raster(self) -> FloatRaster {
        self.raster
    }

    pub fn data(&self) -> &[f32] {
        self.raster.data()
    }
}
