//! Row-major pixel container shared by images, depth maps and masks.

use crate::error::{Error, Result};

/// A sample type a [`Raster`] can hold.
pub trait Sample: Copy + PartialEq + Default + Send + Sync + std::fmt::Debug + 'static {
    fn is_valid(self) -> bool;
}

impl Sample for u8 {
    fn is_valid(self) -> bool {
        true
    }
}

impl Sample for f32 {
    fn is_valid(self) -> bool {
        self.is_finite()
    }
}

/// Interleaved, row-major raster with 1, 3 or 4 channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T> {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<T>,
}

/// 8-bit gray, RGB or RGBA image.
pub type ImageRaster = Raster<u8>;
/// Single- or multi-channel float map.
pub type FloatRaster = Raster<f32>;

impl<T: Sample> Raster<T> {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!("zero-sized raster {width}x{height}")));
        }
        if !matches!(channels, 1 | 3 | 4) {
            return Err(Error::InvalidRaster(format!("unsupported channel count {channels}")));
        }
        let expected = (width as usize)
            .checked_mul(height as usize)
            .and_then(|n| n.checked_mul(channels as usize))
            .ok_or(Error::DimensionOverflow { width: width.into(), height: height.into() })?;
        if data.len() != expected {
            return Err(Error::InvalidRaster(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_valid()) {
            return Err(Error::NonFiniteSample { index });
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: T) -> Result<Self> {
        let n = (width as usize) * (height as usize) * (channels as usize);
        Self::new(width, height, channels, vec![value; n])
    }

    /// Builds a raster by evaluating `f(x, y, channel)` for every sample.
    pub fn from_fn(width: u32, height: u32, channels: u8, mut f: impl FnMut(u32, u32, u8) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity((width as usize) * (height as usize) * (channels as usize));
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len_pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, c: u8) -> T {
        self.data[self.index(x, y) + c as usize]
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[T] {
        let i = self.index(x, y);
        &self.data[i..i + self.channels as usize]
    }

    /// Applies `f` to each sample, keeping the shape.
    pub fn map<U: Sample>(&self, f: impl Fn(T) -> U) -> Result<Raster<U>> {
        Raster::new(self.width, self.height, self.channels, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Mutable access for in-crate kernels; callers must keep samples valid.
    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn same_dims<U: Sample>(&self, other: &Raster<U>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch { expected: self.dims(), actual: other.dims() });
        }
        Ok(())
    }
}

impl ImageRaster {
    /// ITU-R BT.601 luma in `[0, 255]`; alpha is ignored.
    pub fn luma(&self, x: u32, y: u32) -> f64 {
        let p = self.pixel(x, y);
        match self.channels {
            1 => p[0] as f64,
            _ => 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64,
        }
    }

    /// Returns the same pixels with exactly `channels` channels.
    pub fn to_channels(&self, channels: u8) -> Result<ImageRaster> {
        if channels == self.channels {
            return Ok(self.clone());
        }
        Raster::from_fn(self.width, self.height, channels, |x, y, c| {
            let p = self.pixel(x, y);
            if channels == 1 {
                self.luma(x, y).round().clamp(0.0, 255.0) as u8
            } else if c == 3 {
                p.get(3).copied().unwrap_or(255)
            } else if self.channels == 1 {
                p[0]
            } else {
                p[c as usize]
            }
        })
    }
}

impl FloatRaster {
    pub fn value(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Single-channel map from row-major samples.
    pub fn from_vec(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        Raster::new(width, height, 1, data)
    }
}
