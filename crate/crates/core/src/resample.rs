//! Resizing and cropping with pixel-center alignment.

use crate::bbox::PixelRect;
use crate::error::Result;
use crate::raster::{FloatRaster, ImageRaster, Raster, Sample};

#[inline]
fn src_coord(dst: u32, dst_len: u32, src_len: u32) -> f64 {
    ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5).clamp(0.0, (src_len - 1) as f64)
}

#[inline]
fn nearest_coord(dst: u32, dst_len: u32, src_len: u32) -> u32 {
    (((dst as f64 + 0.5) * src_len as f64 / dst_len as f64).floor() as u32).min(src_len - 1)
}

fn bilinear_f64<T: Sample>(
    src: &Raster<T>,
    width: u32,
    height: u32,
    to_f: impl Fn(T) -> f64,
    mut emit: impl FnMut(f64),
) {
    let (sw, sh) = src.dims();
    let ch = src.channels();
    for y in 0..height {
        let fy = src_coord(y, height, sh);
        let y0 = fy.floor() as u32;
        let y1 = (y0 + 1).min(sh - 1);
        let ty = fy - y0 as f64;
        for x in 0..width {
            let fx = src_coord(x, width, sw);
            let x0 = fx.floor() as u32;
            let x1 = (x0 + 1).min(sw - 1);
            let tx = fx - x0 as f64;
            for c in 0..ch {
                let a = to_f(src.get(x0, y0, c));
                let b = to_f(src.get(x1, y0, c));
                let p = to_f(src.get(x0, y1, c));
                let q = to_f(src.get(x1, y1, c));
                let top = a + (b - a) * tx;
                let bottom = p + (q - p) * tx;
                emit(top + (bottom - top) * ty);
            }
        }
    }
}

/// Bilinear resize of a float raster. Identity when the size is unchanged.
pub fn resize_bilinear_f32(src: &FloatRaster, width: u32, height: u32) -> Result<FloatRaster> {
    if src.dims() == (width, height) {
        return Ok(src.clone());
    }
    let mut out = Vec::with_capacity(width as usize * height as usize * src.channels() as usize);
    bilinear_f64(src, width, height, |v| v as f64, |v| out.push(v as f32));
    Raster::new(width, height, src.channels(), out)
}

/// Bilinear resize of an 8-bit image with round-to-nearest.
pub fn resize_bilinear_u8(src: &ImageRaster, width: u32, height: u32) -> Result<ImageRaster> {
    if src.dims() == (width, height) {
        return Ok(src.clone());
    }
    let mut out = Vec::with_capacity(width as usize * height as usize * src.channels() as usize);
    bilinear_f64(src, width, height, |v| v as f64, |v| out.push(v.round().clamp(0.0, 255.0) as u8));
    Raster::new(width, height, src.channels(), out)
}

/// Nearest-neighbor resize; keeps the sample set (binary masks stay binary).
pub fn resize_nearest<T: Sample>(src: &Raster<T>, width: u32, height: u32) -> Result<Raster<T>> {
    if src.dims() == (width, height) {
        return Ok(src.clone());
    }
    let (sw, sh) = src.dims();
    let xs: Vec<u32> = (0..width).map(|x| nearest_coord(x, width, sw)).collect();
    Raster::from_fn(width, height, src.channels(), |x, y, c| src.get(xs[x as usize], nearest_coord(y, height, sh), c))
}

/// Copies `rect` out of `src`; the rect must fit inside the frame.
pub fn crop<T: Sample>(src: &Raster<T>, rect: PixelRect) -> Result<Raster<T>> {
    if !rect.fits_in(src.width(), src.height()) {
        return Err(crate::Error::BBoxOutOfFrame { width: src.width(), height: src.height() });
    }
    Raster::from_fn(rect.width(), rect.height(), src.channels(), |x, y, c| src.get(rect.x0 + x, rect.y0 + y, c))
}

/// Copies a window that may extend past the frame; outside samples take `fill`.
pub fn crop_padded<T: Sample>(
    src: &Raster<T>,
    x0: i64,
    y0: i64,
    width: u32,
    height: u32,
    fill: T,
) -> Result<Raster<T>> {
    let (sw, sh) = (src.width() as i64, src.height() as i64);
    Raster::from_fn(width, height, src.channels(), |x, y, c| {
        let (sx, sy) = (x0 + x as i64, y0 + y as i64);
        if sx >= 0 && sy >= 0 && sx < sw && sy < sh {
            src.get(sx as u32, sy as u32, c)
        } else {
            fill
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_constant_stays_constant() {
        let src = FloatRaster::filled(7, 3, 1, 0.25).unwrap();
        let out = resize_bilinear_f32(&src, 19, 11).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.25));
        let img = ImageRaster::filled(5, 5, 3, 200).unwrap();
        assert!(resize_bilinear_u8(&img, 2, 9).unwrap().data().iter().all(|&v| v == 200));
    }

    #[test]
    fn bilinear_upsample_interpolates_linearly() {
        let src = FloatRaster::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        let out = resize_bilinear_f32(&src, 4, 1).unwrap();
        // centers at -0.25, 0.25, 0.75, 1.25 in source space, clamped at the ends
        assert_eq!(out.data(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn nearest_keeps_values() {
        let src = FloatRaster::from_vec(3, 1, vec![0.0, 1.0, 0.0]).unwrap();
        let out = resize_nearest(&src, 9, 2).unwrap();
        assert_eq!(&out.data()[..9], &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn crop_padded_fills_outside() {
        let src = ImageRaster::from_fn(2, 2, 1, |x, y, _| (x + 2 * y) as u8).unwrap();
        let out = crop_padded(&src, -1, 0, 3, 2, 9).unwrap();
        assert_eq!(out.data(), &[9, 0, 1, 9, 2, 3]);
        assert!(crop(&src, PixelRect { x0: 1, y0: 0, x1: 3, y1: 1 }).is_err());
    }
}
