use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::raster::{FloatRaster, ImageRaster};

/// Bit depth used for quantized depth PNGs (`value / 65535`).
pub const DEPTH_PNG_BITS: u8 = 16;

const DEPTH_LEVELS: f64 = 65535.0;

/// Encodes an 8-bit gray, RGB or RGBA raster losslessly.
pub fn encode_png(image: &ImageRaster) -> Result<Vec<u8>> {
    let color = match image.channels() {
        1 => ExtendedColorType::L8,
        3 => ExtendedColorType::Rgb8,
        4 => ExtendedColorType::Rgba8,
        c => return Err(Error::InvalidRaster(format!("cannot encode {c}-channel PNG"))),
    };
    let mut out = Vec::new();
    PngEncoder::new(&mut out).write_image(image.data(), image.width(), image.height(), color)?;
    Ok(out)
}

/// Decodes an 8-bit PNG. Gray+alpha expands to RGBA; wider samples are rejected.
pub fn decode_png(bytes: &[u8]) -> Result<ImageRaster> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    let (w, h) = (img.width(), img.height());
    match img {
        DynamicImage::ImageLuma8(b) => ImageRaster::new(w, h, 1, b.into_raw()),
        DynamicImage::ImageRgb8(b) => ImageRaster::new(w, h, 3, b.into_raw()),
        DynamicImage::ImageRgba8(b) => ImageRaster::new(w, h, 4, b.into_raw()),
        DynamicImage::ImageLumaA8(_) => ImageRaster::new(w, h, 4, img.to_rgba8().into_raw()),
        other => Err(Error::UnsupportedBitDepth(format!("{:?} is not an 8-bit image", other.color()))),
    }
}

pub fn read_png(path: impl AsRef<Path>) -> Result<ImageRaster> {
    decode_png(&fs::read(path)?)
}

pub fn write_png(image: &ImageRaster, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_png(image)?)?;
    Ok(())
}

/// Quantizes depth to 16-bit gray with round-half-up. Only 16 bits are supported.
pub fn encode_depth_png(map: &DepthMap, bits: u8) -> Result<Vec<u8>> {
    if bits != DEPTH_PNG_BITS {
        return Err(Error::UnsupportedBitDepth(format!("{bits}-bit depth PNG; only 16-bit gray is supported")));
    }
    let mut raw = Vec::with_capacity(map.data().len() * 2);
    for &v in map.data() {
        let q = (v as f64 * DEPTH_LEVELS + 0.5).floor().clamp(0.0, DEPTH_LEVELS) as u16;
        raw.extend_from_slice(&q.to_ne_bytes());
    }
    let mut out = Vec::new();
    PngEncoder::new(&mut out).write_image(&raw, map.width(), map.height(), ExtendedColorType::L16)?;
    Ok(out)
}

pub fn decode_depth_png(bytes: &[u8]) -> Result<DepthMap> {
    let img = image::ImageReader::with_format(Cursor::new(bytes), ImageFormat::Png).decode()?;
    let (w, h) = (img.width(), img.height());
    match img {
        DynamicImage::ImageLuma16(b) => {
            let data = b.into_raw().into_iter().map(|q| (q as f64 / DEPTH_LEVELS) as f32).collect();
            DepthMap::new(FloatRaster::from_vec(w, h, data)?)
        }
        other => Err(Error::UnsupportedBitDepth(format!("depth PNG must be 16-bit gray, got {:?}", other.color()))),
    }
}

pub fn read_depth_png(path: impl AsRef<Path>) -> Result<DepthMap> {
    decode_depth_png(&fs::read(path)?)
}

pub fn write_depth_png(map: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_depth_png(map, DEPTH_PNG_BITS)?)?;
    Ok(())
}
