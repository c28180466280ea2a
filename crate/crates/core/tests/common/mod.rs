#![allow(dead_code)]

use forge_core::{BBox, DepthMap, ImageRaster, Mask, MaskKind, Raster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_depth(rng: &mut ChaCha8Rng, w: u32, h: u32) -> DepthMap {
    DepthMap::from_fn(w, h, |_, _| rng.random::<f32>()).unwrap()
}

pub fn random_image(rng: &mut ChaCha8Rng, w: u32, h: u32, channels: u8) -> ImageRaster {
    Raster::from_fn(w, h, channels, |_, _, _| rng.random::<u8>()).unwrap()
}

/// Union of 1 to 4 random ellipses; never empty.
pub fn random_blob(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Mask {
    let n = rng.random_range(1..=4);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..n)
        .map(|_| {
            (
                rng.random_range(0.0..w as f64),
                rng.random_range(0.0..h as f64),
                rng.random_range(1.0..(w as f64 / 3.0).max(1.5)),
                rng.random_range(1.0..(h as f64 / 3.0).max(1.5)),
            )
        })
        .collect();
    let (cx, cy, ..) = blobs[0];
    Mask::from_fn(w, h, MaskKind::Segmentation, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        (x == cx as u32 && y == cy as u32)
            || blobs.iter().any(|&(bx, by, rx, ry)| ((px - bx) / rx).powi(2) + ((py - by) / ry).powi(2) <= 1.0)
    })
    .unwrap()
}

/// Box whose pixel rect in a `w x h` frame is at least 2 px on each side.
pub fn random_box(rng: &mut ChaCha8Rng, w: u32, h: u32) -> BBox {
    let x1 = rng.random_range(0..w - 2);
    let y1 = rng.random_range(0..h - 2);
    let x2 = rng.random_range(x1 + 2..=w);
    let y2 = rng.random_range(y1 + 2..=h);
    BBox::from_pixels(x1 as f64, y1 as f64, x2 as f64, y2 as f64, w, h).unwrap()
}
