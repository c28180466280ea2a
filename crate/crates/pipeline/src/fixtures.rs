//! Deterministic synthetic fixtures: a small COCO-style set, a street scene
//! with an occluding post for compose runs, and a short video clip.
//!
//! Everything is drawn procedurally from fixed seeds, so the bundled copies
//! under `fixtures/` can be regenerated and checked byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use forge_core::codec::{encode_pfm, encode_png};
use forge_core::relations::Instance;
use forge_core::seed::derive_seed;
use forge_core::{BBox, DepthMap, ImageRaster, Mask, MaskKind, Raster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coco::{rasterize_polygons, CocoAnnotation, CocoCategory, CocoFile, CocoImage, Segmentation};
use crate::error::Result;
use crate::store::write_atomic;

pub type FileMap = BTreeMap<String, Vec<u8>>;

const COCO_SEED: u64 = 2024;
pub const COCO_IMAGES: usize = 20;
const COCO_W: u32 = 128;
const COCO_H: u32 = 96;
pub const CATEGORIES: [&str; 12] =
    ["dog", "car", "bowl", "spoon", "carrot", "cup", "plate", "chair", "sofa", "lamp", "person", "tree"];

pub const STREET_W: u32 = 160;
pub const STREET_H: u32 = 120;
/// Columns covered by the lamp post in the street scene.
pub const POST_COLUMNS: (u32, u32) = (74, 80);
pub const POST_DEPTH: f32 = 0.85;
/// Color of the dog reference; no scene pixel has both red and blue at 255.
pub const DOG_COLOR: [u8; 3] = [255, 64, 255];

fn json_pretty<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("fixture json");
    out.push(b'\n');
    out
}

fn ellipse_polygon(cx: f64, cy: f64, rx: f64, ry: f64) -> Vec<f64> {
    (0..16)
        .flat_map(|i| {
            let t = i as f64 / 16.0 * std::f64::consts::TAU;
            [(cx + rx * t.cos() * 100.0).round() / 100.0, (cy + ry * t.sin() * 100.0).round() / 100.0]
        })
        .collect()
}

fn paint(image: &mut [u8], depth: &mut [f32], w: u32, mask: &Mask, color: [u8; 3], d: f32) {
    for (x, y) in mask.set_pixels() {
        let i = (y * w + x) as usize;
        image[i * 3..i * 3 + 3].copy_from_slice(&color);
        depth[i] = d;
    }
}

/// Twenty images with 3 to 6 shapes each. Shapes are annotated as polygons,
/// PNG mask files or bare boxes in rotation.
pub fn coco_mini() -> Result<FileMap> {
    let mut files = FileMap::new();
    let categories: Vec<CocoCategory> =
        CATEGORIES.iter().enumerate().map(|(i, n)| CocoCategory { id: i as u64 + 1, name: n.to_string() }).collect();
    let mut images = Vec::new();
    let mut annotations = Vec::new();
    let mut next_ann = 1u64;
    for img_idx in 0..COCO_IMAGES {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(COCO_SEED, img_idx as u64));
        let (w, h) = (COCO_W, COCO_H);
        let mut pixels: Vec<u8> =
            (0..h).flat_map(|y| (0..w).flat_map(move |_| [60 + (y / 2) as u8, 90 + (y / 3) as u8, 140u8])).collect();
        let mut depth: Vec<f32> =
            (0..h).flat_map(|y| (0..w).map(move |_| 0.1 + 0.3 * y as f32 / (h - 1) as f32)).collect();
        let file_name = format!("img_{img_idx:02}.png");
        let n_inst = rng.random_range(3..=6);
        for j in 0..n_inst {
            let cat = rng.random_range(0..CATEGORIES.len());
            let cx = rng.random_range(14.0..(w as f64 - 14.0));
            let cy = rng.random_range(12.0..(h as f64 - 12.0));
            let rx = rng.random_range(5.0..16.0f64);
            let ry = rng.random_range(5.0..14.0f64);
            let color = [rng.random_range(0..200u8), rng.random_range(0..200u8), rng.random_range(0..200u8)];
            let d = rng.random_range(0.05..0.95f32);
            let style = j % 3;
            let (mask, segmentation, mask_file) = match style {
                0 => {
                    let poly = ellipse_polygon(cx, cy, rx, ry);
                    let mask = rasterize_polygons(std::slice::from_ref(&poly), w, h)?;
                    (mask, Some(Segmentation::Polygons(vec![poly])), None)
                }
                1 => {
                    let tri = vec![cx, cy - ry, cx + rx, cy + ry, cx - rx, cy + ry]
                        .into_iter()
                        .map(|v| (v * 100.0).round() / 100.0)
                        .collect::<Vec<f64>>();
                    let mask = rasterize_polygons(std::slice::from_ref(&tri), w, h)?;
                    let rel = format!("masks/img_{img_idx:02}_{next_ann}.png");
                    files.insert(rel.clone(), encode_png(&mask.to_image())?);
                    (mask, None, Some(rel))
                }
                _ => {
                    let (x0, y0) = ((cx - rx).round() as u32, (cy - ry).round() as u32);
                    let (x1, y1) = ((cx + rx).round() as u32, (cy + ry).round() as u32);
                    let mask =
                        Mask::from_fn(w, h, MaskKind::Segmentation, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1)?;
                    (mask, None, None)
                }
            };
            if mask.is_empty() {
                continue;
            }
            paint(&mut pixels, &mut depth, w, &mask, color, d);
            let r = mask.bounding_rect().expect("non-empty");
            annotations.push(CocoAnnotation {
                id: next_ann,
                image_id: img_idx as u64 + 1,
                category_id: cat as u64 + 1,
                bbox: [r.x0 as f64, r.y0 as f64, r.width() as f64, r.height() as f64],
                segmentation,
                mask_file,
            });
            next_ann += 1;
        }
        files.insert(format!("images/{file_name}"), encode_png(&Raster::new(w, h, 3, pixels)?)?);
        files.insert(format!("depth/img_{img_idx:02}.pfm"), encode_pfm(&DepthMap::new(Raster::new(w, h, 1, depth)?)?));
        images.push(CocoImage { id: img_idx as u64 + 1, file_name, width: w, height: h });
    }
    files.insert("annotations.json".into(), json_pretty(&CocoFile { images, annotations, categories }));
    Ok(files)
}

fn street_depth_at(x: u32, y: u32) -> f32 {
    if (POST_COLUMNS.0..POST_COLUMNS.1).contains(&x) && y >= 16 {
        POST_DEPTH
    } else if (112..150).contains(&x) && (62..86).contains(&y) {
        0.6
    } else if y < 40 {
        0.05
    } else if y < 60 {
        0.2
    } else {
        0.3 + 0.7 * (y - 60) as f32 / (STREET_H - 61) as f32
    }
}

fn street_color_at(x: u32, y: u32) -> [u8; 3] {
    if (POST_COLUMNS.0..POST_COLUMNS.1).contains(&x) && y >= 16 {
        [40, 40, 45]
    } else if (112..150).contains(&x) && (62..86).contains(&y) {
        [200, 30, 30]
    } else if y < 40 {
        [110, 160, 220]
    } else if y < 60 {
        [150, 140, 130 - ((x / 8) % 2) as u8 * 20]
    } else {
        let lane = (y > 88 && y < 92 && (x / 10).is_multiple_of(2)) as u8;
        [90 + lane * 120, 90 + lane * 120, 95 + lane * 100]
    }
}

/// Dog silhouette: body, head, legs and tail, in the object's own frame.
pub fn dog_mask(size: u32) -> Result<Mask> {
    let s = size as f64;
    Ok(Mask::from_fn(size, size, MaskKind::Segmentation, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let ell = |cx: f64, cy: f64, rx: f64, ry: f64| ((px - cx) / rx).powi(2) + ((py - cy) / ry).powi(2) <= 1.0;
        let body = ell(0.5 * s, 0.5 * s, 0.3 * s, 0.17 * s);
        let head = ell(0.8 * s, 0.3 * s, 0.12 * s, 0.11 * s);
        let leg = |lx: f64| px >= lx && px < lx + 0.07 * s && py >= 0.55 * s && py < 0.9 * s;
        let tail = px >= 0.12 * s && px < 0.24 * s && py >= 0.3 * s && py < 0.36 * s;
        body || head || leg(0.26 * s) || leg(0.38 * s) || leg(0.58 * s) || leg(0.68 * s) || tail
    })?)
}

/// Street scene with a car and a lamp post, a dog reference with alpha, and
/// depth maps for both.
pub fn street() -> Result<FileMap> {
    let mut files = FileMap::new();
    let (w, h) = (STREET_W, STREET_H);
    let scene: ImageRaster = Raster::from_fn(w, h, 3, |x, y, c| street_color_at(x, y)[c as usize])?;
    files.insert("street.png".into(), encode_png(&scene)?);
    files.insert("street_depth.pfm".into(), encode_pfm(&DepthMap::from_fn(w, h, street_depth_at)?));

    let size = 64;
    let mask = dog_mask(size)?;
    let dog: ImageRaster = Raster::from_fn(size, size, 4, |x, y, c| match (mask.is_set(x, y), c) {
        (true, 3) => 255,
        (true, c) => DOG_COLOR[c as usize],
        (false, _) => 0,
    })?;
    files.insert("dog.png".into(), encode_png(&dog)?);
    // gentle dome: nearest at the body center
    let dog_depth = DepthMap::from_fn(size, size, |x, y| {
        let (dx, dy) = (x as f32 / size as f32 - 0.5, y as f32 / size as f32 - 0.5);
        0.55 - 0.06 * (dx * dx + dy * dy)
    })?;
    files.insert("dog_depth.pfm".into(), encode_pfm(&dog_depth));

    let px = |x: u32, y: u32| (x as f64 / w as f64, y as f64 / h as f64);
    let (cx0, cy0) = px(112, 62);
    let (cx1, cy1) = px(150, 86);
    let (lx0, ly0) = px(POST_COLUMNS.0, 16);
    let (lx1, ly1) = px(POST_COLUMNS.1, h);
    let annotations = vec![
        Instance { id: 1, name: "car".into(), bbox: BBox::new(cx0, cy0, cx1, cy1)? },
        Instance { id: 2, name: "lamp post".into(), bbox: BBox::new(lx0, ly0, lx1, ly1)? },
    ];
    files.insert("annotations.json".into(), json_pretty(&annotations));
    Ok(files)
}

/// Three frames of a ball rolling right, with its per-frame masks.
pub fn video() -> Result<FileMap> {
    let mut files = FileMap::new();
    let (w, h) = (64, 48);
    for f in 0..3u32 {
        let (cx, cy) = (14.0 + 16.0 * f as f64, 28.0);
        let inside = |x: u32, y: u32| ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)) <= 64.0;
        let frame: ImageRaster = Raster::from_fn(w, h, 3, |x, y, c| {
            if inside(x, y) {
                [230, 120, 20][c as usize]
            } else {
                [70, 110 + (y as u8 / 2), 70][c as usize]
            }
        })?;
        let mask = Mask::from_fn(w, h, MaskKind::Segmentation, inside)?;
        files.insert(format!("frame_{f}.png"), encode_png(&frame)?);
        files.insert(format!("mask_{f}.png"), encode_png(&mask.to_image())?);
    }
    Ok(files)
}

/// All fixtures keyed by path under the fixture root.
pub fn all() -> Result<FileMap> {
    let mut out = FileMap::new();
    for (dir, files) in [("coco-mini", coco_mini()?), ("street", street()?), ("video", video()?)] {
        out.extend(files.into_iter().map(|(k, v)| (format!("{dir}/{k}"), v)));
    }
    Ok(out)
}

pub fn write_all(root: &Path) -> Result<()> {
    for (rel, bytes) in all()? {
        write_atomic(&root.join(rel), &bytes)?;
    }
    Ok(())
}
