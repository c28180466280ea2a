//! COCO-style annotations: JSON, PNG instance masks and PFM depth maps.
//!
//! Each annotation's shape comes from, in order of preference, a `mask_file`
//! PNG (relative to the annotation file), polygon or uncompressed-RLE
//! `segmentation`, or the bbox itself.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use forge_core::codec::{read_pfm, read_png};
use forge_core::relations::InstanceId;
use forge_core::{BBox, DepthMap, ImageRaster, Mask, MaskKind};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, json_err, PipelineError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocoFile {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Segmentation {
    Polygons(Vec<Vec<f64>>),
    Rle { counts: RleCounts, size: [u32; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RleCounts {
    Uncompressed(Vec<u64>),
    Compressed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    /// `[x, y, width, height]` in pixels.
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<Segmentation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_file: Option<String>,
}

/// One annotated instance, resolved against its image.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneInstance {
    pub id: InstanceId,
    pub name: String,
    pub bbox: BBox,
    pub mask: Mask,
}

/// An image with its instances and depth map, fully loaded.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub image_id: u64,
    pub image: ImageRaster,
    pub depth: Option<DepthMap>,
    pub instances: Vec<SceneInstance>,
}

/// Annotation file plus the directories its references resolve against.
#[derive(Clone, Debug)]
pub struct CocoSource {
    pub file: CocoFile,
    pub ann_dir: PathBuf,
    pub image_dir: PathBuf,
    pub depth_dir: Option<PathBuf>,
}

impl CocoSource {
    pub fn open(ann_path: &Path, image_dir: Option<&Path>, depth_dir: Option<&Path>) -> Result<Self> {
        let bytes = std::fs::read(ann_path).map_err(io_err(ann_path))?;
        let file: CocoFile = serde_json::from_slice(&bytes).map_err(json_err(ann_path))?;
        let ann_dir = ann_path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            image_dir: image_dir.map(Path::to_path_buf).unwrap_or_else(|| ann_dir.clone()),
            depth_dir: depth_dir.map(Path::to_path_buf),
            ann_dir,
            file,
        })
    }

    /// Depth map path for an image: `{depth_dir}/{file stem}.pfm`.
    pub fn depth_path(&self, image: &CocoImage) -> Option<PathBuf> {
        let stem = Path::new(&image.file_name).file_stem()?;
        Some(self.depth_dir.as_ref()?.join(stem).with_extension("pfm"))
    }

    /// Loads every image in file order.
    pub fn load_scenes(&self) -> Result<Vec<Scene>> {
        let names: HashMap<u64, &str> = self.file.categories.iter().map(|c| (c.id, c.name.as_str())).collect();
        let mut by_image: HashMap<u64, Vec<&CocoAnnotation>> = HashMap::new();
        for a in &self.file.annotations {
            by_image.entry(a.image_id).or_default().push(a);
        }
        self.file
            .images
            .iter()
            .map(|img| {
                let image = read_png(self.image_dir.join(&img.file_name))?;
                if image.dims() != (img.width, img.height) {
                    return Err(PipelineError::Annotations(format!(
                        "{}: annotated {}x{}, file is {}x{}",
                        img.file_name,
                        img.width,
                        img.height,
                        image.width(),
                        image.height()
                    )));
                }
                let depth = match self.depth_path(img) {
                    Some(p) if p.exists() => {
                        let read = read_pfm(&p)?;
                        if read.was_clamped() {
                            log::warn!("{}: {} depth samples clamped to [0,1]", p.display(), read.clamped);
                        }
                        if read.map.dims() != image.dims() {
                            return Err(PipelineError::Annotations(format!(
                                "{}: depth size differs from image",
                                p.display()
                            )));
                        }
                        Some(read.map)
                    }
                    _ => None,
                };
                let mut anns = by_image.remove(&img.id).unwrap_or_default();
                anns.sort_by_key(|a| a.id);
                let instances = anns
                    .into_iter()
                    .map(|a| {
                        let name = names.get(&a.category_id).ok_or_else(|| {
                            PipelineError::Annotations(format!(
                                "annotation {} has unknown category {}",
                                a.id, a.category_id
                            ))
                        })?;
                        self.instance(img, a, name)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Scene { image_id: img.id, image, depth, instances })
            })
            .collect()
    }

    fn instance(&self, img: &CocoImage, a: &CocoAnnotation, name: &str) -> Result<SceneInstance> {
        let (w, h) = (img.width, img.height);
        let [x, y, bw, bh] = a.bbox;
        let clip = |v: f64, max: u32| v.clamp(0.0, max as f64);
        let bbox = BBox::from_pixels(clip(x, w), clip(y, h), clip(x + bw, w), clip(y + bh, h), w, h)
            .map_err(|e| PipelineError::Annotations(format!("annotation {}: {e}", a.id)))?;
        let mask = if let Some(file) = &a.mask_file {
            let m = Mask::from_image(&read_png(self.ann_dir.join(file))?, MaskKind::Segmentation)?;
            if m.dims() != (w, h) {
                return Err(PipelineError::Annotations(format!("annotation {}: mask size differs from image", a.id)));
            }
            m
        } else {
            match &a.segmentation {
                Some(Segmentation::Polygons(polys)) => rasterize_polygons(polys, w, h)?,
                Some(Segmentation::Rle { counts: RleCounts::Uncompressed(counts), size }) => {
                    decode_rle(counts, *size, w, h)?
                }
                Some(Segmentation::Rle { counts: RleCounts::Compressed(_), .. }) => {
                    return Err(PipelineError::Annotations(format!(
                        "annotation {}: compressed RLE is not supported",
                        a.id
                    )))
                }
                None => Mask::from_rect(w, h, bbox.to_pixel_rect(w, h))?,
            }
        };
        if mask.is_empty() {
            return Err(PipelineError::Annotations(format!("annotation {} has an empty mask", a.id)));
        }
        Ok(SceneInstance { id: a.id, name: name.to_string(), bbox, mask })
    }
}

/// Even-odd fill of the union of polygons, sampling pixel centers.
pub fn rasterize_polygons(polys: &[Vec<f64>], width: u32, height: u32) -> Result<Mask> {
    let mut mask = vec![false; width as usize * height as usize];
    for poly in polys {
        if poly.len() < 6 || poly.len() % 2 != 0 {
            return Err(PipelineError::Annotations("polygon needs at least three x,y pairs".into()));
        }
        let pts: Vec<(f64, f64)> = poly.chunks(2).map(|c| (c[0], c[1])).collect();
        for y in 0..height {
            let cy = y as f64 + 0.5;
            let mut xs: Vec<f64> = Vec::new();
            for i in 0..pts.len() {
                let (x0, y0) = pts[i];
                let (x1, y1) = pts[(i + 1) % pts.len()];
                if (y0 <= cy) != (y1 <= cy) {
                    xs.push(x0 + (cy - y0) / (y1 - y0) * (x1 - x0));
                }
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks(2) {
                if let [a, b] = pair {
                    // pixel x is covered when its center x + 0.5 lies in [a, b)
                    let start = (a - 0.5).ceil().max(0.0);
                    let end = (b - 0.5).ceil().min(width as f64);
                    let mut x = start;
                    while x < end {
                        mask[(y * width) as usize + x as usize] = true;
                        x += 1.0;
                    }
                }
            }
        }
    }
    Ok(Mask::from_fn(width, height, MaskKind::Segmentation, |x, y| mask[(y * width + x) as usize])?)
}

/// Column-major uncompressed RLE, alternating runs starting with background.
pub fn decode_rle(counts: &[u64], size: [u32; 2], width: u32, height: u32) -> Result<Mask> {
    if size != [height, width] {
        return Err(PipelineError::Annotations(format!("RLE size {size:?} differs from image {height}x{width}")));
    }
    let total = width as u64 * height as u64;
    if counts.iter().sum::<u64>() != total {
        return Err(PipelineError::Annotations("RLE counts do not cover the image".into()));
    }
    let mut col_major = Vec::with_capacity(total as usize);
    for (i, &c) in counts.iter().enumerate() {
        col_major.extend(std::iter::repeat_n(i % 2 == 1, c as usize));
    }
    Ok(Mask::from_fn(width, height, MaskKind::Segmentation, |x, y| col_major[(x * height + y) as usize])?)
}
