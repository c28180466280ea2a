//! Deterministic stand-ins for every backend.
//!
//! The mocks are cheap, seedless and reproducible bit for bit. They are meant
//! for tests and for exercising the pipeline without model weights, not for
//! realistic output.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};

use forge_core::fusion::{anchor_depth, visible_mask};
use forge_core::relations::{classify, parse_instruction, Placed, Thresholds};
use forge_core::resample::resize_bilinear_u8;
use forge_core::{BBox, ConditioningBundle, DepthMap, ImageRaster, Location25D, Mask, MaskKind, Predicate, Raster};

use crate::{
    BackendKind, ClientError, ClientResult, CompositeClient, DepthClient, InpaintClient, LocateClient,
    LocatePrediction, LocateQuery, SegmentClient,
};

/// Candidate grid searched by the mock locator.
pub const LOCATOR_GRID: u32 = 32;
pub const LOCATOR_SIZES: [f64; 8] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5];
pub const LOCATOR_DEPTH_STEPS: u32 = 16;
/// Width of the boundary band sampled when filling a masked region.
pub const RING_WIDTH: i64 = 2;
/// Gray level of the silhouette drawn when the identity condition is dropped.
pub const SILHOUETTE_GRAY: u8 = 128;

#[derive(Clone, Debug, Default)]
pub struct MockBackend {
    pub thresholds: Thresholds,
}

/// Vertical ramp with the ground nearest: 0 at the top row, 1 at the bottom
/// row, and 1 everywhere for a single-row image.
pub fn ramp_depth(width: u32, height: u32) -> forge_core::Result<DepthMap> {
    DepthMap::from_fn(width, height, |_, y| if height == 1 { 1.0 } else { y as f32 / (height - 1) as f32 })
}

impl DepthClient for MockBackend {
    fn estimate(&self, image: &ImageRaster) -> ClientResult<DepthMap> {
        Ok(ramp_depth(image.width(), image.height())?)
    }
}

/// Otsu threshold over a 256-bin histogram: pixels with `luma > t` form one class.
pub fn otsu_threshold(hist: &[u64; 256]) -> u8 {
    let total: u64 = hist.iter().sum();
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0u64, 0.0f64);
    let (mut best_t, mut best_var) = (0u8, -1.0f64);
    for (t, &count) in hist.iter().enumerate() {
        w0 += count;
        sum0 += t as f64 * count as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = sum0 / w0 as f64;
        let m1 = (sum_all - sum0) / w1 as f64;
        let var = w0 as f64 * w1 as f64 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    best_t
}

impl SegmentClient for MockBackend {
    /// Uses the alpha channel when present, else an Otsu split of luma inside
    /// the hint box. The class covering most of the box border is background.
    fn segment(&self, image: &ImageRaster, hint: Option<&BBox>) -> ClientResult<Mask> {
        let (w, h) = image.dims();
        let rect = match hint {
            Some(b) => b.to_pixel_rect(w, h),
            None => forge_core::PixelRect { x0: 0, y0: 0, x1: w, y1: h },
        };
        let mask = if image.channels() == 4 {
            Mask::from_fn(w, h, MaskKind::Segmentation, |x, y| rect.contains(x, y) && image.get(x, y, 3) > 0)?
        } else {
            let luma = |x: u32, y: u32| image.luma(x, y).round().clamp(0.0, 255.0) as usize;
            let mut hist = [0u64; 256];
            for y in rect.y0..rect.y1 {
                for x in rect.x0..rect.x1 {
                    hist[luma(x, y)] += 1;
                }
            }
            let t = otsu_threshold(&hist) as usize;
            let (mut bright, mut border) = (0usize, 0usize);
            for y in rect.y0..rect.y1 {
                for x in rect.x0..rect.x1 {
                    if x == rect.x0 || y == rect.y0 || x + 1 == rect.x1 || y + 1 == rect.y1 {
                        border += 1;
                        bright += usize::from(luma(x, y) > t);
                    }
                }
            }
            let fg_bright = 2 * bright < border;
            Mask::from_fn(w, h, MaskKind::Segmentation, |x, y| rect.contains(x, y) && (luma(x, y) > t) == fg_bright)?
        };
        if mask.is_empty() {
            return Err(ClientError::NoForeground);
        }
        Ok(mask)
    }
}

fn median(values: &mut [u8]) -> u8 {
    values.sort_unstable();
    values[(values.len() - 1) / 2]
}

/// Fills each 4-connected masked component with the per-channel median of the
/// unmasked pixels within [`RING_WIDTH`] of it.
///
/// Components without such a ring take the median of all unmasked pixels, or
/// mid-gray when the whole frame is masked.
pub fn fill_from_ring(image: &ImageRaster, mask: &Mask) -> ClientResult<ImageRaster> {
    image.same_dims(mask.raster())?;
    let (w, h) = image.dims();
    let ch = image.channels();
    let idx = |x: u32, y: u32| (y * w + x) as usize;

    let global: Vec<u8> = (0..ch)
        .map(|c| {
            let mut v: Vec<u8> = (0..h)
                .flat_map(|y| (0..w).map(move |x| (x, y)))
                .filter(|&(x, y)| !mask.is_set(x, y))
                .map(|(x, y)| image.get(x, y, c))
                .collect();
            if v.is_empty() {
                128
            } else {
                median(&mut v)
            }
        })
        .collect();

    let mut out = image.data().to_vec();
    let mut label = vec![0u32; (w * h) as usize];
    let mut ring_stamp = vec![0u32; (w * h) as usize];
    let mut next = 0u32;
    for sy in 0..h {
        for sx in 0..w {
            if !mask.is_set(sx, sy) || label[idx(sx, sy)] != 0 {
                continue;
            }
            next += 1;
            let mut component = Vec::new();
            let mut queue = VecDeque::from([(sx, sy)]);
            label[idx(sx, sy)] = next;
            while let Some((x, y)) = queue.pop_front() {
                component.push((x, y));
                let neighbors = [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)];
                for (nx, ny) in neighbors {
                    if nx < w && ny < h && mask.is_set(nx, ny) && label[idx(nx, ny)] == 0 {
                        label[idx(nx, ny)] = next;
                        queue.push_back((nx, ny));
                    }
                }
            }
            let mut ring = Vec::new();
            for &(x, y) in &component {
                for dy in -RING_WIDTH..=RING_WIDTH {
                    for dx in -RING_WIDTH..=RING_WIDTH {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as u32, ny as u32);
                        if !mask.is_set(nx, ny) && ring_stamp[idx(nx, ny)] != next {
                            ring_stamp[idx(nx, ny)] = next;
                            ring.push((nx, ny));
                        }
                    }
                }
            }
            let fill: Vec<u8> = if ring.is_empty() {
                global.clone()
            } else {
                (0..ch)
                    .map(|c| median(&mut ring.iter().map(|&(x, y)| image.get(x, y, c)).collect::<Vec<_>>()))
                    .collect()
            };
            for &(x, y) in &component {
                let base = idx(x, y) * ch as usize;
                out[base..base + ch as usize].copy_from_slice(&fill);
            }
        }
    }
    Ok(Raster::new(w, h, ch, out)?)
}

impl InpaintClient for MockBackend {
    fn inpaint(&self, image: &ImageRaster, mask: &Mask) -> ClientResult<ImageRaster> {
        if mask.is_empty() {
            return Err(forge_core::Error::EmptyMask.into());
        }
        fill_from_ring(image, mask)
    }
}

/// Flat index of a locator candidate; lower indices win ties.
pub fn candidate_index(ix: u32, iy: u32, size: usize, depth_step: u32) -> u64 {
    ((iy as u64 * LOCATOR_GRID as u64 + ix as u64) * LOCATOR_SIZES.len() as u64 + size as u64)
        * LOCATOR_DEPTH_STEPS as u64
        + depth_step as u64
}

/// Squared distance of a candidate from the anchors in center, size and depth.
fn anchor_distance(cand: &Placed, clauses: &[(Predicate, Placed)]) -> f64 {
    let (cx, cy) = cand.bbox.center();
    let size = cand.bbox.width().max(cand.bbox.height());
    clauses
        .iter()
        .map(|(_, a)| {
            let (ax, ay) = a.bbox.center();
            let asize = a.bbox.width().max(a.bbox.height());
            (cx - ax).powi(2) + (cy - ay).powi(2) + (size - asize).powi(2) + (cand.depth - a.depth).powi(2)
        })
        .sum()
}

/// Exhaustive search over a fixed candidate grid for the location satisfying
/// the most parsed relations. Ties go to the candidate nearest the anchors,
/// then to the lowest grid index.
pub fn grid_locate(clauses: &[(Predicate, Placed)], th: &Thresholds) -> ClientResult<(Location25D, usize)> {
    let mut best: Option<(Location25D, usize, f64)> = None;
    for iy in 0..LOCATOR_GRID {
        for ix in 0..LOCATOR_GRID {
            let cx = (ix as f64 + 0.5) / LOCATOR_GRID as f64;
            let cy = (iy as f64 + 0.5) / LOCATOR_GRID as f64;
            for size in LOCATOR_SIZES {
                let bbox = BBox::from_center_clipped(cx, cy, size, size)?;
                for di in 0..LOCATOR_DEPTH_STEPS {
                    let depth = di as f64 / (LOCATOR_DEPTH_STEPS - 1) as f64;
                    let cand = Placed { bbox, depth };
                    let score = clauses.iter().filter(|(p, a)| classify(&cand, a, th) == *p).count();
                    let dist = anchor_distance(&cand, clauses);
                    if best.as_ref().is_none_or(|&(_, s, d)| score > s || (score == s && dist < d)) {
                        best = Some((Location25D::new(bbox, depth)?, score, dist));
                    }
                }
            }
        }
    }
    best.map(|(loc, score, _)| (loc, score)).ok_or_else(|| ClientError::InvalidRequest("empty locator grid".into()))
}

/// Renders a location the way a locator model would print it.
pub fn format_location(loc: &Location25D) -> String {
    let [x1, y1, x2, y2] = loc.bbox.coords();
    format!("[{x1:.4}, {y1:.4}, {x2:.4}, {y2:.4}], {:.4}", loc.depth())
}

impl LocateClient for MockBackend {
    fn locate(&self, q: &LocateQuery) -> ClientResult<LocatePrediction> {
        let parsed = parse_instruction(&q.instruction)
            .ok_or_else(|| ClientError::UnparsableInstruction(q.instruction.clone()))?;
        let mut missing = Vec::new();
        let mut clauses = Vec::new();
        for (pred, name) in &parsed.clauses {
            match q.annotations.iter().find(|a| a.name.trim().eq_ignore_ascii_case(name.trim())) {
                Some(a) => {
                    clauses.push((*pred, Placed { bbox: a.bbox, depth: anchor_depth(&q.depth, &a.bbox)? as f64 }))
                }
                None => missing.push(name.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(ClientError::UnknownAnchor(missing));
        }
        let (location, _) = grid_locate(&clauses, &self.thresholds)?;
        Ok(LocatePrediction { raw_text: format_location(&location), location })
    }
}

impl CompositeClient for MockBackend {
    /// Fills the scene mask from its surroundings, then pastes the reference
    /// (resized into the placed box) where the object is visible.
    fn composite(&self, b: &ConditioningBundle) -> ClientResult<ImageRaster> {
        b.validate()?;
        let (w, h) = b.dims();
        let scene = b.masked_scene.to_channels(3)?;
        let filled = fill_from_ring(&scene, &b.scene_mask)?;
        let visible = visible_mask(&b.object_mask, &b.object_depth, &b.fused_depth)?;
        let rect = b.meta.placed_bbox.to_pixel_rect(w, h);
        let reference = resize_bilinear_u8(&b.reference_crop.to_channels(3)?, rect.width(), rect.height())?;
        Ok(Raster::from_fn(w, h, 3, |x, y, c| {
            if !visible.is_set(x, y) {
                return filled.get(x, y, c);
            }
            if b.meta.dropped.id {
                return SILHOUETTE_GRAY;
            }
            let rx = x.clamp(rect.x0, rect.x1 - 1) - rect.x0;
            let ry = y.clamp(rect.y0, rect.y1 - 1) - rect.y0;
            reference.get(rx, ry, c)
        })?)
    }
}

/// Wraps a client and counts calls per backend kind.
#[derive(Debug, Default)]
pub struct Spy<T> {
    pub inner: T,
    calls: [AtomicUsize; 5],
}

impl<T> Spy<T> {
    pub fn new(inner: T) -> Self {
        Self { inner, calls: Default::default() }
    }

    pub fn calls(&self, kind: BackendKind) -> usize {
        self.calls[kind as usize].load(Ordering::SeqCst)
    }

    fn hit(&self, kind: BackendKind) {
        self.calls[kind as usize].fetch_add(1, Ordering::SeqCst);
    }
}

impl<T: DepthClient> DepthClient for Spy<T> {
    fn estimate(&self, image: &ImageRaster) -> ClientResult<DepthMap> {
        self.hit(BackendKind::Depth);
        self.inner.estimate(image)
    }
}

impl<T: SegmentClient> SegmentClient for Spy<T> {
    fn segment(&self, image: &ImageRaster, hint: Option<&BBox>) -> ClientResult<Mask> {
        self.hit(BackendKind::Segment);
        self.inner.segment(image, hint)
    }
}

impl<T: InpaintClient> InpaintClient for Spy<T> {
    fn inpaint(&self, image: &ImageRaster, mask: &Mask) -> ClientResult<ImageRaster> {
        self.hit(BackendKind::Inpaint);
        self.inner.inpaint(image, mask)
    }
}

impl<T: LocateClient> LocateClient for Spy<T> {
    fn locate(&self, query: &LocateQuery) -> ClientResult<LocatePrediction> {
        self.hit(BackendKind::Locate);
        self.inner.locate(query)
    }
}

impl<T: CompositeClient> CompositeClient for Spy<T> {
    fn composite(&self, bundle: &ConditioningBundle) -> ClientResult<ImageRaster> {
        self.hit(BackendKind::Composite);
        self.inner.composite(bundle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_is_near_at_bottom() {
        let d = ramp_depth(3, 5).unwrap();
        assert_eq!(d.get(0, 0), 0.0);
        assert_eq!(d.get(2, 4), 1.0);
        assert_eq!(ramp_depth(4, 1).unwrap().get(3, 0), 1.0);
    }

    #[test]
    fn otsu_splits_bimodal_histogram() {
        let mut hist = [0u64; 256];
        hist[20] = 100;
        hist[200] = 50;
        let t = otsu_threshold(&hist);
        assert!((20..200).contains(&t));
    }

    #[test]
    fn segment_finds_bright_square_on_dark() {
        let img =
            Raster::from_fn(10, 10, 3, |x, y, _| if (3..6).contains(&x) && (3..6).contains(&y) { 220 } else { 10 })
                .unwrap();
        let m = MockBackend::default().segment(&img, None).unwrap();
        assert_eq!(m.count(), 9);
        assert!(m.is_set(4, 4));
    }

    #[test]
    fn segment_uniform_has_no_foreground() {
        let img = Raster::filled(6, 6, 3, 90u8).unwrap();
        assert!(matches!(MockBackend::default().segment(&img, None), Err(ClientError::NoForeground)));
    }

    #[test]
    fn ring_fill_uses_neighbourhood() {
        let img = Raster::from_fn(9, 1, 1, |x, _, _| if x < 4 { 10 } else { 250 }).unwrap();
        let mask = Mask::from_fn(9, 1, MaskKind::Segmentation, |x, _| x == 2).unwrap();
        let out = fill_from_ring(&img, &mask).unwrap();
        // ring: x=0,1,3,4 -> values 10,10,10,250 -> lower median 10
        assert_eq!(out.get(2, 0, 0), 10);
        assert_eq!(out.get(5, 0, 0), 250);
    }

    #[test]
    fn candidate_index_is_row_major() {
        assert_eq!(candidate_index(0, 0, 0, 0), 0);
        assert_eq!(candidate_index(0, 0, 0, 1), 1);
        assert_eq!(candidate_index(0, 0, 1, 0), 16);
        assert_eq!(candidate_index(1, 0, 0, 0), 128);
        assert_eq!(candidate_index(0, 1, 0, 0), 128 * 32);
    }

    #[test]
    fn satisfied_ties_stay_near_the_anchor() {
        let th = Thresholds::default();
        let car = Placed { bbox: BBox::new(0.7, 0.5, 0.94, 0.72).unwrap(), depth: 0.6 };
        for pred in [Predicate::LeftOf, Predicate::Behind, Predicate::InFrontOf, Predicate::Above] {
            let clauses = [(pred, car)];
            let (loc, score) = grid_locate(&clauses, &th).unwrap();
            assert_eq!(score, 1);
            let cand = Placed { bbox: loc.bbox, depth: loc.depth() };
            assert_eq!(classify(&cand, &car, &th), pred);
            let ((cx, cy), (ax, ay)) = (loc.bbox.center(), car.bbox.center());
            assert!((cx - ax).hypot(cy - ay) < 0.3, "{pred:?} placed at {:?}", loc.bbox.coords());
            assert!(loc.bbox.width() >= 0.1, "{pred:?} collapsed to {:?}", loc.bbox.coords());
        }
    }
}
