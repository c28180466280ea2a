mod common;

use std::time::{Duration, Instant};

use forge_core::fusion::{fuse, visible_mask};
use forge_core::{BBox, DepthMap, FusionMode, FusionRequest, Location25D, Mask, MaskKind};
use rand::Rng;

struct Scene {
    bg: DepthMap,
    obj: DepthMap,
    mask: Mask,
    bbox: BBox,
    d: f64,
}

fn scene(seed: u64) -> Scene {
    let mut rng = common::rng(seed);
    let (w, h) = (rng.random_range(24..96), rng.random_range(24..96));
    let (ow, oh) = (rng.random_range(8..48), rng.random_range(8..48));
    let blob = common::random_blob(&mut rng, ow, oh);
    // a centered ellipse keeps the anchor pixel on the object in most scenes
    let mask = Mask::from_fn(ow, oh, MaskKind::Segmentation, |x, y| {
        let (dx, dy) = ((x as f64 + 0.5) / ow as f64 - 0.5, (y as f64 + 0.5) / oh as f64 - 0.5);
        blob.is_set(x, y) || dx * dx + dy * dy <= 0.1
    })
    .unwrap();
    let base = rng.random_range(0.2..0.6f32);
    let obj = DepthMap::from_fn(ow, oh, |_, _| base + rng.random_range(0.0..0.1f32)).unwrap();
    Scene {
        bg: common::random_depth(&mut rng, w, h),
        obj,
        mask,
        bbox: common::random_box(&mut rng, w, h),
        d: rng.random_range(0.25..1.0),
    }
}

fn request(s: &Scene, mode: FusionMode) -> FusionRequest {
    FusionRequest::new(s.bg.clone(), s.obj.clone(), s.mask.clone(), Location25D::new(s.bbox, s.d).unwrap(), mode)
}

#[test]
fn fusion_properties_on_random_scenes() {
    let start = Instant::now();
    let mut anchored = 0;
    for seed in 0..50 {
        let s = scene(seed);
        let (w, h) = s.bg.dims();
        let rect = s.bbox.to_pixel_rect(w, h);

        let place = fuse(&request(&s, FusionMode::Place)).unwrap();
        let replace = fuse(&request(&s, FusionMode::Replace)).unwrap();
        for r in [&place, &replace] {
            assert_eq!(r.fused_depth.dims(), (w, h));
            assert!(r.placed_obj_mask.set_pixels().all(|(x, y)| rect.contains(x, y)));
            assert!(r.placed_obj_mask.is_subset_of(&r.scene_mask));
        }

        for y in 0..h {
            for x in 0..w {
                let bg = s.bg.get(x, y);
                if !rect.contains(x, y) {
                    // (a) untouched outside the box, bit for bit
                    assert_eq!(place.fused_depth.get(x, y).to_bits(), bg.to_bits());
                    assert_eq!(replace.fused_depth.get(x, y).to_bits(), bg.to_bits());
                    continue;
                }
                let on_object = place.placed_obj_mask.is_set(x, y);
                if on_object {
                    // (c) nearest wins never pushes the scene back
                    assert!(place.fused_depth.get(x, y) >= bg);
                    assert_eq!(place.fused_depth.get(x, y), bg.max(place.object_depth.get(x, y)));
                } else {
                    assert_eq!(place.fused_depth.get(x, y), bg);
                }
                // (d) replace zeroes exactly the non-object box pixels
                let rd = replace.fused_depth.get(x, y);
                assert_eq!(rd == 0.0, !on_object, "seed {seed} ({x},{y})");
            }
        }

        // (b) the unoccluded anchor lands on the target depth
        let (cx, cy) = s.bbox.center_pixel(w, h);
        if place.placed_obj_mask.is_set(cx, cy) && s.bg.get(cx, cy) as f64 <= s.d {
            assert!((place.fused_depth.get(cx, cy) as f64 - s.d).abs() <= 1e-6, "seed {seed}");
            anchored += 1;
        }
    }
    assert!(anchored >= 20, "only {anchored} scenes exercised the anchor");
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "{elapsed:?}");
}

#[test]
fn alpha_zero_flattens_the_object() {
    let s = scene(101);
    let mut req = request(&s, FusionMode::Place);
    let flat = fuse(&req).unwrap();
    req.alpha = 0.0;
    let zero = fuse(&req).unwrap();
    // alpha 0 flattens the object to the target depth
    for (x, y) in zero.placed_obj_mask.set_pixels() {
        assert!((zero.object_depth.get(x, y) as f64 - s.d).abs() < 1e-6);
    }
    assert_eq!(flat.placed_obj_mask, zero.placed_obj_mask);
}

#[test]
fn depth_preserving_modes_keep_the_background() {
    let s = scene(5);
    for mode in [FusionMode::IdTransfer, FusionMode::Inpaint] {
        let r = fuse(&request(&s, mode)).unwrap();
        assert_eq!(r.fused_depth, s.bg);
        assert_eq!(r.scene_mask.count(), r.placed_obj_mask.count());
    }
}

#[test]
fn visibility_is_the_depth_test() {
    let s = scene(11);
    let r = fuse(&request(&s, FusionMode::Place)).unwrap();
    let vis = visible_mask(&r.placed_obj_mask, &r.object_depth, &r.fused_depth).unwrap();
    for (x, y) in r.placed_obj_mask.set_pixels() {
        assert_eq!(vis.is_set(x, y), r.object_depth.get(x, y) >= s.bg.get(x, y));
    }
    assert!(vis.is_subset_of(&r.placed_obj_mask));
}

#[test]
fn invalid_requests_are_typed_errors() {
    let s = scene(3);
    let mut req = request(&s, FusionMode::Place);
    req.obj_mask = Mask::empty(s.obj.width(), s.obj.height(), MaskKind::Segmentation).unwrap();
    assert!(matches!(fuse(&req), Err(forge_core::Error::EmptyMask)));
    let mut req = request(&s, FusionMode::Place);
    req.obj_mask = Mask::empty(3, 3, MaskKind::Segmentation).unwrap();
    assert!(fuse(&req).is_err());
}
