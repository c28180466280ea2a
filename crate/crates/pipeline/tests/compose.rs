mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use forge_clients::mock::{MockBackend, Spy};
use forge_clients::{BackendKind, Backends};
use forge_core::fusion::visible_mask;
use forge_core::{BBox, FusionMode, Location25D};
use forge_pipeline::compose::{compose_to_dir, ComposeJob, ComposeParams, Placement, BUNDLE_DIR, OUTPUT_FILE};
use forge_pipeline::fixtures::DOG_COLOR;
use forge_pipeline::store::{hash_tree, verify_outputs, Manifest, RunStatus, MANIFEST_FILE};
use forge_pipeline::PipelineError;

fn job(placement: Placement) -> ComposeJob {
    let root = common::fixture_root().join("street");
    let mut params = ComposeParams::new(placement, FusionMode::Place);
    params.resolution = 128;
    params.seed = 3;
    ComposeJob {
        background: root.join("street.png"),
        reference: root.join("dog.png"),
        bg_depth: Some(root.join("street_depth.pfm")),
        ref_depth: Some(root.join("dog_depth.pfm")),
        annotations: Some(root.join("annotations.json")),
        params,
    }
}

fn explicit(depth: f64) -> Placement {
    Placement::Location(Location25D::new(BBox::new(0.38, 0.3, 0.62, 0.66).unwrap(), depth).unwrap())
}

fn spied() -> (Backends, Arc<Spy<MockBackend>>) {
    let spy = Arc::new(Spy::new(MockBackend::default()));
    let mut b = Backends::mock();
    b.locate = spy.clone();
    b.composite = spy.clone();
    (b, spy)
}

#[test]
fn explicit_location_skips_locator_and_persists_stages() {
    let (backends, spy) = spied();
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = compose_to_dir(&job(explicit(0.5)), &backends, dir.path()).unwrap();
    assert!(start.elapsed() < Duration::from_secs(5));
    assert_eq!(spy.calls(BackendKind::Locate), 0);
    assert_eq!(spy.calls(BackendKind::Composite), 1);
    assert_eq!(out.output.dims(), (128, 128));
    for f in [
        "ref_mask.png",
        "bg_depth.pfm",
        "ref_depth.pfm",
        "location.json",
        "fused_depth.pfm",
        "scene_mask.png",
        "aug_mask.png",
        "hf.pfm",
        "collage.png",
        "reference_crop.png",
        OUTPUT_FILE,
        "output_full.png",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert!(dir.path().join(BUNDLE_DIR).join("meta.json").exists());
    let manifest = Manifest::read(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.status, RunStatus::Ok);
    assert!(verify_outputs(dir.path(), &manifest).is_empty());
}

#[test]
fn instruction_goes_through_the_locator() {
    let (backends, spy) = spied();
    let dir = tempfile::tempdir().unwrap();
    let out = compose_to_dir(
        &job(Placement::Instruction("Place the dog to the left of the car.".into())),
        &backends,
        dir.path(),
    )
    .unwrap();
    assert_eq!(spy.calls(BackendKind::Locate), 1);
    let car_cx = (112.0 + 150.0) / 2.0 / 160.0;
    assert!(out.location.bbox.center().0 < car_cx - 0.05);
}

#[test]
fn visible_object_pixels_follow_depth_order() {
    for depth in [0.5, 0.95] {
        let dir = tempfile::tempdir().unwrap();
        let out = compose_to_dir(&job(explicit(depth)), &Backends::mock(), dir.path()).unwrap();
        let b = &out.bundle;
        let (w, h) = b.dims();
        let mut expected = 0;
        for y in 0..h {
            for x in 0..w {
                let vis = b.object_mask.is_set(x, y) && b.object_depth.get(x, y) >= b.fused_depth.get(x, y);
                let px = out.output.pixel(x, y);
                // reference pixels keep red and blue at 255; scene pixels never do
                let from_reference = px[0] == DOG_COLOR[0] && px[2] == DOG_COLOR[2];
                assert_eq!(vis, from_reference, "depth {depth} pixel ({x},{y})");
                expected += vis as usize;
            }
        }
        assert!(expected > 0);
        assert_eq!(visible_mask(&b.object_mask, &b.object_depth, &b.fused_depth).unwrap().count(), expected);
    }
}

#[test]
fn raising_depth_reveals_the_occluded_strip() {
    let run = |d: f64| {
        let dir = tempfile::tempdir().unwrap();
        let out = compose_to_dir(&job(explicit(d)), &Backends::mock(), dir.path()).unwrap();
        let b = out.bundle;
        let vis = visible_mask(&b.object_mask, &b.object_depth, &b.fused_depth).unwrap();
        (b, vis)
    };
    let (low, low_vis) = run(0.5);
    let (high, high_vis) = run(0.95);
    // object pixels behind the post at low depth
    let post: Vec<(u32, u32)> = low
        .object_mask
        .set_pixels()
        .filter(|&(x, y)| (low.fused_depth.get(x, y) - 0.85).abs() < 1e-6 && !low_vis.is_set(x, y))
        .collect();
    assert!(!post.is_empty(), "the post hides part of the dog at depth 0.5");
    for &(x, y) in &post {
        assert!(high.object_depth.get(x, y) >= 0.85);
        assert!(high_vis.is_set(x, y), "({x},{y}) still hidden");
    }
}

#[test]
fn same_job_twice_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let j = job(Placement::Instruction("Place the dog to the left of the car.".into()));
    compose_to_dir(&j, &Backends::mock(), a.path()).unwrap();
    compose_to_dir(&j, &Backends::mock(), b.path()).unwrap();
    assert_eq!(hash_tree(a.path()).unwrap(), hash_tree(b.path()).unwrap());
    assert_eq!(
        std::fs::read(a.path().join(MANIFEST_FILE)).unwrap(),
        std::fs::read(b.path().join(MANIFEST_FILE)).unwrap()
    );
    // a rerun into the same directory verifies against the previous manifest
    compose_to_dir(&j, &Backends::mock(), a.path()).unwrap();
}

#[test]
fn failure_keeps_partial_outputs_and_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let err = compose_to_dir(
        &job(Placement::Instruction("Place the dog above the teapot.".into())),
        &Backends::mock(),
        dir.path(),
    )
    .unwrap_err();
    assert!(matches!(err, PipelineError::Stage { stage: "locate", .. }), "{err}");
    let m = Manifest::read(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.status, RunStatus::Failed);
    assert_eq!(m.failed_stage.as_deref(), Some("locate"));
    assert!(dir.path().join("bg_depth.pfm").exists());
    assert!(!dir.path().join("fused_depth.pfm").exists());
}

#[test]
fn replace_mode_zeroes_non_object_box_pixels() {
    let mut j = job(explicit(0.7));
    j.params.mode = FusionMode::Replace;
    let dir = tempfile::tempdir().unwrap();
    let out = compose_to_dir(&j, &Backends::mock(), dir.path()).unwrap();
    let b = &out.bundle;
    let rect = b.meta.placed_bbox.to_pixel_rect(b.dims().0, b.dims().1);
    assert!(b.scene_mask.set_pixels().count() > 0);
    let outside_object = b.scene_mask.set_pixels().filter(|&(x, y)| !b.object_mask.is_set(x, y) && rect.contains(x, y));
    assert!(outside_object.count() > 0);
}
