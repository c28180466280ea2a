use std::collections::HashMap;
use std::path::PathBuf;

use forge_clients::mock::MockBackend;
use forge_clients::protocol::{
    extract_parts, handle, inline_parts, CompositeRequest, DepthRequest, InpaintRequest, LocateRequest, Payload,
    SegmentRequest,
};
use forge_clients::{BackendKind, Backends, ClientError, DepthClient, ErrorCode};
use forge_core::conditioning::{assemble_bundle, BundleParams};
use forge_core::fusion::{fuse, FusionMode, FusionRequest};
use forge_core::relations::Instance;
use forge_core::{BBox, DepthMap, ImageRaster, Location25D, Mask, MaskKind, Raster};
use serde_json::Value;

fn schema(name: &str) -> jsonschema::Validator {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&v).unwrap()
}

fn assert_valid(name: &str, v: &Value) {
    let s = schema(name);
    let errors: Vec<String> = s.iter_errors(v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

fn scene() -> ImageRaster {
    Raster::from_fn(24, 16, 3, |x, y, c| ((x * 9 + y * 5 + c as u32 * 40) % 256) as u8).unwrap()
}

fn object() -> ImageRaster {
    Raster::from_fn(12, 12, 3, |x, y, _| if (3..9).contains(&x) && (3..9).contains(&y) { 230 } else { 15 }).unwrap()
}

fn roundtrip(kind: BackendKind, req: Value) -> Value {
    assert_valid(&format!("{kind}.request"), &req);
    let resp = handle(&Backends::mock(), kind, req).unwrap();
    assert_valid(&format!("{kind}.response"), &resp);
    resp
}

#[test]
fn depth_request_roundtrip() {
    let req = serde_json::to_value(DepthRequest { image: Payload::image(&scene()).unwrap() }).unwrap();
    let resp = roundtrip(BackendKind::Depth, req);
    let d = Payload::to_depth(&serde_json::from_value(resp["depth"].clone()).unwrap()).unwrap();
    assert_eq!(d, MockBackend::default().estimate(&scene()).unwrap());
}

#[test]
fn segment_and_inpaint_roundtrip() {
    let req = SegmentRequest {
        image: Payload::image(&object()).unwrap(),
        hint: Some(BBox::new(0.0, 0.0, 1.0, 1.0).unwrap()),
    };
    let resp = roundtrip(BackendKind::Segment, serde_json::to_value(req).unwrap());
    let mask: Payload = serde_json::from_value(resp["mask"].clone()).unwrap();
    assert_eq!(mask.to_mask(MaskKind::Segmentation).unwrap().count(), 36);

    let m = Mask::from_fn(24, 16, MaskKind::Segmentation, |x, y| x > 10 && y > 5).unwrap();
    let req = InpaintRequest { image: Payload::image(&scene()).unwrap(), mask: Payload::mask(&m).unwrap() };
    roundtrip(BackendKind::Inpaint, serde_json::to_value(req).unwrap());
}

#[test]
fn locate_roundtrip() {
    let depth = forge_clients::mock::ramp_depth(24, 16).unwrap();
    let req = LocateRequest {
        background: Payload::image(&scene()).unwrap(),
        depth: Payload::depth(&depth),
        instruction: "Place the cup to the left of the plate.".into(),
        annotations: vec![Instance { id: 1, name: "plate".into(), bbox: BBox::new(0.6, 0.4, 0.9, 0.7).unwrap() }],
    };
    let resp = roundtrip(BackendKind::Locate, serde_json::to_value(req).unwrap());
    let loc: Location25D = serde_json::from_value(resp["location"].clone()).unwrap();
    assert!(loc.bbox.center().0 < 0.75 - 0.05);
}

#[test]
fn composite_roundtrip() {
    let bg = forge_clients::mock::ramp_depth(24, 16).unwrap();
    let obj_mask =
        Mask::from_fn(12, 12, MaskKind::Segmentation, |x, y| (3..9).contains(&x) && (3..9).contains(&y)).unwrap();
    let loc = Location25D::new(BBox::new(0.25, 0.25, 0.5, 0.75).unwrap(), 0.9).unwrap();
    let fr = fuse(&FusionRequest::new(bg, DepthMap::constant(12, 12, 0.5).unwrap(), obj_mask, loc, FusionMode::Place))
        .unwrap();
    let mut params = BundleParams::new(loc, FusionMode::Place);
    params.zoom = None;
    let bundle = assemble_bundle(&scene(), &fr, &scene(), &object(), &params).unwrap();
    let req = serde_json::to_value(CompositeRequest::from_bundle(&bundle).unwrap()).unwrap();
    let resp = roundtrip(BackendKind::Composite, req);
    let img: Payload = serde_json::from_value(resp["image"].clone()).unwrap();
    assert_eq!(img.to_image().unwrap().dims(), (24, 16));
}

#[test]
fn errors_are_typed_and_schema_valid() {
    let req = serde_json::json!({"image": {"format": "pfm", "b64": ""}});
    let err = handle(&Backends::mock(), BackendKind::Depth, req).unwrap_err();
    assert_eq!(err.code(), ErrorCode::InvalidRequest);
    assert_valid("error", &serde_json::to_value(err.to_body()).unwrap());

    let uniform = Raster::filled(5, 5, 3, 7u8).unwrap();
    let req = serde_json::to_value(SegmentRequest { image: Payload::image(&uniform).unwrap(), hint: None }).unwrap();
    let err = handle(&Backends::mock(), BackendKind::Segment, req).unwrap_err();
    assert!(matches!(err, ClientError::NoForeground));
    assert_valid("error", &serde_json::to_value(err.to_body()).unwrap());
}

#[test]
fn parts_extract_and_inline_roundtrip() {
    let original = serde_json::to_value(InpaintRequest {
        image: Payload::image(&scene()).unwrap(),
        mask: Payload::mask(&Mask::empty(24, 16, MaskKind::Segmentation).unwrap()).unwrap(),
    })
    .unwrap();
    let mut v = original.clone();
    let parts = extract_parts(&mut v).unwrap();
    assert_eq!(parts.len(), 2);
    assert!(v["image"].get("b64").is_none());
    assert_valid("inpaint.request", &v);
    let map: HashMap<String, Vec<u8>> = parts.into_iter().collect();
    inline_parts(&mut v, &map).unwrap();
    assert_eq!(v, original);

    let mut dangling = serde_json::json!({"image": {"format": "png", "part": "nope"}});
    assert!(inline_parts(&mut dangling, &HashMap::new()).is_err());
}
