#![allow(dead_code)]

use std::collections::BTreeMap;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use forge_cli::api::{
    AugmentRequest, CollageRequest, ComposeRequest, ComposeResponse, DetailRequest, ExportResponse, FuseRequest,
};
use forge_cli::service::{self, AppState, RunningServer};
use forge_clients::protocol::{Payload, PayloadFormat};
use forge_clients::Backends;
use forge_core::codec::{decode_pfm, encode_png};
use forge_core::relations::Instance;
use forge_core::{BBox, FusionMode, Location25D, MaskLevel};
use forge_pipeline::compose::{ComposeParams, Placement, BUNDLE_DIR};
use forge_pipeline::fixtures::dog_mask;
use forge_pipeline::ops::{FuseParams, MaskParams};
use forge_pipeline::store::{hash_tree, MANIFEST_FILE};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const BBOX: &str = "0.38,0.3,0.62,0.66";
pub const SEED: &str = "3";
pub const RESOLUTION: &str = "128";

pub fn fixture_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn street(name: &str) -> PathBuf {
    fixture_root().join("street").join(name)
}

pub fn bbox() -> BBox {
    BBox::new(0.38, 0.3, 0.62, 0.66).unwrap()
}

/// `forge` with the environment that could change its behaviour cleared.
pub fn forge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forge"))
        .args(args)
        .env_remove("FORGE_CONFIG")
        .env_remove("FORGE_SEED")
        .env_remove("RUST_LOG")
        .output()
        .expect("forge runs")
}

/// Runs `forge` and returns stdout, panicking with stderr on failure.
pub fn forge_ok(args: &[&str]) -> String {
    let out = forge(args);
    assert!(out.status.success(), "forge {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn tree(dir: &Path) -> BTreeMap<String, String> {
    hash_tree(dir).unwrap()
}

pub fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

/// Writes the dog's segmentation mask (sized like its depth map) as a PNG.
pub fn write_dog_mask(dir: &Path) -> PathBuf {
    let (w, _) = decode_pfm(&read(street("dog_depth.pfm"))).unwrap().map.dims();
    std::fs::create_dir_all(dir).unwrap();
    let path = dir.join("dog_mask.png");
    std::fs::write(&path, encode_png(&dog_mask(w).unwrap().to_image()).unwrap()).unwrap();
    path
}

pub fn start_mock_service() -> RunningServer {
    let state = AppState { backends: Backends::mock(), studio_dir: None };
    service::start(state, SocketAddr::from((Ipv4Addr::LOCALHOST, 0))).unwrap()
}

pub fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder().timeout(std::time::Duration::from_secs(120)).build().unwrap()
}

/// POSTs `body` and decodes a 200 response.
pub fn post<Req: Serialize, Resp: DeserializeOwned>(server: &RunningServer, path: &str, body: &Req) -> Resp {
    let resp = client().post(format!("{}{path}", server.url())).json(body).send().unwrap();
    let status = resp.status();
    let text = resp.text().unwrap();
    assert_eq!(status, 200, "{path}: {text}");
    serde_json::from_str(&text).unwrap()
}

pub fn bytes_of(payload: &Payload) -> Vec<u8> {
    B64.decode(payload.b64.as_deref().expect("inline payload")).unwrap()
}

fn png(path: impl AsRef<Path>) -> Payload {
    Payload::from_bytes(PayloadFormat::Png, &read(path))
}

fn pfm(path: impl AsRef<Path>) -> Payload {
    Payload::from_bytes(PayloadFormat::Pfm, &read(path))
}

fn level(n: u8) -> MaskLevel {
    MaskLevel::new(n).unwrap()
}

/// Panics naming the first file whose bytes differ.
pub fn assert_same_bytes(what: &str, cli: &[u8], service: &[u8]) {
    assert!(
        cli == service,
        "{what}: CLI wrote {} bytes, service returned {} bytes that differ",
        cli.len(),
        service.len()
    );
}

pub fn parity_fuse(server: &RunningServer, dir: &Path) {
    let mask = write_dog_mask(dir);
    let out = dir.join("fuse");
    forge_ok(&[
        "fuse-depth",
        "--bg-depth",
        p(&street("street_depth.pfm")),
        "--obj-depth",
        p(&street("dog_depth.pfm")),
        "--obj-mask",
        p(&mask),
        "--bbox",
        BBOX,
        "--depth",
        "0.7",
        "--mode",
        "replace",
        "--alpha",
        "0.5",
        "--out",
        p(&out),
    ]);
    let req = FuseRequest {
        bg_depth: pfm(street("street_depth.pfm")),
        obj_depth: pfm(street("dog_depth.pfm")),
        obj_mask: png(&mask),
        params: FuseParams {
            location: Location25D::new(bbox(), 0.7).unwrap(),
            mode: FusionMode::Replace,
            alpha: 0.5,
            occlusion: Default::default(),
        },
    };
    let resp: forge_cli::api::FuseResponse = post(server, "/api/fuse", &req);
    for (name, payload) in [
        ("fused_depth.pfm", &resp.fused_depth),
        ("object_depth.pfm", &resp.object_depth),
        ("scene_mask.png", &resp.scene_mask),
        ("placed_mask.png", &resp.placed_mask),
    ] {
        assert_same_bytes(name, &read(out.join(name)), &bytes_of(payload));
    }
}

/// detail-map, collage and augment-mask against their endpoints.
pub fn parity_detail_collage_augment(server: &RunningServer, dir: &Path) {
    let mask = write_dog_mask(dir);
    let hf = dir.join("hf.pfm");
    forge_ok(&["detail-map", "--image", p(&street("dog.png")), "--mask", p(&mask), "--level", "3", "--out", p(&hf)]);
    let resp: forge_cli::api::DetailResponse = post(
        server,
        "/api/detail-map",
        &DetailRequest {
            image: png(street("dog.png")),
            mask: png(&mask),
            params: MaskParams { level: level(3), dilate_frac: 0.02 },
        },
    );
    assert_same_bytes("hf.pfm", &read(&hf), &bytes_of(&resp.hf));

    let collage = dir.join("collage.png");
    forge_ok(&["collage", "--scene", p(&street("street.png")), "--hf", p(&hf), "--bbox", BBOX, "--out", p(&collage)]);
    let resp: forge_cli::api::CollageResponse =
        post(server, "/api/collage", &CollageRequest { scene: png(street("street.png")), hf: pfm(&hf), bbox: bbox() });
    assert_same_bytes("collage.png", &read(&collage), &bytes_of(&resp.collage));

    for n in 1..=5u8 {
        let aug = dir.join(format!("aug{n}.png"));
        forge_ok(&["augment-mask", "--mask", p(&mask), "--level", &n.to_string(), "--out", p(&aug)]);
        let resp: forge_cli::api::AugmentResponse = post(
            server,
            "/api/augment-mask",
            &AugmentRequest { mask: png(&mask), params: MaskParams { level: level(n), dilate_frac: 0.02 } },
        );
        assert_same_bytes(&format!("augment level {n}"), &read(&aug), &bytes_of(&resp.mask));
    }
}

pub fn annotations() -> Vec<Instance> {
    serde_json::from_slice(&read(street("annotations.json"))).unwrap()
}

pub fn compose_request(placement: Placement) -> ComposeRequest {
    let mut params = ComposeParams::new(placement, FusionMode::Place);
    params.seed = SEED.parse().unwrap();
    params.resolution = RESOLUTION.parse().unwrap();
    ComposeRequest {
        background: png(street("street.png")),
        reference: png(street("dog.png")),
        bg_depth: Some(pfm(street("street_depth.pfm"))),
        ref_depth: Some(pfm(street("dog_depth.pfm"))),
        annotations: annotations(),
        params,
    }
}

/// `forge compose` on the street fixture with the same inputs as [`compose_request`].
pub fn compose_cli(out: &Path, placement: &[&str]) -> String {
    let files = ["street.png", "dog.png", "street_depth.pfm", "dog_depth.pfm", "annotations.json"].map(street);
    let [bg, reference, bg_depth, ref_depth, ann] = files.each_ref().map(|f| p(f));
    let mut args = vec![
        "compose",
        "--background",
        bg,
        "--reference",
        reference,
        "--bg-depth",
        bg_depth,
        "--ref-depth",
        ref_depth,
        "--annotations",
        ann,
        "--seed",
        SEED,
        "--resolution",
        RESOLUTION,
        "--out",
        p(out),
    ];
    args.extend_from_slice(placement);
    forge_ok(&args)
}

/// Every file of `forge compose` and `forge compose`'s bundle against /api/compose and /api/export-bundle.
pub fn parity_compose(server: &RunningServer, dir: &Path) {
    let cases: [(&str, Vec<&str>, Placement); 2] = [
        (
            "explicit",
            vec!["--bbox", BBOX, "--depth", "0.6"],
            Placement::Location(Location25D::new(bbox(), 0.6).unwrap()),
        ),
        (
            "instruction",
            vec!["--instruction", "Place the dog to the left of the car."],
            Placement::Instruction("Place the dog to the left of the car.".into()),
        ),
    ];
    for (name, args, placement) in cases {
        let out = dir.join(name);
        let stdout = compose_cli(&out, &args);
        let req = compose_request(placement);
        let resp: ComposeResponse = post(server, "/api/compose", &req);
        let mut on_disk = tree(&out);
        on_disk.remove(MANIFEST_FILE);
        assert_eq!(on_disk.keys().collect::<Vec<_>>(), resp.files.keys().collect::<Vec<_>>(), "{name}: file sets");
        for (rel, payload) in &resp.files {
            assert_same_bytes(&format!("{name}/{rel}"), &read(out.join(rel)), &bytes_of(payload));
        }

        let export: ExportResponse = post(server, "/api/export-bundle", &req);
        let bundle_dir = out.join(BUNDLE_DIR);
        let names: Vec<String> = tree(&bundle_dir).into_keys().collect();
        assert_eq!(names, export.files.keys().cloned().collect::<Vec<_>>(), "{name}: bundle file sets");
        for (file, b64) in &export.files {
            assert_same_bytes(
                &format!("{name}/bundle/{file}"),
                &read(bundle_dir.join(file)),
                &B64.decode(b64).unwrap(),
            );
        }
        assert!(stdout.contains(&export.hash), "{name}: CLI printed a different bundle hash:\n{stdout}");
        assert_eq!(export.filename, format!("bundle-{}.json", &export.hash[..12]));
    }
}

/// Every output-producing command, writing into `out`.
pub fn commands(scratch: &Path, out: &Path) -> Vec<(&'static str, Vec<String>)> {
    let coco = fixture_root().join("coco-mini");
    let s = |path: &Path| p(path).to_string();
    let mask = write_dog_mask(scratch);
    let hf = scratch.join("hf.pfm");
    if !hf.exists() {
        forge_ok(&["detail-map", "--image", p(&street("dog.png")), "--mask", p(&mask), "--out", p(&hf)]);
    }
    let dataset = scratch.join("dataset");
    if !dataset.exists() {
        forge_ok(&[
            "build-dataset",
            "--coco",
            p(&coco.join("annotations.json")),
            "--images",
            p(&coco.join("images")),
            "--depth-dir",
            p(&coco.join("depth")),
            "--n",
            "24",
            "--out",
            p(&dataset),
        ]);
    }
    let args = |v: &[&str]| v.iter().map(|a| a.to_string()).collect::<Vec<_>>();
    vec![
        (
            "build-dataset",
            args(&[
                "build-dataset",
                "--coco",
                &s(&coco.join("annotations.json")),
                "--images",
                &s(&coco.join("images")),
                "--depth-dir",
                &s(&coco.join("depth")),
                "--n",
                "24",
                "--jobs",
                "3",
                "--out",
                &s(&out.join("dataset")),
            ]),
        ),
        (
            "fuse-depth",
            args(&[
                "fuse-depth",
                "--bg-depth",
                &s(&street("street_depth.pfm")),
                "--obj-depth",
                &s(&street("dog_depth.pfm")),
                "--obj-mask",
                &s(&mask),
                "--bbox",
                BBOX,
                "--depth",
                "0.8",
                "--out",
                &s(&out.join("fuse")),
            ]),
        ),
        (
            "detail-map",
            args(&[
                "detail-map",
                "--image",
                &s(&street("dog.png")),
                "--mask",
                &s(&mask),
                "--level",
                "2",
                "--out",
                &s(&out.join("hf.pfm")),
            ]),
        ),
        (
            "collage",
            args(&[
                "collage",
                "--scene",
                &s(&street("street.png")),
                "--hf",
                &s(&hf),
                "--bbox",
                BBOX,
                "--out",
                &s(&out.join("collage.png")),
            ]),
        ),
        (
            "augment-mask",
            args(&["augment-mask", "--mask", &s(&mask), "--level", "5", "--out", &s(&out.join("aug.png"))]),
        ),
        (
            "compose",
            args(&[
                "compose",
                "--background",
                &s(&street("street.png")),
                "--reference",
                &s(&street("dog.png")),
                "--annotations",
                &s(&street("annotations.json")),
                "--instruction",
                "Put the dog behind the car.",
                "--resolution",
                "96",
                "--out",
                &s(&out.join("compose")),
            ]),
        ),
        ("eval-mllm", args(&["eval-mllm", "--dataset", &s(&dataset), "--out", &s(&out.join("report.json"))])),
        (
            "sample-video-pair",
            args(&[
                "sample-video-pair",
                "--frames",
                &s(&fixture_root().join("video")),
                "--out",
                &s(&out.join("video")),
            ]),
        ),
        ("gen-fixtures", args(&["gen-fixtures", "--out", &s(&out.join("fixtures"))])),
    ]
}
