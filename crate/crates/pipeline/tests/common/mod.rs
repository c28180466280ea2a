#![allow(dead_code)]

use std::path::PathBuf;

use forge_pipeline::coco::{CocoSource, Scene};

pub fn fixture_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn coco_source() -> CocoSource {
    let root = fixture_root().join("coco-mini");
    CocoSource::open(&root.join("annotations.json"), Some(&root.join("images")), Some(&root.join("depth"))).unwrap()
}

pub fn coco_scenes() -> Vec<Scene> {
    coco_source().load_scenes().unwrap()
}
