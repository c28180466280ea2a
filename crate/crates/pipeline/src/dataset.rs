//! Counterfactual instruction dataset construction.
//!
//! For each record a target instance and up to three anchors are drawn from
//! an annotated scene, their spatial relations are derived from boxes and
//! depth, an instruction is rendered, and the target is removed from the
//! image with the inpainting client. The answer is the target's annotated box
//! plus the depth at its center.

use std::collections::HashMap;
use std::path::Path;

use forge_clients::{Backends, DepthClient, InpaintClient, Paraphraser};
use forge_core::codec::{encode_pfm, encode_png};
use forge_core::detail::{augment_mask, DEFAULT_DILATE_FRAC};
use forge_core::fusion::anchor_depth;
use forge_core::relations::{
    decision_margin, derive_relations, render_instruction, Instance, InstanceId, Placed, Thresholds,
};
use forge_core::seed::derive_seed;
use forge_core::{BBox, DepthMap, Location25D, MaskLevel, Relation};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coco::Scene;
use crate::error::{io_err, json_err, PipelineError, Result};
use crate::store::{sha256_hex, write_atomic};

pub const RECORDS_FILE: &str = "records.jsonl";
/// Smallest distance from a predicate decision boundary for an anchor to be used.
pub const DEFAULT_MIN_MARGIN: f64 = 0.04;
/// Mask level used to cut the target out before inpainting.
pub const REMOVAL_LEVEL: u8 = 2;
/// Attempts per record before giving up on finding a usable scene.
const MAX_ATTEMPTS: u64 = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub n: usize,
    pub seed: u64,
    pub k_min: usize,
    pub k_max: usize,
    pub thresholds: Thresholds,
    pub min_margin: f64,
    pub dilate_frac: f64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            n: 100,
            seed: 0,
            k_min: 2,
            k_max: 4,
            thresholds: Thresholds::default(),
            min_margin: DEFAULT_MIN_MARGIN,
            dilate_frac: DEFAULT_DILATE_FRAC,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.k_min) || !(self.k_min..=4).contains(&self.k_max) {
            return Err(PipelineError::InvalidJob(format!(
                "k range {}..={} must lie within 2..=4",
                self.k_min, self.k_max
            )));
        }
        if !(self.min_margin.is_finite() && self.min_margin >= 0.0) {
            return Err(PipelineError::InvalidJob("min_margin must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorInfo {
    pub id: InstanceId,
    pub name: String,
    pub bbox: BBox,
    /// Depth at the anchor's box center in the source depth map.
    pub depth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: u64,
    pub image_id: u64,
    /// Paths relative to the dataset directory.
    pub source_image: String,
    pub counterfactual_image: String,
    pub depth_map: String,
    pub instruction: String,
    pub answer: Location25D,
    pub relations: Vec<Relation>,
    pub target_instance: InstanceId,
    pub target_name: String,
    pub anchors: Vec<AnchorInfo>,
    pub seed: u64,
}

impl DatasetRecord {
    /// Anchors as locator annotations.
    pub fn annotations(&self) -> Vec<Instance> {
        self.anchors.iter().map(|a| Instance { id: a.id, name: a.name.clone(), bbox: a.bbox }).collect()
    }
}

/// A record plus the files it references, not yet written.
#[derive(Clone, Debug)]
pub struct BuiltRecord {
    pub record: DatasetRecord,
    pub files: Vec<(String, Vec<u8>)>,
}

fn content_path(dir: &str, ext: &str, bytes: &[u8]) -> String {
    format!("{dir}/{}.{ext}", sha256_hex(bytes))
}

/// Builds one record for `target` in `scene` with `k` objects in total.
///
/// Anchors are drawn in seeded order among instances whose names differ from
/// the target's and from each other, skipping pairs closer than
/// `cfg.min_margin` to a predicate boundary.
#[allow(clippy::too_many_arguments)]
pub fn build_record(
    scene: &Scene,
    depth: &DepthMap,
    target: InstanceId,
    k: usize,
    seed: u64,
    inpaint: &dyn InpaintClient,
    cfg: &BuildConfig,
    paraphraser: Option<&dyn Paraphraser>,
) -> Result<BuiltRecord> {
    if !(2..=4).contains(&k) {
        return Err(PipelineError::InvalidJob(format!("k = {k} outside 2..=4")));
    }
    if scene.instances.len() < k {
        return Err(PipelineError::TooFewInstances { needed: k, found: scene.instances.len() });
    }
    let t = scene
        .instances
        .iter()
        .find(|i| i.id == target)
        .ok_or_else(|| PipelineError::InvalidJob(format!("instance {target} not in image {}", scene.image_id)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_placed = Placed { bbox: t.bbox, depth: anchor_depth(depth, &t.bbox)? as f64 };

    let mut candidates: Vec<_> = scene.instances.iter().filter(|i| i.id != target && i.name != t.name).collect();
    candidates.shuffle(&mut rng);
    let mut anchors = Vec::new();
    for c in candidates {
        if anchors.len() + 1 == k {
            break;
        }
        if anchors.iter().any(|a: &&crate::coco::SceneInstance| a.name == c.name) {
            continue;
        }
        let p = Placed { bbox: c.bbox, depth: anchor_depth(depth, &c.bbox)? as f64 };
        if decision_margin(&t_placed, &p, &cfg.thresholds) >= cfg.min_margin {
            anchors.push(c);
        }
    }
    if anchors.len() + 1 < k {
        return Err(PipelineError::TooFewInstances { needed: k, found: anchors.len() + 1 });
    }

    let target_inst = Instance { id: t.id, name: t.name.clone(), bbox: t.bbox };
    let anchor_insts: Vec<Instance> =
        anchors.iter().map(|a| Instance { id: a.id, name: a.name.clone(), bbox: a.bbox }).collect();
    let relations = derive_relations(&target_inst, &anchor_insts, depth, &cfg.thresholds)?;
    let names: HashMap<InstanceId, String> = anchor_insts.iter().map(|a| (a.id, a.name.clone())).collect();
    let render_seed = rng.random::<u64>();
    let mut instruction = render_instruction(&t.name, &relations, &names, render_seed);
    if let Some(p) = paraphraser {
        let text = p.paraphrase(&instruction, render_seed)?;
        let lower = text.to_lowercase();
        if std::iter::once(&t.name).chain(names.values()).all(|n| lower.contains(&n.to_lowercase())) {
            instruction = text;
        } else {
            log::warn!("paraphrase dropped an object name; keeping the template");
        }
    }

    let removal = augment_mask(&t.mask, MaskLevel::new(REMOVAL_LEVEL)?, cfg.dilate_frac)?;
    let counterfactual = inpaint.inpaint(&scene.image, &removal).map_err(PipelineError::InpaintFailure)?;

    let source_png = encode_png(&scene.image)?;
    let cf_png = encode_png(&counterfactual)?;
    let depth_pfm = encode_pfm(depth);
    let record = DatasetRecord {
        id: 0,
        image_id: scene.image_id,
        source_image: content_path("images", "png", &source_png),
        counterfactual_image: content_path("images", "png", &cf_png),
        depth_map: content_path("depth", "pfm", &depth_pfm),
        instruction,
        answer: Location25D::new(t.bbox, t_placed.depth)?,
        relations,
        target_instance: t.id,
        target_name: t.name.clone(),
        anchors: anchors
            .iter()
            .map(|a| {
                Ok(AnchorInfo {
                    id: a.id,
                    name: a.name.clone(),
                    bbox: a.bbox,
                    depth: anchor_depth(depth, &a.bbox)? as f64,
                })
            })
            .collect::<Result<_>>()?,
        seed,
    };
    let files = vec![
        (record.source_image.clone(), source_png),
        (record.counterfactual_image.clone(), cf_png),
        (record.depth_map.clone(), depth_pfm),
    ];
    Ok(BuiltRecord { record, files })
}

/// Depth map for every scene, from its file when present or the depth client.
pub fn scene_depths(scenes: &[Scene], depth: &dyn DepthClient) -> Result<Vec<DepthMap>> {
    scenes
        .par_iter()
        .map(|s| match &s.depth {
            Some(d) => Ok(d.clone()),
            None => Ok(depth.estimate(&s.image)?),
        })
        .collect()
}

/// Builds record `index`: its own RNG stream picks scene, k and target, and
/// retries with fresh draws when the pick has too few usable anchors.
pub fn build_indexed(
    index: u64,
    scenes: &[Scene],
    depths: &[DepthMap],
    backends: &Backends,
    cfg: &BuildConfig,
) -> Result<BuiltRecord> {
    let eligible: Vec<usize> = (0..scenes.len()).filter(|&i| scenes[i].instances.len() >= 2).collect();
    if eligible.is_empty() {
        return Err(PipelineError::TooFewInstances { needed: 2, found: 0 });
    }
    let record_seed = derive_seed(cfg.seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(record_seed);
    let mut last_err = None;
    for attempt in 0..MAX_ATTEMPTS {
        let si = eligible[rng.random_range(0..eligible.len())];
        let scene = &scenes[si];
        let k_hi = cfg.k_max.min(scene.instances.len());
        let k = rng.random_range(cfg.k_min.min(k_hi)..=k_hi);
        let target = scene.instances[rng.random_range(0..scene.instances.len())].id;
        match build_record(
            scene,
            &depths[si],
            target,
            k,
            derive_seed(record_seed, attempt),
            backends.inpaint.as_ref(),
            cfg,
            None,
        ) {
            Ok(mut built) => {
                built.record.id = index;
                return Ok(built);
            }
            Err(e @ PipelineError::TooFewInstances { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or(PipelineError::TooFewInstances { needed: cfg.k_min, found: 0 }))
}

/// Builds `cfg.n` records in parallel and writes them under `out_dir`.
///
/// Output is independent of scheduling: each record owns its RNG stream and
/// records are written in index order.
pub fn build_dataset(
    scenes: &[Scene],
    backends: &Backends,
    cfg: &BuildConfig,
    out_dir: &Path,
) -> Result<Vec<DatasetRecord>> {
    cfg.validate()?;
    let depths = scene_depths(scenes, backends.depth.as_ref())?;
    let built: Vec<BuiltRecord> = (0..cfg.n as u64)
        .into_par_iter()
        .map(|i| build_indexed(i, scenes, &depths, backends, cfg))
        .collect::<Result<_>>()?;
    let mut lines = Vec::new();
    let mut records = Vec::with_capacity(built.len());
    for b in built {
        for (rel, bytes) in &b.files {
            let path = out_dir.join(rel);
            if !path.exists() {
                write_atomic(&path, bytes)?;
            }
        }
        serde_json::to_writer(&mut lines, &b.record).map_err(json_err(out_dir.join(RECORDS_FILE)))?;
        lines.push(b'\n');
        records.push(b.record);
    }
    write_atomic(&out_dir.join(RECORDS_FILE), &lines)?;
    Ok(records)
}

/// Reads a JSONL dataset.
pub fn read_records(path: &Path) -> Result<Vec<DatasetRecord>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).map_err(json_err(path))).collect()
}
