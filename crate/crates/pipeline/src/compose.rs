//! End-to-end compose: segmentation, depth, location, fusion, detail
//! conditioning, bundle assembly and compositing.
//!
//! Every intermediate is kept as encoded bytes so the CLI and the HTTP service
//! emit byte-identical artifacts from the same code path.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use forge_clients::{Backends, LocateQuery};
use forge_core::codec::{encode_pfm, encode_pfm_raster, encode_png, read_pfm, read_png};
use forge_core::conditioning::{assemble_bundle, BundleParams, DEFAULT_GUIDANCE_SCALE, DEFAULT_LAMBDA};
use forge_core::detail::{augment_mask, hf_extract, stitch_collage, DEFAULT_DILATE_FRAC};
use forge_core::fusion::{fuse, FusionRequest};
use forge_core::geometry::{DEFAULT_TARGET_RESOLUTION, DEFAULT_ZOOM_RATIO};
use forge_core::relations::Instance;
use forge_core::resample::{crop, resize_bilinear_u8};
use forge_core::{
    ConditioningBundle, DepthMap, FusionMode, HFMap, ImageRaster, Location25D, Mask, MaskLevel, OcclusionRule, Raster,
};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, json_err, PipelineError, Result};
use crate::store::{sha256_hex, write_atomic, Manifest, MANIFEST_FILE};

pub const BUNDLE_DIR: &str = "bundle";
pub const OUTPUT_FILE: &str = "output.png";
pub const OUTPUT_FULL_FILE: &str = "output_full.png";
/// Fill for reference pixels outside the object mask.
pub const REFERENCE_BACKGROUND: u8 = 255;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Instruction(String),
    Location(Location25D),
}

/// Everything but placement and mode has a default when deserialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComposeParams {
    pub placement: Placement,
    pub mode: FusionMode,
    #[serde(default = "defaults::mask_level")]
    pub mask_level: MaskLevel,
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
    #[serde(default = "defaults::guidance_scale")]
    pub guidance_scale: f64,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub occlusion: OcclusionRule,
    #[serde(default = "defaults::zoom_ratio")]
    pub zoom_ratio: f64,
    #[serde(default = "defaults::resolution")]
    pub resolution: u32,
    #[serde(default = "defaults::dilate_frac")]
    pub dilate_frac: f64,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    use super::*;

    pub fn mask_level() -> MaskLevel {
        MaskLevel::EXACT
    }
    pub fn lambda() -> f64 {
        DEFAULT_LAMBDA
    }
    pub fn guidance_scale() -> f64 {
        DEFAULT_GUIDANCE_SCALE
    }
    pub fn alpha() -> f64 {
        1.0
    }
    pub fn zoom_ratio() -> f64 {
        DEFAULT_ZOOM_RATIO
    }
    pub fn resolution() -> u32 {
        DEFAULT_TARGET_RESOLUTION
    }
    pub fn dilate_frac() -> f64 {
        DEFAULT_DILATE_FRAC
    }
}

impl ComposeParams {
    pub fn new(placement: Placement, mode: FusionMode) -> Self {
        Self {
            placement,
            mode,
            mask_level: defaults::mask_level(),
            lambda: defaults::lambda(),
            guidance_scale: defaults::guidance_scale(),
            alpha: defaults::alpha(),
            occlusion: OcclusionRule::NearestWins,
            zoom_ratio: defaults::zoom_ratio(),
            resolution: defaults::resolution(),
            dilate_frac: defaults::dilate_frac(),
            seed: 0,
        }
    }
}

/// Decoded inputs. Depth maps, when given, replace the depth client's output.
#[derive(Clone, Debug)]
pub struct ComposeInputs {
    pub background: ImageRaster,
    pub reference: ImageRaster,
    pub bg_depth: Option<DepthMap>,
    pub ref_depth: Option<DepthMap>,
    /// Named scene objects, for locators that resolve names against boxes.
    pub annotations: Vec<Instance>,
}

#[derive(Clone, Debug)]
pub struct ComposeOutput {
    /// Composite at the bundle's working resolution.
    pub output: ImageRaster,
    /// Composite pasted back into the full background.
    pub output_full: ImageRaster,
    pub bundle: ConditioningBundle,
    pub location: Location25D,
}

#[derive(Debug)]
pub struct StageFailure {
    pub stage: &'static str,
    pub error: PipelineError,
}

/// Files produced so far, keyed by relative path, and the outcome.
#[derive(Debug)]
pub struct ComposeRun {
    pub files: BTreeMap<String, Vec<u8>>,
    pub outcome: std::result::Result<ComposeOutput, StageFailure>,
}

#[derive(Serialize)]
struct LocationRecord<'a> {
    location: Location25D,
    source: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    raw_text: Option<String>,
}

/// Reference object on a white field, cropped to the mask's bounding box and
/// resized to a square whose side is the box's longer edge.
///
/// The square covers exactly the region fusion maps into the target box, so a
/// compositor stretching it over that box lines it up with the object mask.
pub fn object_reference_crop(image: &ImageRaster, mask: &Mask) -> Result<ImageRaster> {
    image.same_dims(mask.raster())?;
    let rect = mask.bounding_rect().ok_or(forge_core::Error::EmptyMask)?;
    let rgb = image.to_channels(3)?;
    let isolated = Raster::from_fn(rgb.width(), rgb.height(), 3, |x, y, c| {
        if mask.is_set(x, y) {
            rgb.get(x, y, c)
        } else {
            REFERENCE_BACKGROUND
        }
    })?;
    let tight = crop(&isolated, rect)?;
    let side = rect.width().max(rect.height());
    Ok(resize_bilinear_u8(&tight, side, side)?)
}

/// Pastes a composite back into the full frame at the crop square.
pub fn paste_back(background: &ImageRaster, bundle: &ConditioningBundle, output: &ImageRaster) -> Result<ImageRaster> {
    let full = background.to_channels(3)?;
    let Some(crop) = &bundle.meta.crop else {
        return Ok(output.to_channels(3)?);
    };
    let sq = crop.square;
    let patch = resize_bilinear_u8(&output.to_channels(3)?, sq.width(), sq.height())?;
    Ok(Raster::from_fn(full.width(), full.height(), 3, |x, y, c| {
        if sq.contains(x, y) {
            patch.get(x - sq.x0, y - sq.y0, c)
        } else {
            full.get(x, y, c)
        }
    })?)
}

fn stages(
    inputs: &ComposeInputs,
    p: &ComposeParams,
    backends: &Backends,
    files: &mut BTreeMap<String, Vec<u8>>,
    stage: &mut &'static str,
) -> Result<ComposeOutput> {
    let mut put = |name: &str, bytes: Vec<u8>| {
        files.insert(name.to_string(), bytes);
    };

    *stage = "segment";
    let ref_mask = backends.segment.segment(&inputs.reference, None)?;
    put("ref_mask.png", encode_png(&ref_mask.to_image())?);

    *stage = "depth";
    let bg_depth = match &inputs.bg_depth {
        Some(d) => d.clone(),
        None => backends.depth.estimate(&inputs.background)?,
    };
    if bg_depth.dims() != inputs.background.dims() {
        return Err(PipelineError::InvalidJob("background depth size differs from the background".into()));
    }
    let ref_depth = match &inputs.ref_depth {
        Some(d) => d.clone(),
        None => backends.depth.estimate(&inputs.reference)?,
    };
    put("bg_depth.pfm", encode_pfm(&bg_depth));
    put("ref_depth.pfm", encode_pfm(&ref_depth));

    *stage = "locate";
    let (location, record) = match &p.placement {
        Placement::Location(loc) => (*loc, LocationRecord { location: *loc, source: "explicit", raw_text: None }),
        Placement::Instruction(text) => {
            let pred = backends.locate.locate(&LocateQuery {
                background: inputs.background.clone(),
                depth: bg_depth.clone(),
                instruction: text.clone(),
                annotations: inputs.annotations.clone(),
            })?;
            (
                pred.location,
                LocationRecord { location: pred.location, source: "locator", raw_text: Some(pred.raw_text) },
            )
        }
    };
    put("location.json", json_bytes(&record)?);

    *stage = "fuse";
    let mut req = FusionRequest::new(bg_depth, ref_depth, ref_mask.clone(), location, p.mode);
    req.alpha = p.alpha;
    req.occlusion = p.occlusion;
    let fusion = fuse(&req)?;
    put("fused_depth.pfm", encode_pfm(&fusion.fused_depth));
    put("object_depth.pfm", encode_pfm(&fusion.object_depth));
    put("scene_mask.png", encode_png(&fusion.scene_mask.to_image())?);
    put("placed_mask.png", encode_png(&fusion.placed_obj_mask.to_image())?);

    *stage = "augment_mask";
    let aug = augment_mask(&ref_mask, p.mask_level, p.dilate_frac)?;
    put("aug_mask.png", encode_png(&aug.to_image())?);

    *stage = "hf_extract";
    let hf = hf_extract(&inputs.reference, &aug)?;
    put("hf.pfm", encode_pfm_raster(hf.raster())?);

    *stage = "collage";
    let tight = ref_mask.bounding_rect().ok_or(forge_core::Error::EmptyMask)?;
    let hf_tight = HFMap::new(crop(hf.raster(), tight)?)?;
    let collage = stitch_collage(&inputs.background, &hf_tight, &location.bbox)?;
    put("collage.png", encode_png(&collage)?);

    *stage = "reference_crop";
    let reference_crop = object_reference_crop(&inputs.reference, &ref_mask)?;
    put("reference_crop.png", encode_png(&reference_crop)?);

    *stage = "bundle";
    let params = BundleParams {
        bundle_id: p.seed,
        lambda: p.lambda,
        guidance_scale: p.guidance_scale,
        mode: p.mode,
        location,
        zoom: Some((p.zoom_ratio, p.resolution)),
    };
    let bundle = assemble_bundle(&inputs.background, &fusion, &collage, &reference_crop, &params)?;
    for (name, bytes) in bundle.to_files()? {
        put(&format!("{BUNDLE_DIR}/{name}"), bytes);
    }

    *stage = "composite";
    let output = backends.composite.composite(&bundle)?;
    put(OUTPUT_FILE, encode_png(&output)?);
    let output_full = paste_back(&inputs.background, &bundle, &output)?;
    put(OUTPUT_FULL_FILE, encode_png(&output_full)?);

    Ok(ComposeOutput { output, output_full, bundle, location })
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v).map_err(json_err("<memory>"))?;
    out.push(b'\n');
    Ok(out)
}

/// Runs every stage in memory, keeping whatever was produced before a failure.
pub fn run_compose(inputs: &ComposeInputs, params: &ComposeParams, backends: &Backends) -> ComposeRun {
    let mut files = BTreeMap::new();
    let mut stage = "validate";
    let outcome = validate_params(params)
        .and_then(|_| stages(inputs, params, backends, &mut files, &mut stage))
        .map_err(|error| StageFailure { stage, error });
    ComposeRun { files, outcome }
}

fn validate_params(p: &ComposeParams) -> Result<()> {
    if let Placement::Instruction(t) = &p.placement {
        if t.trim().is_empty() {
            return Err(PipelineError::InvalidJob("instruction is empty".into()));
        }
    }
    for (what, v) in [("lambda", p.lambda), ("guidance_scale", p.guidance_scale), ("zoom_ratio", p.zoom_ratio)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(PipelineError::InvalidJob(format!("{what} must be a non-negative number")));
        }
    }
    if !p.alpha.is_finite() {
        return Err(PipelineError::InvalidJob("alpha must be finite".into()));
    }
    if p.resolution == 0 {
        return Err(PipelineError::InvalidJob("resolution must be positive".into()));
    }
    Ok(())
}

/// A compose job as given on the command line. Paths are recorded as given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComposeJob {
    pub background: PathBuf,
    pub reference: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bg_depth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_depth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
    pub params: ComposeParams,
}

impl ComposeJob {
    pub fn input_paths(&self) -> Vec<&Path> {
        let mut v = vec![self.background.as_path(), self.reference.as_path()];
        v.extend(self.bg_depth.as_deref());
        v.extend(self.ref_depth.as_deref());
        v.extend(self.annotations.as_deref());
        v
    }

    pub fn load(&self) -> Result<ComposeInputs> {
        let read_depth =
            |p: &Option<PathBuf>| -> Result<Option<DepthMap>> { p.as_ref().map(|p| Ok(read_pfm(p)?.map)).transpose() };
        let annotations = match &self.annotations {
            Some(p) => {
                let bytes = std::fs::read(p).map_err(io_err(p))?;
                serde_json::from_slice(&bytes).map_err(json_err(p))?
            }
            None => Vec::new(),
        };
        Ok(ComposeInputs {
            background: read_png(&self.background)?,
            reference: read_png(&self.reference)?,
            bg_depth: read_depth(&self.bg_depth)?,
            ref_depth: read_depth(&self.ref_depth)?,
            annotations,
        })
    }
}

/// Runs a job and persists every intermediate plus `manifest.json` under `out_dir`.
///
/// On failure the files produced so far are kept and the manifest names the
/// failed stage.
pub fn compose_to_dir(job: &ComposeJob, backends: &Backends, out_dir: &Path) -> Result<ComposeOutput> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let config = serde_json::to_value(job).map_err(json_err(out_dir.join(MANIFEST_FILE)))?;
    let mut manifest = Manifest::new("compose", job.params.seed, config, backends.endpoints.clone());
    for p in job.input_paths() {
        manifest.add_input(p)?;
    }
    let run = match job.load() {
        Ok(inputs) => run_compose(&inputs, &job.params, backends),
        Err(error) => ComposeRun { files: BTreeMap::new(), outcome: Err(StageFailure { stage: "load", error }) },
    };
    for (name, bytes) in &run.files {
        write_atomic(&out_dir.join(name), bytes)?;
        manifest.outputs.insert(name.clone(), sha256_hex(bytes));
    }
    if let Err(f) = &run.outcome {
        manifest.mark_failed(f.stage, &f.error);
    }
    manifest.write_checked(&out_dir.join(MANIFEST_FILE))?;
    run.outcome.map_err(|f| PipelineError::Stage { stage: f.stage, source: Box::new(f.error) })
}
