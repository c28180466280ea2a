//! Bodies of the `/api` endpoints and the blocking functions behind them.
//!
//! Files travel as `{"format": "png" | "pfm", "b64": ...}` payloads holding the
//! exact bytes the matching CLI command writes to disk.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use forge_clients::protocol::{Payload, PayloadFormat};
use forge_clients::{Backends, ClientError, ErrorBody, ErrorCode, ErrorDetail, LocateQuery};
use forge_core::relations::Instance;
use forge_core::{BBox, Location25D};
use forge_pipeline::compose::{run_compose, ComposeInputs, ComposeParams, BUNDLE_DIR};
use forge_pipeline::ops::{self, FuseParams, MaskParams};
use forge_pipeline::store::sha256_hex;
use forge_pipeline::PipelineError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Core(#[from] forge_core::Error),
}

fn pipeline_code(e: &PipelineError) -> ErrorCode {
    match e {
        PipelineError::Client(c) | PipelineError::InpaintFailure(c) => c.code(),
        PipelineError::Stage { source, .. } => pipeline_code(source),
        PipelineError::Core(_)
        | PipelineError::Annotations(_)
        | PipelineError::TooFewInstances { .. }
        | PipelineError::InstanceMissing
        | PipelineError::EmptyDataset
        | PipelineError::InvalidJob(_) => ErrorCode::InvalidRequest,
        PipelineError::Io { .. } | PipelineError::Json { .. } | PipelineError::HashMismatch(_) => ErrorCode::Internal,
    }
}

impl ApiError {
    pub fn code(&self) -> ErrorCode {
        match self {
            ApiError::BadRequest(_) | ApiError::Core(_) => ErrorCode::InvalidRequest,
            ApiError::Pipeline(e) => pipeline_code(e),
            ApiError::Client(e) => e.code(),
        }
    }

    pub fn to_body(&self) -> ErrorBody {
        ErrorBody { error: ErrorDetail { code: self.code(), message: self.to_string() } }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn png(bytes: &[u8]) -> Payload {
    Payload::from_bytes(PayloadFormat::Png, bytes)
}

fn pfm(bytes: &[u8]) -> Payload {
    Payload::from_bytes(PayloadFormat::Pfm, bytes)
}

fn file_payload(name: &str, bytes: &[u8]) -> Payload {
    if name.ends_with(".pfm") {
        pfm(bytes)
    } else {
        png(bytes)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FuseRequest {
    pub bg_depth: Payload,
    pub obj_depth: Payload,
    pub obj_mask: Payload,
    #[serde(flatten)]
    pub params: FuseParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuseResponse {
    pub fused_depth: Payload,
    pub object_depth: Payload,
    pub scene_mask: Payload,
    pub placed_mask: Payload,
}

pub fn fuse(req: &FuseRequest) -> ApiResult<FuseResponse> {
    let a = ops::fuse_depth(
        &req.bg_depth.to_bytes(PayloadFormat::Pfm)?,
        &req.obj_depth.to_bytes(PayloadFormat::Pfm)?,
        &req.obj_mask.to_bytes(PayloadFormat::Png)?,
        &req.params,
    )?;
    Ok(FuseResponse {
        fused_depth: pfm(&a.fused_depth),
        object_depth: pfm(&a.object_depth),
        scene_mask: png(&a.scene_mask),
        placed_mask: png(&a.placed_mask),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetailRequest {
    pub image: Payload,
    pub mask: Payload,
    #[serde(flatten)]
    pub params: MaskParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetailResponse {
    pub hf: Payload,
}

pub fn detail_map(req: &DetailRequest) -> ApiResult<DetailResponse> {
    let hf = ops::detail_map(
        &req.image.to_bytes(PayloadFormat::Png)?,
        &req.mask.to_bytes(PayloadFormat::Png)?,
        &req.params,
    )?;
    Ok(DetailResponse { hf: pfm(&hf) })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CollageRequest {
    pub scene: Payload,
    pub hf: Payload,
    pub bbox: BBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollageResponse {
    pub collage: Payload,
}

pub fn collage(req: &CollageRequest) -> ApiResult<CollageResponse> {
    let out = ops::collage(&req.scene.to_bytes(PayloadFormat::Png)?, &req.hf.to_bytes(PayloadFormat::Pfm)?, &req.bbox)?;
    Ok(CollageResponse { collage: png(&out) })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AugmentRequest {
    pub mask: Payload,
    #[serde(flatten)]
    pub params: MaskParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentResponse {
    pub mask: Payload,
}

pub fn augment_mask(req: &AugmentRequest) -> ApiResult<AugmentResponse> {
    Ok(AugmentResponse { mask: png(&ops::augment(&req.mask.to_bytes(PayloadFormat::Png)?, &req.params)?) })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocateRequest {
    pub background: Payload,
    /// Estimated with the depth backend when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<Payload>,
    pub instruction: String,
    #[serde(default)]
    pub annotations: Vec<Instance>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocateResponse {
    pub location: Location25D,
    pub raw_text: String,
}

pub fn locate(backends: &Backends, req: &LocateRequest) -> ApiResult<LocateResponse> {
    if req.instruction.trim().is_empty() {
        return Err(ApiError::BadRequest("instruction is empty".into()));
    }
    let background = req.background.to_image()?;
    let depth = match &req.depth {
        Some(d) => d.to_depth()?,
        None => backends.depth.estimate(&background)?,
    };
    let pred = backends.locate.locate(&LocateQuery {
        background,
        depth,
        instruction: req.instruction.clone(),
        annotations: req.annotations.clone(),
    })?;
    Ok(LocateResponse { location: pred.location, raw_text: pred.raw_text })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComposeRequest {
    pub background: Payload,
    pub reference: Payload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bg_depth: Option<Payload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_depth: Option<Payload>,
    #[serde(default)]
    pub annotations: Vec<Instance>,
    pub params: ComposeParams,
}

/// Every file `forge compose` writes (except the manifest), keyed by relative path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComposeResponse {
    pub location: Location25D,
    pub files: BTreeMap<String, Payload>,
}

fn run(backends: &Backends, req: &ComposeRequest) -> ApiResult<(Location25D, BTreeMap<String, Vec<u8>>)> {
    let inputs = ComposeInputs {
        background: req.background.to_image()?,
        reference: req.reference.to_image()?,
        bg_depth: req.bg_depth.as_ref().map(Payload::to_depth).transpose()?,
        ref_depth: req.ref_depth.as_ref().map(Payload::to_depth).transpose()?,
        annotations: req.annotations.clone(),
    };
    let run = run_compose(&inputs, &req.params, backends);
    match run.outcome {
        Ok(out) => Ok((out.location, run.files)),
        Err(f) => Err(PipelineError::Stage { stage: f.stage, source: Box::new(f.error) }.into()),
    }
}

pub fn compose(backends: &Backends, req: &ComposeRequest) -> ApiResult<ComposeResponse> {
    let (location, files) = run(backends, req)?;
    Ok(ComposeResponse { location, files: files.iter().map(|(k, v)| (k.clone(), file_payload(k, v))).collect() })
}

/// Bundle directory contents as a JSON archive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportResponse {
    /// Suggested download name, embedding the content hash.
    pub filename: String,
    pub hash: String,
    /// Raw file bytes, base64, keyed by file name inside the bundle directory.
    pub files: BTreeMap<String, String>,
}

/// SHA-256 over `"{sha256(file)}  {name}\n"` lines in name order.
pub fn bundle_hash(files: &BTreeMap<String, Vec<u8>>) -> String {
    let listing: String = files.iter().map(|(name, bytes)| format!("{}  {name}\n", sha256_hex(bytes))).collect();
    sha256_hex(listing.as_bytes())
}

pub fn export_bundle(backends: &Backends, req: &ComposeRequest) -> ApiResult<ExportResponse> {
    let (_, files) = run(backends, req)?;
    let prefix = format!("{BUNDLE_DIR}/");
    let bundle: BTreeMap<String, Vec<u8>> =
        files.into_iter().filter_map(|(k, v)| k.strip_prefix(&prefix).map(|name| (name.to_string(), v))).collect();
    let hash = bundle_hash(&bundle);
    Ok(ExportResponse {
        filename: format!("bundle-{}.json", &hash[..12]),
        files: bundle.iter().map(|(k, v)| (k.clone(), B64.encode(v))).collect(),
        hash,
    })
}
