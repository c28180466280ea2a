//! JSON wire protocol shared by the HTTP and subprocess transports.
//!
//! Rasters travel as payload objects: `{"format": "png", "b64": "..."}`.
//! When a request body would exceed [`MULTIPART_THRESHOLD`] the HTTP client
//! moves payload bytes into multipart parts and leaves `{"format", "part"}`
//! references in the JSON; [`inline_parts`] reverses that on the server.

use std::collections::HashMap;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use forge_core::codec::{decode_pfm, decode_png, encode_pfm, encode_png};
use forge_core::conditioning::BundleMeta;
use forge_core::relations::Instance;
use forge_core::{BBox, ConditioningBundle, DepthMap, ImageRaster, Location25D, Mask, MaskKind};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Transport;
use crate::{
    http, subprocess, BackendKind, Backends, ClientEndpoint, ClientError, ClientResult, CompositeClient, DepthClient,
    InpaintClient, LocateClient, LocatePrediction, LocateQuery, SegmentClient,
};

/// Request bodies above this size are sent as multipart.
pub const MULTIPART_THRESHOLD: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadFormat {
    Png,
    Pfm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub format: PayloadFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part: Option<String>,
}

impl Payload {
    /// Inline payload holding already-encoded file bytes.
    pub fn from_bytes(format: PayloadFormat, bytes: &[u8]) -> Self {
        Self { format, b64: Some(B64.encode(bytes)), part: None }
    }

    pub fn image(image: &ImageRaster) -> ClientResult<Self> {
        Ok(Self::from_bytes(PayloadFormat::Png, &encode_png(image)?))
    }

    pub fn mask(mask: &Mask) -> ClientResult<Self> {
        Self::image(&mask.to_image())
    }

    pub fn depth(depth: &DepthMap) -> Self {
        Self::from_bytes(PayloadFormat::Pfm, &encode_pfm(depth))
    }

    /// Encoded file bytes, checking the declared format.
    pub fn to_bytes(&self, expect: PayloadFormat) -> ClientResult<Vec<u8>> {
        if self.format != expect {
            return Err(ClientError::InvalidRequest(format!("expected {expect:?} payload, got {:?}", self.format)));
        }
        match (&self.b64, &self.part) {
            (Some(b), _) => B64.decode(b).map_err(|e| ClientError::InvalidRequest(format!("bad base64 payload: {e}"))),
            (None, Some(p)) => Err(ClientError::InvalidRequest(format!("unresolved multipart reference {p:?}"))),
            (None, None) => Err(ClientError::InvalidRequest("payload has neither b64 nor part".into())),
        }
    }

    pub fn to_image(&self) -> ClientResult<ImageRaster> {
        Ok(decode_png(&self.to_bytes(PayloadFormat::Png)?)?)
    }

    pub fn to_mask(&self, kind: MaskKind) -> ClientResult<Mask> {
        Ok(Mask::from_image(&self.to_image()?, kind)?)
    }

    pub fn to_depth(&self) -> ClientResult<DepthMap> {
        Ok(decode_pfm(&self.to_bytes(PayloadFormat::Pfm)?)?.map)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthRequest {
    pub image: Payload,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthResponse {
    pub depth: Payload,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub image: Payload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<BBox>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub mask: Payload,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InpaintRequest {
    pub image: Payload,
    pub mask: Payload,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageResponse {
    pub image: Payload,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocateRequest {
    pub background: Payload,
    pub depth: Payload,
    pub instruction: String,
    #[serde(default)]
    pub annotations: Vec<Instance>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocateResponse {
    pub location: Location25D,
    pub raw_text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeRequest {
    pub masked_scene: Payload,
    pub collage: Payload,
    pub fused_depth: Payload,
    pub reference: Payload,
    pub object_depth: Payload,
    pub object_mask: Payload,
    pub scene_mask: Payload,
    pub meta: BundleMeta,
}

impl CompositeRequest {
    pub fn from_bundle(b: &ConditioningBundle) -> ClientResult<Self> {
        Ok(Self {
            masked_scene: Payload::image(&b.masked_scene)?,
            collage: Payload::image(&b.collage)?,
            fused_depth: Payload::depth(&b.fused_depth),
            reference: Payload::image(&b.reference_crop)?,
            object_depth: Payload::depth(&b.object_depth),
            object_mask: Payload::mask(&b.object_mask)?,
            scene_mask: Payload::mask(&b.scene_mask)?,
            meta: b.meta,
        })
    }

    pub fn to_bundle(&self) -> ClientResult<ConditioningBundle> {
        let bundle = ConditioningBundle {
            masked_scene: self.masked_scene.to_image()?,
            collage: self.collage.to_image()?,
            fused_depth: self.fused_depth.to_depth()?,
            reference_crop: self.reference.to_image()?,
            object_depth: self.object_depth.to_depth()?,
            object_mask: self.object_mask.to_mask(MaskKind::Segmentation)?,
            scene_mask: self.scene_mask.to_mask(self.meta.scene_mask_kind)?,
            meta: self.meta,
        };
        bundle.validate()?;
        Ok(bundle)
    }
}

fn to_value<T: Serialize>(v: &T) -> ClientResult<Value> {
    serde_json::to_value(v).map_err(|e| ClientError::InvalidRequest(e.to_string()))
}

fn parse_request<T: DeserializeOwned>(v: Value) -> ClientResult<T> {
    serde_json::from_value(v).map_err(|e| ClientError::InvalidRequest(e.to_string()))
}

fn parse_response<T: DeserializeOwned>(kind: BackendKind, v: Value) -> ClientResult<T> {
    serde_json::from_value(v).map_err(|e| ClientError::MalformedResponse { kind, reason: e.to_string() })
}

/// Serves one request against local clients. Used by both server transports.
pub fn handle(backends: &Backends, kind: BackendKind, request: Value) -> ClientResult<Value> {
    match kind {
        BackendKind::Depth => {
            let req: DepthRequest = parse_request(request)?;
            let depth = backends.depth.estimate(&req.image.to_image()?)?;
            to_value(&DepthResponse { depth: Payload::depth(&depth) })
        }
        BackendKind::Segment => {
            let req: SegmentRequest = parse_request(request)?;
            let mask = backends.segment.segment(&req.image.to_image()?, req.hint.as_ref())?;
            to_value(&SegmentResponse { mask: Payload::mask(&mask)? })
        }
        BackendKind::Inpaint => {
            let req: InpaintRequest = parse_request(request)?;
            let out = backends.inpaint.inpaint(&req.image.to_image()?, &req.mask.to_mask(MaskKind::Segmentation)?)?;
            to_value(&ImageResponse { image: Payload::image(&out)? })
        }
        BackendKind::Locate => {
            let req: LocateRequest = parse_request(request)?;
            let query = LocateQuery {
                background: req.background.to_image()?,
                depth: req.depth.to_depth()?,
                instruction: req.instruction,
                annotations: req.annotations,
            };
            let p = backends.locate.locate(&query)?;
            to_value(&LocateResponse { location: p.location, raw_text: p.raw_text })
        }
        BackendKind::Composite => {
            let req: CompositeRequest = parse_request(request)?;
            let out = backends.composite.composite(&req.to_bundle()?)?;
            to_value(&ImageResponse { image: Payload::image(&out)? })
        }
    }
}

fn visit_payloads(v: &mut Value, f: &mut impl FnMut(&mut serde_json::Map<String, Value>)) {
    match v {
        Value::Object(map) => {
            if map.contains_key("format") && (map.contains_key("b64") || map.contains_key("part")) {
                f(map);
            } else {
                map.values_mut().for_each(|c| visit_payloads(c, f));
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|c| visit_payloads(c, f)),
        _ => {}
    }
}

/// Moves inline payload bytes into named parts.
pub fn extract_parts(request: &mut Value) -> ClientResult<Vec<(String, Vec<u8>)>> {
    let mut parts = Vec::new();
    let mut err = None;
    visit_payloads(request, &mut |map| {
        if let Some(Value::String(b)) = map.remove("b64") {
            match B64.decode(b) {
                Ok(bytes) => {
                    let name = format!("blob{}", parts.len());
                    map.insert("part".into(), Value::String(name.clone()));
                    parts.push((name, bytes));
                }
                Err(e) => err = Some(ClientError::InvalidRequest(format!("bad base64 payload: {e}"))),
            }
        }
    });
    err.map_or(Ok(parts), Err)
}

/// Replaces part references with inline base64 from `parts`.
pub fn inline_parts(request: &mut Value, parts: &HashMap<String, Vec<u8>>) -> ClientResult<()> {
    let mut err = None;
    visit_payloads(request, &mut |map| {
        if let Some(Value::String(name)) = map.remove("part") {
            match parts.get(&name) {
                Some(bytes) => {
                    map.insert("b64".into(), Value::String(B64.encode(bytes)));
                }
                None => err = Some(ClientError::InvalidRequest(format!("missing multipart part {name:?}"))),
            }
        }
    });
    err.map_or(Ok(()), Err)
}

/// Client for a backend reached over HTTP or a subprocess.
pub struct RemoteClient {
    endpoint: ClientEndpoint,
    http: Option<reqwest::blocking::Client>,
}

impl RemoteClient {
    pub fn new(endpoint: ClientEndpoint) -> ClientResult<Self> {
        let http = match &endpoint.transport {
            Transport::Http { .. } => Some(http::build_client(&endpoint)?),
            _ => None,
        };
        Ok(Self { endpoint, http })
    }

    pub fn endpoint(&self) -> &ClientEndpoint {
        &self.endpoint
    }

    fn call<Req: Serialize, Resp: DeserializeOwned>(&self, kind: BackendKind, req: &Req) -> ClientResult<Resp> {
        if kind != self.endpoint.kind {
            return Err(ClientError::Config(format!("{} endpoint used for a {kind} request", self.endpoint.kind)));
        }
        let body = to_value(req)?;
        let resp = match (&self.endpoint.transport, &self.http) {
            (Transport::Http { url }, Some(client)) => http::post(client, url, &self.endpoint, body)?,
            (Transport::Subprocess { command }, _) => subprocess::call(command, &self.endpoint, body)?,
            _ => return Err(ClientError::Config(format!("{kind} endpoint is not remote"))),
        };
        parse_response(kind, resp)
    }
}

impl DepthClient for RemoteClient {
    fn estimate(&self, image: &ImageRaster) -> ClientResult<DepthMap> {
        let r: DepthResponse = self.call(BackendKind::Depth, &DepthRequest { image: Payload::image(image)? })?;
        r.depth.to_depth().map_err(|e| malformed(BackendKind::Depth, e))
    }
}

impl SegmentClient for RemoteClient {
    fn segment(&self, image: &ImageRaster, hint: Option<&BBox>) -> ClientResult<Mask> {
        let req = SegmentRequest { image: Payload::image(image)?, hint: hint.copied() };
        let r: SegmentResponse = self.call(BackendKind::Segment, &req)?;
        let mask = r.mask.to_mask(MaskKind::Segmentation).map_err(|e| malformed(BackendKind::Segment, e))?;
        check_dims(BackendKind::Segment, image.dims(), mask.dims())?;
        Ok(mask)
    }
}

impl InpaintClient for RemoteClient {
    fn inpaint(&self, image: &ImageRaster, mask: &Mask) -> ClientResult<ImageRaster> {
        let req = InpaintRequest { image: Payload::image(image)?, mask: Payload::mask(mask)? };
        let r: ImageResponse = self.call(BackendKind::Inpaint, &req)?;
        let out = r.image.to_image().map_err(|e| malformed(BackendKind::Inpaint, e))?;
        check_dims(BackendKind::Inpaint, image.dims(), out.dims())?;
        Ok(out)
    }
}

impl LocateClient for RemoteClient {
    fn locate(&self, q: &LocateQuery) -> ClientResult<LocatePrediction> {
        let req = LocateRequest {
            background: Payload::image(&q.background)?,
            depth: Payload::depth(&q.depth),
            instruction: q.instruction.clone(),
            annotations: q.annotations.clone(),
        };
        let r: LocateResponse = self.call(BackendKind::Locate, &req)?;
        Ok(LocatePrediction { location: r.location, raw_text: r.raw_text })
    }
}

impl CompositeClient for RemoteClient {
    fn composite(&self, bundle: &ConditioningBundle) -> ClientResult<ImageRaster> {
        let r: ImageResponse = self.call(BackendKind::Composite, &CompositeRequest::from_bundle(bundle)?)?;
        let out = r.image.to_image().map_err(|e| malformed(BackendKind::Composite, e))?;
        check_dims(BackendKind::Composite, bundle.dims(), out.dims())?;
        Ok(out)
    }
}

fn malformed(kind: BackendKind, e: ClientError) -> ClientError {
    ClientError::MalformedResponse { kind, reason: e.to_string() }
}

fn check_dims(kind: BackendKind, expected: (u32, u32), actual: (u32, u32)) -> ClientResult<()> {
    if expected != actual {
        return Err(ClientError::MalformedResponse {
            kind,
            reason: format!("expected {}x{} output, got {}x{}", expected.0, expected.1, actual.0, actual.1),
        });
    }
    Ok(())
}
