//! Clients for the neural backends used by the compositing pipeline.
//!
//! Each backend is a small trait. Implementations exist for three transports:
//! an in-process deterministic mock, HTTP (`POST /v1/{kind}`), and a
//! subprocess speaking the same JSON protocol over stdin/stdout.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use forge_core::relations::Instance;
use forge_core::{ConditioningBundle, DepthMap, ImageRaster, Location25D, Mask};
use serde::{Deserialize, Serialize};

pub mod config;
mod error;
pub mod http;
pub mod mock;
pub mod protocol;
pub mod subprocess;

pub use config::{BackendsConfig, ClientEndpoint, EndpointConfig, Transport};
pub use error::{ClientError, ClientResult, ErrorBody, ErrorCode, ErrorDetail};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Depth,
    Segment,
    Inpaint,
    Locate,
    Composite,
}

impl BackendKind {
    pub const ALL: [BackendKind; 5] =
        [BackendKind::Depth, BackendKind::Segment, BackendKind::Inpaint, BackendKind::Locate, BackendKind::Composite];

    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Depth => "depth",
            BackendKind::Segment => "segment",
            BackendKind::Inpaint => "inpaint",
            BackendKind::Locate => "locate",
            BackendKind::Composite => "composite",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = ClientError;

    fn from_str(s: &str) -> ClientResult<Self> {
        BackendKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ClientError::InvalidRequest(format!("unknown backend kind {s:?}")))
    }
}

/// Monocular depth estimation; larger values are nearer.
pub trait DepthClient: Send + Sync {
    fn estimate(&self, image: &ImageRaster) -> ClientResult<DepthMap>;
}

/// Foreground segmentation, optionally restricted to a hint box.
pub trait SegmentClient: Send + Sync {
    fn segment(&self, image: &ImageRaster, hint: Option<&forge_core::BBox>) -> ClientResult<Mask>;
}

/// Object removal: fills the masked region with plausible background.
pub trait InpaintClient: Send + Sync {
    fn inpaint(&self, image: &ImageRaster, mask: &Mask) -> ClientResult<ImageRaster>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocateQuery {
    pub background: ImageRaster,
    pub depth: DepthMap,
    pub instruction: String,
    /// Named objects already in the scene.
    pub annotations: Vec<Instance>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocatePrediction {
    pub location: Location25D,
    /// Model output text the location was parsed from.
    pub raw_text: String,
}

/// Predicts a 2.5D location from a background and an instruction.
pub trait LocateClient: Send + Sync {
    fn locate(&self, query: &LocateQuery) -> ClientResult<LocatePrediction>;
}

/// Renders the final composite from a conditioning bundle.
pub trait CompositeClient: Send + Sync {
    fn composite(&self, bundle: &ConditioningBundle) -> ClientResult<ImageRaster>;
}

/// Optional hook for rewording templated instructions.
pub trait Paraphraser: Send + Sync {
    fn paraphrase(&self, text: &str, seed: u64) -> ClientResult<String>;
}

/// One client per backend kind.
#[derive(Clone)]
pub struct Backends {
    pub depth: Arc<dyn DepthClient>,
    pub segment: Arc<dyn SegmentClient>,
    pub inpaint: Arc<dyn InpaintClient>,
    pub locate: Arc<dyn LocateClient>,
    pub composite: Arc<dyn CompositeClient>,
    /// Description of where each client points, for run manifests.
    pub endpoints: Vec<ClientEndpoint>,
}

impl Backends {
    pub fn mock() -> Self {
        let m = Arc::new(mock::MockBackend::default());
        Self {
            depth: m.clone(),
            segment: m.clone(),
            inpaint: m.clone(),
            locate: m.clone(),
            composite: m,
            endpoints: BackendKind::ALL.into_iter().map(ClientEndpoint::mock).collect(),
        }
    }

    /// Builds clients from configuration, applying `FORGE_BACKEND_{KIND}_URL` overrides.
    pub fn from_config(cfg: &BackendsConfig) -> ClientResult<Self> {
        let endpoints = cfg.resolve(|k| std::env::var(k).ok())?;
        Self::from_endpoints(endpoints)
    }

    pub fn from_endpoints(endpoints: Vec<ClientEndpoint>) -> ClientResult<Self> {
        let mut b = Self::mock();
        for ep in &endpoints {
            match ep.transport {
                Transport::Mock => {}
                Transport::Http { .. } | Transport::Subprocess { .. } => {
                    let remote = Arc::new(protocol::RemoteClient::new(ep.clone())?);
                    match ep.kind {
                        BackendKind::Depth => b.depth = remote,
                        BackendKind::Segment => b.segment = remote,
                        BackendKind::Inpaint => b.inpaint = remote,
                        BackendKind::Locate => b.locate = remote,
                        BackendKind::Composite => b.composite = remote,
                    }
                }
            }
        }
        b.endpoints = endpoints;
        Ok(b)
    }
}
