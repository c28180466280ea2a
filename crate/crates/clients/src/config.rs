//! Backend endpoint configuration.
//!
//! ```toml
//! timeout_secs = 30
//!
//! [depth]
//! url = "http://localhost:8700"
//!
//! [composite]
//! command = ["forge", "mock-backend"]
//! ```
//!
//! Kinds without an entry use the in-process mock. The environment variable
//! `FORGE_BACKEND_{KIND}_URL` overrides the entry for that kind.

use serde::{Deserialize, Serialize};

use crate::{BackendKind, ClientError, ClientResult};

pub const DEFAULT_TIMEOUT_SECS: f64 = 60.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transport", rename_all = "snake_case")]
pub enum Transport {
    Mock,
    /// Base URL; requests go to `{url}/v1/{kind}`.
    Http {
        url: String,
    },
    /// Program and arguments; one request per process.
    Subprocess {
        command: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientEndpoint {
    pub kind: BackendKind,
    #[serde(flatten)]
    pub transport: Transport,
    pub timeout_secs: f64,
}

impl ClientEndpoint {
    pub fn mock(kind: BackendKind) -> Self {
        Self { kind, transport: Transport::Mock, timeout_secs: DEFAULT_TIMEOUT_SECS }
    }

    pub fn http(kind: BackendKind, url: impl Into<String>) -> Self {
        Self { kind, transport: Transport::Http { url: url.into() }, timeout_secs: DEFAULT_TIMEOUT_SECS }
    }

    pub fn subprocess(kind: BackendKind, command: Vec<String>) -> Self {
        Self { kind, transport: Transport::Subprocess { command }, timeout_secs: DEFAULT_TIMEOUT_SECS }
    }

    pub fn with_timeout(mut self, secs: f64) -> Self {
        self.timeout_secs = secs;
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub url: Option<String>,
    pub command: Option<Vec<String>>,
    pub timeout_secs: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    pub timeout_secs: Option<f64>,
    pub depth: Option<EndpointConfig>,
    pub segment: Option<EndpointConfig>,
    pub inpaint: Option<EndpointConfig>,
    pub locate: Option<EndpointConfig>,
    pub composite: Option<EndpointConfig>,
}

/// Name of the URL override variable for `kind`.
pub fn env_var_name(kind: BackendKind) -> String {
    format!("FORGE_BACKEND_{}_URL", kind.as_str().to_ascii_uppercase())
}

impl BackendsConfig {
    pub fn entry(&self, kind: BackendKind) -> Option<&EndpointConfig> {
        match kind {
            BackendKind::Depth => self.depth.as_ref(),
            BackendKind::Segment => self.segment.as_ref(),
            BackendKind::Inpaint => self.inpaint.as_ref(),
            BackendKind::Locate => self.locate.as_ref(),
            BackendKind::Composite => self.composite.as_ref(),
        }
    }

    /// Resolves one endpoint per kind; `env` looks up environment variables.
    pub fn resolve(&self, env: impl Fn(&str) -> Option<String>) -> ClientResult<Vec<ClientEndpoint>> {
        let default_timeout = self.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS);
        BackendKind::ALL
            .into_iter()
            .map(|kind| {
                let entry = self.entry(kind).cloned().unwrap_or_default();
                let timeout = entry.timeout_secs.unwrap_or(default_timeout);
                if !(timeout.is_finite() && timeout > 0.0) {
                    return Err(ClientError::Config(format!("{kind}: timeout_secs must be positive")));
                }
                let transport = match (env(&env_var_name(kind)).filter(|u| !u.is_empty()), entry.url, entry.command) {
                    (Some(url), _, _) => Transport::Http { url },
                    (None, Some(_), Some(_)) => {
                        return Err(ClientError::Config(format!("{kind}: set either url or command, not both")))
                    }
                    (None, Some(url), None) => Transport::Http { url },
                    (None, None, Some(command)) if command.is_empty() => {
                        return Err(ClientError::Config(format!("{kind}: command is empty")))
                    }
                    (None, None, Some(command)) => Transport::Subprocess { command },
                    (None, None, None) => Transport::Mock,
                };
                Ok(ClientEndpoint { kind, transport, timeout_secs: timeout })
            })
            .collect()
    }
}
