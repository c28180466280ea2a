//! TOML configuration. Backend URLs can also come from the environment.

use std::net::{IpAddr, Ipv4Addr};
use std::path::{Path, PathBuf};

use forge_clients::{Backends, BackendsConfig, ClientError};
use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_PORT: u16 = 8787;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error(transparent)]
    Backends(#[from] ClientError),
}

/// Top-level configuration file.
///
/// ```toml
/// seed = 7
///
/// [backends]
/// timeout_secs = 30
/// depth = { url = "http://127.0.0.1:9000" }
/// locate = { command = ["my-locator", "--stdio"] }
///
/// [serve]
/// port = 8787
/// studio_dir = "studio/dist"
/// ```
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    #[serde(default)]
    pub backends: BackendsConfig,
    #[serde(default)]
    pub serve: ServeConfig,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServeConfig {
    pub host: IpAddr,
    pub port: u16,
    /// Static files served under `/studio`.
    pub studio_dir: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self { host: IpAddr::V4(Ipv4Addr::LOCALHOST), port: DEFAULT_PORT, studio_dir: None }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::from_toml(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })
    }

    /// Clients for every backend kind; unconfigured kinds use the mocks.
    pub fn backends(&self) -> Result<Backends, ConfigError> {
        Ok(Backends::from_config(&self.backends)?)
    }
}
