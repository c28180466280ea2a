//! Command-line front end and local HTTP service for the forge pipeline.
//!
//! The binary (`forge`) parses arguments and writes files; this library holds
//! the pieces the binary and its tests share: configuration loading, the
//! `/api` request types with the blocking handlers behind them, and the axum
//! service.

pub mod api;
pub mod config;
pub mod service;
