//! Batch workflows built on the core operations and backend clients:
//! counterfactual dataset construction, the compose pipeline, locator
//! evaluation and video training pairs.

pub mod coco;
pub mod compose;
pub mod dataset;
mod error;
pub mod eval;
pub mod fixtures;
pub mod ops;
pub mod store;
pub mod video;

pub use error::{PipelineError, Result};
