//! Deterministic building blocks for depth-aware generative compositing.
//!
//! The crate covers everything that does not need a neural network: raster
//! containers and their file formats, 2.5D locations (a normalized box plus a
//! scalar depth), depth-map fusion, high-frequency detail maps, mask
//! coarsening, spatial-relation reasoning, and the conditioning bundle handed
//! to a compositor backend.

pub mod bbox;
pub mod codec;
pub mod conditioning;
pub mod depth;
pub mod detail;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod mask;
pub mod morphology;
pub mod raster;
pub mod relations;
pub mod resample;
pub mod seed;

pub use bbox::{BBox, Location25D, PixelRect};
pub use conditioning::{ConditioningBundle, Dropped, GuidanceArrays};
pub use depth::DepthMap;
pub use detail::{HFMap, MaskLevel};
pub use error::{Error, Result};
pub use fusion::{FusionMode, FusionRequest, FusionResult, OcclusionRule};
pub use geometry::CropSpec;
pub use mask::{Mask, MaskKind};
pub use raster::{FloatRaster, ImageRaster, Raster};
pub use relations::{Predicate, Relation};
