//! File formats: PFM for exact float maps, PNG for images and quantized depth.

mod pfm;
mod png;

pub use self::pfm::{decode_pfm, decode_pfm_raster, encode_pfm, encode_pfm_raster, read_pfm, write_pfm, PfmRead};
pub use self::png::{
    decode_depth_png, decode_png, encode_depth_png, encode_png, read_depth_png, read_png, write_depth_png, write_png,
    DEPTH_PNG_BITS,
};
