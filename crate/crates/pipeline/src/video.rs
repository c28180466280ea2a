//! Training pairs from video: the object from one frame conditions the
//! reconstruction of a later frame.

use forge_core::conditioning::mask_scene;
use forge_core::detail::augment_mask;
use forge_core::{ImageRaster, Mask, MaskLevel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compose::object_reference_crop;
use crate::error::{PipelineError, Result};

#[derive(Clone, Debug)]
pub struct VideoFrame {
    pub image: ImageRaster,
    /// Mask of the tracked instance; empty when it is absent.
    pub mask: Mask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoPair {
    pub frame_a: usize,
    pub frame_b: usize,
    pub level: MaskLevel,
    pub reference_crop: ImageRaster,
    /// Frame B with the augmented mask region zeroed.
    pub scene_input: ImageRaster,
    pub scene_mask: Mask,
    pub ground_truth: ImageRaster,
}

/// Picks two frames `a < b` containing the instance, takes the reference
/// from `a` and builds the masked scene input from `b` with a seeded coarse
/// mask level in 2..=5.
pub fn sample_video_pair(frames: &[VideoFrame], seed: u64, dilate_frac: f64) -> Result<VideoPair> {
    let present: Vec<usize> = (0..frames.len()).filter(|&i| !frames[i].mask.is_empty()).collect();
    if present.len() < 2 {
        return Err(PipelineError::InstanceMissing);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let i = rng.random_range(0..present.len());
    let mut j = rng.random_range(0..present.len() - 1);
    if j >= i {
        j += 1;
    }
    let (a, b) = (present[i.min(j)], present[i.max(j)]);
    let level = MaskLevel::new(rng.random_range(2..=5))?;

    let fa = &frames[a];
    let fb = &frames[b];
    let reference_crop = object_reference_crop(&fa.image, &fa.mask)?;
    let scene_mask = augment_mask(&fb.mask, level, dilate_frac)?;
    let scene_input = mask_scene(&fb.image, &scene_mask)?;
    Ok(VideoPair {
        frame_a: a,
        frame_b: b,
        level,
        reference_crop,
        scene_input,
        scene_mask,
        ground_truth: fb.image.clone(),
    })
}
