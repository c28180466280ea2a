//! The compositor's conditioning bundle, control-map combination, condition
//! dropping and classifier-free guidance.

use std::fs;
use std::path::Path;

use ndarray::ArrayD;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::{BBox, Location25D};
use crate::codec;
use crate::depth::DepthMap;
use crate::detail::HFMap;
use crate::error::{Error, Result};
use crate::fusion::{FusionMode, FusionResult};
use crate::geometry::{self, CropSpec};
use crate::mask::{Mask, MaskKind};
use crate::raster::{FloatRaster, ImageRaster, Raster};
use crate::seed::derive_seed;

pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_GUIDANCE_SCALE: f64 = 5.0;
pub const DEFAULT_P_ID: f64 = 0.5;
pub const DEFAULT_P_CTRL: f64 = 0.3;

pub const MASKED_SCENE_FILE: &str = "masked_scene.png";
pub const COLLAGE_FILE: &str = "collage.png";
pub const FUSED_DEPTH_FILE: &str = "fused_depth.pfm";
pub const REFERENCE_FILE: &str = "reference.png";
pub const OBJECT_DEPTH_FILE: &str = "object_depth.pfm";
pub const OBJECT_MASK_FILE: &str = "object_mask.png";
pub const SCENE_MASK_FILE: &str = "scene_mask.png";
pub const META_FILE: &str = "meta.json";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dropped {
    pub id: bool,
    pub detail: bool,
    pub depth: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub bundle_id: u64,
    pub lambda: f64,
    pub guidance_scale: f64,
    pub mode: FusionMode,
    pub dropped: Dropped,
    /// Placement in the source scene frame.
    pub location: Location25D,
    /// Placement box inside the bundle frame.
    pub placed_bbox: BBox,
    pub source_size: (u32, u32),
    pub crop: Option<CropSpec>,
    pub scene_mask_kind: MaskKind,
}

/// Everything the compositor receives for one generation.
///
/// Besides the scene, collage, fused depth and reference, the bundle carries
/// the placed object's own depth and footprint so a backend can resolve
/// occlusion without re-running fusion.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningBundle {
    pub masked_scene: ImageRaster,
    pub collage: ImageRaster,
    pub fused_depth: DepthMap,
    pub reference_crop: ImageRaster,
    pub object_depth: DepthMap,
    pub object_mask: Mask,
    pub scene_mask: Mask,
    pub meta: BundleMeta,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BundleParams {
    pub bundle_id: u64,
    pub lambda: f64,
    pub guidance_scale: f64,
    pub mode: FusionMode,
    pub location: Location25D,
    /// `(ratio, target resolution)` for the square zoom-in crop; `None` keeps the source frame.
    pub zoom: Option<(f64, u32)>,
}

impl BundleParams {
    pub fn new(location: Location25D, mode: FusionMode) -> Self {
        Self {
            bundle_id: 0,
            lambda: DEFAULT_LAMBDA,
            guidance_scale: DEFAULT_GUIDANCE_SCALE,
            mode,
            location,
            zoom: Some((geometry::DEFAULT_ZOOM_RATIO, geometry::DEFAULT_TARGET_RESOLUTION)),
        }
    }
}

fn all_zero<T: crate::raster::Sample>(r: &Raster<T>) -> bool {
    r.data().iter().all(|v| *v == T::default())
}

/// Zeroes every channel of the pixels set in `mask`.
pub fn mask_scene(scene: &ImageRaster, mask: &Mask) -> Result<ImageRaster> {
    scene.same_dims(mask.raster())?;
    Raster::from_fn(scene.width(), scene.height(), scene.channels(), |x, y, c| {
        if mask.is_set(x, y) {
            0
        } else {
            scene.get(x, y, c)
        }
    })
}

fn check_scalar(what: &'static str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::OutOfRange { what, value: v });
    }
    Ok(())
}

/// Builds a bundle from a scene, its fusion result, the HF collage and the reference crop.
pub fn assemble_bundle(
    scene: &ImageRaster,
    fusion: &FusionResult,
    hf_collage: &ImageRaster,
    ref_crop: &ImageRaster,
    params: &BundleParams,
) -> Result<ConditioningBundle> {
    scene.same_dims(fusion.fused_depth.raster())?;
    scene.same_dims(hf_collage)?;
    if ref_crop.width() != ref_crop.height() {
        return Err(Error::DimensionMismatch {
            expected: (ref_crop.width(), ref_crop.width()),
            actual: ref_crop.dims(),
        });
    }
    check_scalar("lambda", params.lambda)?;
    check_scalar("guidance scale", params.guidance_scale)?;
    let masked = mask_scene(scene, &fusion.scene_mask)?;
    let source_size = scene.dims();

    let (masked, collage, fused, object_depth, object_mask, scene_mask, placed_bbox, crop) = match params.zoom {
        None => (
            masked,
            hf_collage.clone(),
            fusion.fused_depth.clone(),
            fusion.object_depth.clone(),
            fusion.placed_obj_mask.clone(),
            fusion.scene_mask.clone(),
            params.location.bbox,
            None,
        ),
        Some((ratio, target)) => {
            let crop = geometry::zoom_in(source_size, &params.location.bbox, ratio, target)?;
            (
                crop.crop_image(&masked)?,
                crop.crop_image(hf_collage)?,
                // depths share the mask's sampling so visibility survives the crop
                crop.crop_depth_nearest(&fusion.fused_depth)?,
                crop.crop_depth_nearest(&fusion.object_depth)?,
                crop.crop_mask(&fusion.placed_obj_mask)?,
                crop.crop_mask(&fusion.scene_mask)?,
                crop.map_bbox(&params.location.bbox, source_size)?,
                Some(crop),
            )
        }
    };

    let bundle = ConditioningBundle {
        masked_scene: masked,
        collage,
        fused_depth: fused,
        reference_crop: ref_crop.clone(),
        object_depth,
        object_mask,
        meta: BundleMeta {
            bundle_id: params.bundle_id,
            lambda: params.lambda,
            guidance_scale: params.guidance_scale,
            mode: params.mode,
            dropped: Dropped::default(),
            location: params.location,
            placed_bbox,
            source_size,
            crop,
            scene_mask_kind: scene_mask.kind(),
        },
        scene_mask,
    };
    bundle.validate()?;
    Ok(bundle)
}

impl ConditioningBundle {
    pub fn dims(&self) -> (u32, u32) {
        self.masked_scene.dims()
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        let check = |name: &str, d: (u32, u32)| {
            if d != dims {
                Err(Error::InvalidBundle(format!("{name} is {d:?}, expected {dims:?}")))
            } else {
                Ok(())
            }
        };
        check("collage", self.collage.dims())?;
        check("fused depth", self.fused_depth.dims())?;
        check("object depth", self.object_depth.dims())?;
        check("object mask", self.object_mask.dims())?;
        check("scene mask", self.scene_mask.dims())?;
        if self.reference_crop.width() != self.reference_crop.height() {
            return Err(Error::InvalidBundle("reference crop must be square".into()));
        }
        if !self.object_mask.is_binary() || !self.scene_mask.is_binary() {
            return Err(Error::InvalidBundle("bundle masks must be binary".into()));
        }
        check_scalar("lambda", self.meta.lambda)?;
        check_scalar("guidance scale", self.meta.guidance_scale)?;
        let d = self.meta.dropped;
        if d.id && !all_zero(&self.reference_crop) {
            return Err(Error::InvalidBundle("id dropped but reference is not blank".into()));
        }
        if d.detail && !all_zero(&self.collage) {
            return Err(Error::InvalidBundle("detail dropped but collage is not blank".into()));
        }
        if d.depth && !all_zero(self.fused_depth.raster()) {
            return Err(Error::InvalidBundle("depth dropped but fused depth is not blank".into()));
        }
        Ok(())
    }

    /// Encoded bundle files, in directory order.
    pub fn to_files(&self) -> Result<Vec<(&'static str, Vec<u8>)>> {
        let mut meta = serde_json::to_vec_pretty(&self.meta)?;
        meta.push(b'\n');
        Ok(vec![
            (MASKED_SCENE_FILE, codec::encode_png(&self.masked_scene)?),
            (COLLAGE_FILE, codec::encode_png(&self.collage)?),
            (FUSED_DEPTH_FILE, codec::encode_pfm(&self.fused_depth)),
            (REFERENCE_FILE, codec::encode_png(&self.reference_crop)?),
            (OBJECT_DEPTH_FILE, codec::encode_pfm(&self.object_depth)),
            (OBJECT_MASK_FILE, codec::encode_png(&self.object_mask.to_image())?),
            (SCENE_MASK_FILE, codec::encode_png(&self.scene_mask.to_image())?),
            (META_FILE, meta),
        ])
    }

    /// Writes the bundle directory: four images, two PFMs and `meta.json`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for (name, bytes) in self.to_files()? {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: BundleMeta = serde_json::from_slice(&fs::read(dir.join(META_FILE))?)?;
        let bundle = Self {
            masked_scene: codec::read_png(dir.join(MASKED_SCENE_FILE))?,
            collage: codec::read_png(dir.join(COLLAGE_FILE))?,
            fused_depth: codec::read_pfm(dir.join(FUSED_DEPTH_FILE))?.map,
            reference_crop: codec::read_png(dir.join(REFERENCE_FILE))?,
            object_depth: codec::read_pfm(dir.join(OBJECT_DEPTH_FILE))?.map,
            object_mask: Mask::from_image(&codec::read_png(dir.join(OBJECT_MASK_FILE))?, MaskKind::Segmentation)?,
            scene_mask: Mask::from_image(&codec::read_png(dir.join(SCENE_MASK_FILE))?, meta.scene_mask_kind)?,
            meta,
        };
        bundle.validate()?;
        Ok(bundle)
    }
}

/// `detail + lambda * depth`, unclamped.
pub fn combine_control_maps(detail: &HFMap, depth: &DepthMap, lambda: f64) -> Result<FloatRaster> {
    detail.raster().same_dims(depth.raster())?;
    if !lambda.is_finite() {
        return Err(Error::OutOfRange { what: "lambda", value: lambda });
    }
    let data =
        detail.raster().data().iter().zip(depth.data()).map(|(&h, &d)| (h as f64 + lambda * d as f64) as f32).collect();
    FloatRaster::from_vec(depth.width(), depth.height(), data)
}

/// Seeded drop decisions for one bundle id: the id condition with `p_id`,
/// and detail and depth independently with `p_ctrl` each.
pub fn draw_drops(seed: u64, bundle_id: u64, p_id: f64, p_ctrl: f64) -> Result<Dropped> {
    for (what, p) in [("p_id", p_id), ("p_ctrl", p_ctrl)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfRange { what, value: p });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, bundle_id));
    let mut draw = |p: f64| rng.random::<f64>() < p;
    Ok(Dropped { id: draw(p_id), detail: draw(p_ctrl), depth: draw(p_ctrl) })
}

/// Blanks the conditions selected by [`draw_drops`]; already-dropped ones stay dropped.
pub fn drop_conditions(bundle: &ConditioningBundle, p_id: f64, p_ctrl: f64, seed: u64) -> Result<ConditioningBundle> {
    let draw = draw_drops(seed, bundle.meta.bundle_id, p_id, p_ctrl)?;
    let mut out = bundle.clone();
    let prev = bundle.meta.dropped;
    let dropped =
        Dropped { id: prev.id || draw.id, detail: prev.detail || draw.detail, depth: prev.depth || draw.depth };
    if dropped.id {
        out.reference_crop = bundle.reference_crop.map(|_| 0)?;
    }
    if dropped.detail {
        out.collage = bundle.collage.map(|_| 0)?;
    }
    if dropped.depth {
        out.fused_depth = DepthMap::new(bundle.fused_depth.raster().map(|_| 0.0)?)?;
    }
    out.meta.dropped = dropped;
    Ok(out)
}

/// Unconditional and conditional denoiser outputs plus the guidance scale.
#[derive(Clone, Debug, PartialEq)]
pub struct GuidanceArrays {
    eps_uncond: ArrayD<f64>,
    eps_cond: ArrayD<f64>,
    s: f64,
}

impl GuidanceArrays {
    pub fn new(eps_uncond: ArrayD<f64>, eps_cond: ArrayD<f64>, s: f64) -> Result<Self> {
        if eps_uncond.shape() != eps_cond.shape() {
            return Err(Error::ShapeMismatch(eps_uncond.shape().to_vec(), eps_cond.shape().to_vec()));
        }
        if let Some(index) = eps_uncond.iter().chain(eps_cond.iter()).position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample { index });
        }
        if !s.is_finite() {
            return Err(Error::OutOfRange { what: "guidance scale", value: s });
        }
        Ok(Self { eps_uncond, eps_cond, s })
    }

    pub fn scale(&self) -> f64 {
        self.s
    }
}

/// `eps_uncond + s * (eps_cond - eps_uncond)`, elementwise.
pub fn cfg_combine(g: &GuidanceArrays) -> ArrayD<f64> {
    let mut out = &g.eps_cond - &g.eps_uncond;
    out.mapv_inplace(|v| v * g.s);
    out + &g.eps_uncond
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::PixelRect;
    use crate::fusion::{fuse, FusionRequest};
    use ndarray::IxDyn;

    fn sample_fusion(w: u32, h: u32, bbox: BBox) -> (ImageRaster, FusionResult, Location25D) {
        let scene = ImageRaster::from_fn(w, h, 3, |x, y, c| ((x * 3 + y * 5 + c as u32 * 11) % 251) as u8).unwrap();
        let loc = Location25D::new(bbox, 0.7).unwrap();
        let req = FusionRequest::new(
            DepthMap::constant(w, h, 0.4).unwrap(),
            DepthMap::constant(4, 4, 0.5).unwrap(),
            Mask::from_fn(4, 4, MaskKind::Segmentation, |_, _| true).unwrap(),
            loc,
            FusionMode::Place,
        );
        (scene, fuse(&req).unwrap(), loc)
    }

    fn native(loc: Location25D) -> BundleParams {
        BundleParams { zoom: None, ..BundleParams::new(loc, FusionMode::Place) }
    }

    #[test]
    fn masked_scene_zeroes_exactly_the_box() {
        let bbox = BBox::from_pixels(4.0, 2.0, 12.0, 9.0, 16, 12).unwrap();
        let (scene, fusion, loc) = sample_fusion(16, 12, bbox);
        let b =
            assemble_bundle(&scene, &fusion, &scene, &ImageRaster::filled(8, 8, 3, 50).unwrap(), &native(loc)).unwrap();
        let rect = PixelRect { x0: 4, y0: 2, x1: 12, y1: 9 };
        for y in 0..12 {
            for x in 0..16 {
                if rect.contains(x, y) {
                    assert_eq!(b.masked_scene.pixel(x, y), &[0, 0, 0]);
                } else {
                    assert_eq!(b.masked_scene.pixel(x, y), scene.pixel(x, y));
                }
            }
        }
    }

    #[test]
    fn empty_mask_leaves_scene_intact() {
        let bbox = BBox::new(0.25, 0.25, 0.5, 0.5).unwrap();
        let (scene, mut fusion, loc) = sample_fusion(16, 16, bbox);
        fusion.scene_mask = Mask::empty(16, 16, MaskKind::Segmentation).unwrap();
        let b =
            assemble_bundle(&scene, &fusion, &scene, &ImageRaster::filled(4, 4, 3, 1).unwrap(), &native(loc)).unwrap();
        assert_eq!(b.masked_scene, scene);
    }

    #[test]
    fn zoomed_bundle_has_target_resolution() {
        let bbox = BBox::new(0.4, 0.4, 0.6, 0.6).unwrap();
        let (scene, fusion, loc) = sample_fusion(100, 80, bbox);
        let mut params = BundleParams::new(loc, FusionMode::Place);
        params.zoom = Some((2.0, 64));
        let b = assemble_bundle(&scene, &fusion, &scene, &ImageRaster::filled(4, 4, 3, 1).unwrap(), &params).unwrap();
        assert_eq!(b.dims(), (64, 64));
        assert_eq!(b.fused_depth.dims(), (64, 64));
        let crop = b.meta.crop.unwrap();
        assert_eq!(crop.side(), 40);
        let (cx, cy) = b.meta.placed_bbox.center();
        assert!((cx - 0.5).abs() < 1e-9 && (cy - 0.5).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let bbox = BBox::new(0.25, 0.25, 0.5, 0.5).unwrap();
        let (scene, fusion, loc) = sample_fusion(16, 16, bbox);
        let not_square = ImageRaster::filled(4, 5, 3, 1).unwrap();
        assert!(assemble_bundle(&scene, &fusion, &scene, &not_square, &native(loc)).is_err());
        let small = ImageRaster::filled(8, 8, 3, 1).unwrap();
        let sq = ImageRaster::filled(4, 4, 3, 1).unwrap();
        assert!(matches!(
            assemble_bundle(&small, &fusion, &small, &sq, &native(loc)),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut p = native(loc);
        p.lambda = -1.0;
        assert!(assemble_bundle(&scene, &fusion, &scene, &sq, &p).is_err());
    }

    #[test]
    fn directory_round_trip() {
        let bbox = BBox::new(0.3, 0.2, 0.7, 0.6).unwrap();
        let (scene, fusion, loc) = sample_fusion(40, 30, bbox);
        let mut params = BundleParams::new(loc, FusionMode::Place);
        params.zoom = Some((2.0, 32));
        let b = assemble_bundle(&scene, &fusion, &scene, &ImageRaster::filled(6, 6, 3, 90).unwrap(), &params).unwrap();
        let b = drop_conditions(&b, 1.0, 0.0, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        b.write_dir(dir.path()).unwrap();
        assert_eq!(ConditioningBundle::read_dir(dir.path()).unwrap(), b);
    }

    #[test]
    fn control_map_combination() {
        let detail = HFMap::new(FloatRaster::filled(3, 3, 1, 0.2).unwrap()).unwrap();
        let depth = DepthMap::constant(3, 3, 0.5).unwrap();
        assert_eq!(combine_control_maps(&detail, &depth, 0.0).unwrap(), *detail.raster());
        let sum = combine_control_maps(&detail, &depth, 1.0).unwrap();
        assert!(sum.data().iter().all(|&v| (v - 0.7).abs() < 1e-6));
        let zero = HFMap::new(FloatRaster::filled(3, 3, 1, 0.0).unwrap()).unwrap();
        let two = combine_control_maps(&zero, &depth, 2.0).unwrap();
        assert!(two.data().iter().all(|&v| v == 1.0));
        let other = DepthMap::constant(2, 3, 0.5).unwrap();
        assert!(combine_control_maps(&detail, &other, 1.0).is_err());
    }

    #[test]
    fn control_map_linear_in_lambda() {
        let detail = HFMap::new(FloatRaster::from_fn(4, 4, 1, |x, y, _| (x * y) as f32 / 9.0).unwrap()).unwrap();
        let depth = DepthMap::from_fn(4, 4, |x, y| (x + y) as f32 / 6.0).unwrap();
        let depth_half = DepthMap::from_fn(4, 4, |x, y| (x + y) as f32 / 12.0).unwrap();
        let a = combine_control_maps(&detail, &depth, 1.0).unwrap();
        let b = combine_control_maps(&detail, &depth_half, 2.0).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-6);
        }
        let l1 = combine_control_maps(&detail, &depth, 0.5).unwrap();
        let l3 = combine_control_maps(&detail, &depth, 1.5).unwrap();
        for ((p, q), m) in l1.data().iter().zip(l3.data()).zip(a.data()) {
            assert!(((p + q) / 2.0 - m).abs() < 1e-6);
        }
    }

    #[test]
    fn drop_extremes() {
        let bbox = BBox::new(0.25, 0.25, 0.5, 0.5).unwrap();
        let (scene, fusion, loc) = sample_fusion(16, 16, bbox);
        let b =
            assemble_bundle(&scene, &fusion, &scene, &ImageRaster::filled(4, 4, 3, 1).unwrap(), &native(loc)).unwrap();
        assert_eq!(drop_conditions(&b, 0.0, 0.0, 11).unwrap(), b);
        for seed in 0..20 {
            let d = drop_conditions(&b, 1.0, 0.0, seed).unwrap();
            assert!(d.meta.dropped.id && !d.meta.dropped.detail && !d.meta.dropped.depth);
            assert!(d.reference_crop.data().iter().all(|&v| v == 0));
            d.validate().unwrap();
        }
        assert_eq!(drop_conditions(&b, 0.5, 0.3, 9).unwrap(), drop_conditions(&b, 0.5, 0.3, 9).unwrap());
        assert!(drop_conditions(&b, 1.5, 0.3, 9).is_err());
    }

    #[test]
    fn cfg_identities() {
        let uc = ArrayD::from_shape_vec(IxDyn(&[2, 2]), vec![0.2, -1.0, 3.0, 0.0]).unwrap();
        let c = ArrayD::from_shape_vec(IxDyn(&[2, 2]), vec![0.6, 2.0, -3.0, 1.0]).unwrap();
        let one = cfg_combine(&GuidanceArrays::new(uc.clone(), c.clone(), 1.0).unwrap());
        let zero = cfg_combine(&GuidanceArrays::new(uc.clone(), c.clone(), 0.0).unwrap());
        for i in 0..4 {
            assert!((one.as_slice().unwrap()[i] - c.as_slice().unwrap()[i]).abs() < 1e-12);
            assert!((zero.as_slice().unwrap()[i] - uc.as_slice().unwrap()[i]).abs() < 1e-12);
        }
        let two = cfg_combine(&GuidanceArrays::new(uc, c, 2.0).unwrap());
        assert!((two[[0, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cfg_shape_mismatch() {
        let a = ArrayD::zeros(IxDyn(&[2, 3]));
        let b = ArrayD::zeros(IxDyn(&[3, 2]));
        assert!(matches!(GuidanceArrays::new(a.clone(), b, 1.0), Err(Error::ShapeMismatch(..))));
        let mut nan = a.clone();
        nan[[0, 0]] = f64::NAN;
        assert!(GuidanceArrays::new(a, nan, 1.0).is_err());
    }
}
