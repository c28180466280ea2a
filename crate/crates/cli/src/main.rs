use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};
use forge_cli::api::bundle_hash;
use forge_cli::config::Config;
use forge_cli::service::{self, AppState};
use forge_clients::Backends;
use forge_core::codec::{read_png, write_png};
use forge_core::detail::DEFAULT_DILATE_FRAC;
use forge_core::geometry::{DEFAULT_TARGET_RESOLUTION, DEFAULT_ZOOM_RATIO};
use forge_core::relations::Thresholds;
use forge_core::{BBox, FusionMode, Location25D, Mask, MaskKind, MaskLevel, OcclusionRule};
use forge_pipeline::coco::CocoSource;
use forge_pipeline::compose::{compose_to_dir, ComposeJob, ComposeParams, Placement, BUNDLE_DIR, OUTPUT_FILE};
use forge_pipeline::dataset::{build_dataset, read_records, BuildConfig, DEFAULT_MIN_MARGIN, RECORDS_FILE};
use forge_pipeline::eval::run_eval;
use forge_pipeline::fixtures;
use forge_pipeline::ops::{self, FuseParams, MaskParams};
use forge_pipeline::store::{hash_tree, sha256_hex, verify_outputs, write_atomic, Manifest, MANIFEST_FILE};
use forge_pipeline::video::{sample_video_pair, VideoFrame};
use serde_json::json;

/// Status line on stdout. A closed pipe (e.g. `| head`) is not an error.
macro_rules! say {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "forge",
    version,
    about = "Depth-aware object compositing: datasets, conditioning maps and a local service"
)]
struct Cli {
    /// TOML configuration file (backends, default seed, service settings).
    #[arg(long, global = true, env = "FORGE_CONFIG", value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every random choice. Overrides the configuration file; defaults to 0.
    #[arg(long, global = true, env = "FORGE_SEED")]
    seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a counterfactual placement dataset from COCO-style annotations.
    BuildDataset(BuildDatasetArgs),
    /// Rescale an object's depth to a target depth and fuse it into a background depth map.
    FuseDepth(FuseDepthArgs),
    /// High-frequency detail map of an object under a coarsened mask (PFM).
    DetailMap(DetailMapArgs),
    /// Stitch a detail map into a scene box as a gray collage (PNG).
    Collage(CollageArgs),
    /// Coarsen a segmentation mask to level 1 (exact) through 5 (box).
    AugmentMask(AugmentMaskArgs),
    /// Run the full placement pipeline for one background and reference object.
    Compose(ComposeArgs),
    /// Evaluate the locate backend on a dataset built by build-dataset.
    EvalMllm(EvalArgs),
    /// Serve the /api endpoints, the backend protocol and optional studio assets.
    Serve(ServeArgs),
    /// Sample a reference/target frame pair from a short clip.
    SampleVideoPair(VideoArgs),
    /// Write the bundled test fixtures.
    #[command(hide = true)]
    GenFixtures(OutDirArgs),
    /// Answer one backend request on stdin/stdout with the mock backends.
    #[command(hide = true)]
    MockBackend,
    /// Check a run's outputs against its manifest.
    #[command(hide = true)]
    Verify(VerifyArgs),
}

#[derive(Args)]
struct BuildDatasetArgs {
    /// COCO-style annotation JSON.
    #[arg(long, value_name = "FILE")]
    coco: PathBuf,
    /// Directory holding the images named in the annotations.
    #[arg(long, value_name = "DIR")]
    images: PathBuf,
    /// Directory of `{image stem}.pfm` depth maps; missing maps come from the depth backend.
    #[arg(long, value_name = "DIR")]
    depth_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Number of records.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Fewest objects per record (target plus anchors), 2..=4.
    #[arg(long, default_value_t = 2)]
    k_min: usize,
    /// Most objects per record, 2..=4.
    #[arg(long, default_value_t = 4)]
    k_max: usize,
    /// Minimum distance of each relation from a predicate boundary.
    #[arg(long, default_value_t = DEFAULT_MIN_MARGIN)]
    min_margin: f64,
    /// Depth difference that makes a relation "in front of" / "behind".
    #[arg(long, default_value_t = Thresholds::default().tau_d)]
    tau_d: f64,
    /// Center offset below which objects count as "near".
    #[arg(long, default_value_t = Thresholds::default().tau_xy)]
    tau_xy: f64,
    /// Worker threads (0 = all cores). Output does not depend on this.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

fn parse_bbox(s: &str) -> Result<BBox, String> {
    let v: Vec<f64> =
        s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}"))).collect::<Result<_, _>>()?;
    let [x1, y1, x2, y2] = v[..] else {
        return Err(format!("expected x1,y1,x2,y2 but got {} values", v.len()));
    };
    BBox::new(x1, y1, x2, y2).map_err(|e| e.to_string())
}

fn parse_level(s: &str) -> Result<MaskLevel, String> {
    let n: u8 = s.parse().map_err(|e| format!("{s:?}: {e}"))?;
    MaskLevel::new(n).map_err(|e| e.to_string())
}

#[derive(Args)]
struct FuseDepthArgs {
    /// Background depth map (PFM, larger is nearer).
    #[arg(long, value_name = "FILE")]
    bg_depth: PathBuf,
    /// Object depth map (PFM) in the object's own frame.
    #[arg(long, value_name = "FILE")]
    obj_depth: PathBuf,
    /// Object mask (PNG) in the object's own frame.
    #[arg(long, value_name = "FILE")]
    obj_mask: PathBuf,
    /// Target box as normalized x1,y1,x2,y2.
    #[arg(long, value_parser = parse_bbox, allow_hyphen_values = true)]
    bbox: BBox,
    /// Target depth in [0, 1].
    #[arg(long)]
    depth: f64,
    /// place, replace, id_transfer or inpaint.
    #[arg(long, default_value = "place")]
    mode: FusionMode,
    /// Scale of the object's relative depth variation.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// nearest_wins or overwrite.
    #[arg(long, default_value = "nearest_wins")]
    occlusion: OcclusionRule,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct MaskArgs {
    /// Mask coarseness, 1 (exact) to 5 (bounding box).
    #[arg(long, default_value = "1", value_parser = parse_level)]
    level: MaskLevel,
    /// Dilation radius as a fraction of the longer mask side.
    #[arg(long, default_value_t = DEFAULT_DILATE_FRAC)]
    dilate_frac: f64,
}

impl MaskArgs {
    fn params(&self) -> MaskParams {
        MaskParams { level: self.level, dilate_frac: self.dilate_frac }
    }
}

#[derive(Args)]
struct DetailMapArgs {
    /// Object image (PNG).
    #[arg(long, value_name = "FILE")]
    image: PathBuf,
    /// Object segmentation mask (PNG).
    #[arg(long, value_name = "FILE")]
    mask: PathBuf,
    #[command(flatten)]
    mask_args: MaskArgs,
    /// Output PFM.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct CollageArgs {
    /// Scene image (PNG).
    #[arg(long, value_name = "FILE")]
    scene: PathBuf,
    /// Detail map (PFM) from detail-map.
    #[arg(long, value_name = "FILE")]
    hf: PathBuf,
    /// Target box as normalized x1,y1,x2,y2.
    #[arg(long, value_parser = parse_bbox, allow_hyphen_values = true)]
    bbox: BBox,
    /// Output PNG.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentMaskArgs {
    /// Segmentation mask (PNG).
    #[arg(long, value_name = "FILE")]
    mask: PathBuf,
    #[command(flatten)]
    mask_args: MaskArgs,
    /// Output PNG.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("placement").required(true).args(["instruction", "bbox"])))]
struct ComposeArgs {
    /// Background image (PNG).
    #[arg(long, value_name = "FILE")]
    background: PathBuf,
    /// Reference object image (PNG; an alpha channel is used as the mask).
    #[arg(long, value_name = "FILE")]
    reference: PathBuf,
    /// Placement instruction, e.g. "Place the dog to the left of the car."
    #[arg(long)]
    instruction: Option<String>,
    /// Explicit target box as normalized x1,y1,x2,y2 (use with --depth).
    #[arg(long, value_parser = parse_bbox, requires = "depth", allow_hyphen_values = true)]
    bbox: Option<BBox>,
    /// Explicit target depth in [0, 1].
    #[arg(long, requires = "bbox")]
    depth: Option<f64>,
    /// Background depth map (PFM) to use instead of the depth backend.
    #[arg(long, value_name = "FILE")]
    bg_depth: Option<PathBuf>,
    /// Reference depth map (PFM) to use instead of the depth backend.
    #[arg(long, value_name = "FILE")]
    ref_depth: Option<PathBuf>,
    /// JSON list of named scene objects `[{"id", "name", "bbox"}]` for the locator.
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    /// place, replace, id_transfer or inpaint.
    #[arg(long, default_value = "place")]
    mode: FusionMode,
    /// Mask coarseness for the detail map, 1 to 5.
    #[arg(long, default_value = "1", value_parser = parse_level)]
    mask_level: MaskLevel,
    /// Weight of depth relative to detail in the control signal.
    #[arg(long, default_value_t = forge_core::conditioning::DEFAULT_LAMBDA)]
    lambda: f64,
    /// Classifier-free guidance scale.
    #[arg(long, default_value_t = forge_core::conditioning::DEFAULT_GUIDANCE_SCALE)]
    guidance_scale: f64,
    /// Scale of the object's relative depth variation.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// nearest_wins or overwrite.
    #[arg(long, default_value = "nearest_wins")]
    occlusion: OcclusionRule,
    /// Side of the zoom-in square relative to the box's longer side.
    #[arg(long, default_value_t = DEFAULT_ZOOM_RATIO)]
    zoom_ratio: f64,
    /// Working resolution of the conditioning bundle.
    #[arg(long, default_value_t = DEFAULT_TARGET_RESOLUTION)]
    resolution: u32,
    /// Dilation radius as a fraction of the longer mask side.
    #[arg(long, default_value_t = DEFAULT_DILATE_FRAC)]
    dilate_frac: f64,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset directory containing records.jsonl.
    #[arg(long, value_name = "DIR")]
    dataset: PathBuf,
    /// Report JSON to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// Address to listen on (defaults to the configuration, then 127.0.0.1).
    #[arg(long)]
    host: Option<std::net::IpAddr>,
    /// Port; 0 picks a free one.
    #[arg(long)]
    port: Option<u16>,
    /// Directory of static studio assets served under /studio.
    #[arg(long, value_name = "DIR")]
    studio_dir: Option<PathBuf>,
}

#[derive(Args)]
struct VideoArgs {
    /// Directory with frame_{i}.png and mask_{i}.png, counting from 0.
    #[arg(long, value_name = "DIR")]
    frames: PathBuf,
    /// Dilation radius as a fraction of the longer mask side.
    #[arg(long, default_value_t = DEFAULT_DILATE_FRAC)]
    dilate_frac: f64,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct OutDirArgs {
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run directory with manifest.json, or a `*.manifest.json` next to a single output file.
    path: PathBuf,
}

struct Ctx {
    config: Config,
    seed: u64,
}

impl Ctx {
    fn backends(&self) -> Result<Backends> {
        Ok(self.config.backends()?)
    }
}

fn manifest_path_for(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Writes one output file plus `{out}.manifest.json`.
fn write_single(
    out: &Path,
    bytes: &[u8],
    command: &str,
    seed: u64,
    config: serde_json::Value,
    inputs: &[&Path],
) -> Result<()> {
    write_atomic(out, bytes)?;
    let mut m = Manifest::new(command, seed, config, Vec::new());
    for p in inputs {
        m.add_input(p)?;
    }
    m.outputs.insert(out.file_name().unwrap_or_default().to_string_lossy().into_owned(), sha256_hex(bytes));
    m.write_checked(&manifest_path_for(out))?;
    Ok(())
}

/// Writes `manifest.json` for everything already under `dir`.
fn write_dir_manifest(dir: &Path, mut m: Manifest, inputs: &[&Path]) -> Result<()> {
    for p in inputs {
        m.add_input(p)?;
    }
    m.outputs = hash_tree(dir)?;
    m.write_checked(&dir.join(MANIFEST_FILE))?;
    Ok(())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn build_dataset_cmd(ctx: &Ctx, a: &BuildDatasetArgs) -> Result<()> {
    let backends = ctx.backends()?;
    let source = CocoSource::open(&a.coco, Some(&a.images), a.depth_dir.as_deref())?;
    let scenes = source.load_scenes()?;
    let cfg = BuildConfig {
        n: a.n,
        seed: ctx.seed,
        k_min: a.k_min,
        k_max: a.k_max,
        thresholds: Thresholds { tau_d: a.tau_d, tau_xy: a.tau_xy },
        min_margin: a.min_margin,
        ..BuildConfig::default()
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.jobs).build()?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let records = pool.install(|| build_dataset(&scenes, &backends, &cfg, &a.out))?;
    let config = json!({
        "coco": a.coco,
        "images": a.images,
        "depth_dir": a.depth_dir,
        "build": cfg,
    });
    write_dir_manifest(
        &a.out,
        Manifest::new("build-dataset", ctx.seed, config, backends.endpoints.clone()),
        &[&a.coco],
    )?;
    say!("wrote {} records from {} scenes to {}", records.len(), scenes.len(), a.out.join(RECORDS_FILE).display());
    Ok(())
}

fn fuse_depth_cmd(ctx: &Ctx, a: &FuseDepthArgs) -> Result<()> {
    let params = FuseParams {
        location: Location25D::new(a.bbox, a.depth)?,
        mode: a.mode,
        alpha: a.alpha,
        occlusion: a.occlusion,
    };
    let art = ops::fuse_depth(&read(&a.bg_depth)?, &read(&a.obj_depth)?, &read(&a.obj_mask)?, &params)?;
    for (name, bytes) in [
        ("fused_depth.pfm", &art.fused_depth),
        ("object_depth.pfm", &art.object_depth),
        ("scene_mask.png", &art.scene_mask),
        ("placed_mask.png", &art.placed_mask),
    ] {
        write_atomic(&a.out.join(name), bytes)?;
    }
    let config = json!({ "bg_depth": a.bg_depth, "obj_depth": a.obj_depth, "obj_mask": a.obj_mask, "fuse": params });
    write_dir_manifest(
        &a.out,
        Manifest::new("fuse-depth", ctx.seed, config, Vec::new()),
        &[&a.bg_depth, &a.obj_depth, &a.obj_mask],
    )?;
    say!("wrote fused depth to {}", a.out.display());
    Ok(())
}

fn detail_map_cmd(ctx: &Ctx, a: &DetailMapArgs) -> Result<()> {
    let params = a.mask_args.params();
    let hf = ops::detail_map(&read(&a.image)?, &read(&a.mask)?, &params)?;
    let config = json!({ "image": a.image, "mask": a.mask, "mask_params": params });
    write_single(&a.out, &hf, "detail-map", ctx.seed, config, &[&a.image, &a.mask])
}

fn collage_cmd(ctx: &Ctx, a: &CollageArgs) -> Result<()> {
    let out = ops::collage(&read(&a.scene)?, &read(&a.hf)?, &a.bbox)?;
    let config = json!({ "scene": a.scene, "hf": a.hf, "bbox": a.bbox });
    write_single(&a.out, &out, "collage", ctx.seed, config, &[&a.scene, &a.hf])
}

fn augment_mask_cmd(ctx: &Ctx, a: &AugmentMaskArgs) -> Result<()> {
    let params = a.mask_args.params();
    let out = ops::augment(&read(&a.mask)?, &params)?;
    let config = json!({ "mask": a.mask, "mask_params": params });
    write_single(&a.out, &out, "augment-mask", ctx.seed, config, &[&a.mask])
}

fn compose_cmd(ctx: &Ctx, a: &ComposeArgs) -> Result<()> {
    let placement = match (&a.instruction, a.bbox, a.depth) {
        (Some(text), None, None) => Placement::Instruction(text.clone()),
        (None, Some(bbox), Some(d)) => Placement::Location(Location25D::new(bbox, d)?),
        _ => bail!("give either --instruction or both --bbox and --depth"),
    };
    let params = ComposeParams {
        placement,
        mode: a.mode,
        mask_level: a.mask_level,
        lambda: a.lambda,
        guidance_scale: a.guidance_scale,
        alpha: a.alpha,
        occlusion: a.occlusion,
        zoom_ratio: a.zoom_ratio,
        resolution: a.resolution,
        dilate_frac: a.dilate_frac,
        seed: ctx.seed,
    };
    let job = ComposeJob {
        background: a.background.clone(),
        reference: a.reference.clone(),
        bg_depth: a.bg_depth.clone(),
        ref_depth: a.ref_depth.clone(),
        annotations: a.annotations.clone(),
        params,
    };
    let backends = ctx.backends()?;
    let out = compose_to_dir(&job, &backends, &a.out)
        .with_context(|| format!("compose failed; partial outputs and manifest in {}", a.out.display()))?;
    let bundle_dir = a.out.join(BUNDLE_DIR);
    let files = out.bundle.to_files()?.into_iter().map(|(n, b)| (n.to_string(), b)).collect();
    let b = out.location.bbox;
    say!("location [{:.4}, {:.4}, {:.4}, {:.4}] depth {:.4}", b.x1(), b.y1(), b.x2(), b.y2(), out.location.depth());
    say!("bundle {} (hash {})", bundle_dir.display(), bundle_hash(&files));
    say!("output {}", a.out.join(OUTPUT_FILE).display());
    Ok(())
}

fn eval_cmd(ctx: &Ctx, a: &EvalArgs) -> Result<()> {
    let backends = ctx.backends()?;
    let records_path = a.dataset.join(RECORDS_FILE);
    let records = read_records(&records_path)?;
    let report =
        run_eval(&records, &a.dataset, backends.locate.as_ref(), backends.depth.as_ref(), &Thresholds::default())?;
    let mut bytes = serde_json::to_vec_pretty(&report)?;
    bytes.push(b'\n');
    let config = json!({ "dataset": a.dataset });
    let mut m = Manifest::new("eval-mllm", ctx.seed, config, backends.endpoints.clone());
    m.add_input(&records_path)?;
    write_atomic(&a.out, &bytes)?;
    m.outputs.insert(a.out.file_name().unwrap_or_default().to_string_lossy().into_owned(), sha256_hex(&bytes));
    m.write_checked(&manifest_path_for(&a.out))?;
    let s = report.metrics;
    say!(
        "n {}  iou {:.4}  bbox_mse {:.4}  depth_mse {:.4}  relations satisfied {:.1}%",
        s.n,
        s.iou_mean,
        s.bbox_mse,
        s.depth_mse,
        report.relation_satisfaction_rate * 100.0
    );
    Ok(())
}

fn serve_cmd(ctx: &Ctx, a: &ServeArgs) -> Result<()> {
    let serve = &ctx.config.serve;
    let addr = SocketAddr::new(a.host.unwrap_or(serve.host), a.port.unwrap_or(serve.port));
    // blocking clients are built and dropped outside the async runtime
    let state = Arc::new(AppState {
        backends: ctx.backends()?,
        studio_dir: a.studio_dir.clone().or_else(|| serve.studio_dir.clone()),
    });
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let app = service::router(state.clone());
    let served: Result<()> = rt.block_on(async move {
        let listener = service::bind(addr).await?;
        let local = listener.local_addr()?;
        say!("listening on http://{local}");
        std::io::stdout().flush()?;
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    });
    drop(rt);
    drop(state);
    served
}

fn video_cmd(ctx: &Ctx, a: &VideoArgs) -> Result<()> {
    let mut frames = Vec::new();
    let mut inputs = Vec::new();
    loop {
        let (img, mask) =
            (a.frames.join(format!("frame_{}.png", frames.len())), a.frames.join(format!("mask_{}.png", frames.len())));
        if !img.exists() {
            break;
        }
        frames.push(VideoFrame {
            image: read_png(&img)?,
            mask: Mask::from_image(&read_png(&mask)?, MaskKind::Segmentation)?,
        });
        inputs.push(img);
        inputs.push(mask);
    }
    let pair = sample_video_pair(&frames, ctx.seed, a.dilate_frac)?;
    std::fs::create_dir_all(&a.out)?;
    write_png(&pair.reference_crop, a.out.join("reference.png"))?;
    write_png(&pair.scene_input, a.out.join("scene_input.png"))?;
    write_png(&pair.scene_mask.to_image(), a.out.join("scene_mask.png"))?;
    write_png(&pair.ground_truth, a.out.join("ground_truth.png"))?;
    let mut info = serde_json::to_vec_pretty(&json!({
        "frame_a": pair.frame_a,
        "frame_b": pair.frame_b,
        "level": pair.level,
    }))?;
    info.push(b'\n');
    write_atomic(&a.out.join("pair.json"), &info)?;
    let config = json!({ "frames": a.frames, "dilate_frac": a.dilate_frac });
    let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    write_dir_manifest(&a.out, Manifest::new("sample-video-pair", ctx.seed, config, Vec::new()), &inputs)?;
    say!("frames {} -> {} at mask level {}", pair.frame_a, pair.frame_b, pair.level.get());
    Ok(())
}

fn verify_cmd(a: &VerifyArgs) -> Result<()> {
    let (manifest_path, dir) = if a.path.is_dir() {
        (a.path.join(MANIFEST_FILE), a.path.clone())
    } else {
        (a.path.clone(), a.path.parent().map(Path::to_path_buf).unwrap_or_default())
    };
    let m = Manifest::read(&manifest_path)?;
    let bad = verify_outputs(&dir, &m);
    if !bad.is_empty() {
        bail!("{} output(s) differ from {}: {}", bad.len(), manifest_path.display(), bad.join(", "));
    }
    say!("{} outputs match {}", m.outputs.len(), manifest_path.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    let ctx = Ctx { config, seed };
    match &cli.command {
        Command::BuildDataset(a) => build_dataset_cmd(&ctx, a),
        Command::FuseDepth(a) => fuse_depth_cmd(&ctx, a),
        Command::DetailMap(a) => detail_map_cmd(&ctx, a),
        Command::Collage(a) => collage_cmd(&ctx, a),
        Command::AugmentMask(a) => augment_mask_cmd(&ctx, a),
        Command::Compose(a) => compose_cmd(&ctx, a),
        Command::EvalMllm(a) => eval_cmd(&ctx, a),
        Command::Serve(a) => serve_cmd(&ctx, a),
        Command::SampleVideoPair(a) => video_cmd(&ctx, a),
        Command::GenFixtures(a) => {
            fixtures::write_all(&a.out)?;
            say!("wrote fixtures to {}", a.out.display());
            Ok(())
        }
        Command::MockBackend => {
            forge_clients::subprocess::serve_one(&Backends::mock(), std::io::stdin().lock(), std::io::stdout().lock())?;
            Ok(())
        }
        Command::Verify(a) => verify_cmd(a),
    }
}
