//! `defocus`: synthetic datasets, blur rendering, metric depth solving,
//! evaluation, sweeps, and gradient checking from one binary.
//!
//! Exit codes: 0 success, 1 domain/runtime error, 2 usage error.
//! Diagnostics go to stderr; machine output goes to files or stdout.

mod manifest;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use defocus_core::eval::{self, ExtrinsicsJson, Intrinsics, RigidTransform};
use defocus_core::grad::finite_diff_check;
use defocus_core::image::{DepthMap, ImageBuffer};
use defocus_core::io;
use defocus_core::optics::{CameraConfig, PsfModel};
use defocus_core::prior::{renormalize_latent, DepthParameterization, GridPrior, PixelPrior};
use defocus_core::render::{normalize_capture, render_blur, Capture, CapturePair};
use defocus_core::scenes::{
    aperture_sweep_experiment, make_scene, simulate_captures, SceneKind, SceneSpec, TextureKind,
};
use defocus_core::solver::{solve, AffineScale, SolveConfig};

use manifest::write_manifest;

#[derive(Parser)]
#[command(name = "defocus", version, about = "Metric depth from defocus blur")]
struct Cli {
    /// Cap internal parallelism (default: DEFOCUS_THREADS or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory (AIF, depth, blurred captures).
    Synth(SynthArgs),
    /// Render a defocused image from an AIF image and a depth map.
    Render(RenderArgs),
    /// Recover metric depth from an AIF/blurred capture pair.
    Solve(SolveArgs),
    /// Depth metrics, optionally after calibrated alignment.
    Eval(EvalArgs),
    /// Aperture sweep: solve at several F-stops and tabulate RMSE.
    Sweep(SweepArgs),
    /// Finite-difference check of the analytic depth gradient.
    Gradcheck(GradcheckArgs),
    /// Reproject a predicted depth map into another camera frame.
    Align(AlignArgs),
}

#[derive(Args, Clone, serde::Serialize)]
struct CamArgs {
    /// Camera JSON file; overrides the individual flags below.
    #[arg(long)]
    cam: Option<PathBuf>,
    /// Focal length in millimeters.
    #[arg(long, default_value_t = 50.0)]
    focal_mm: f64,
    /// Focus distance in meters.
    #[arg(long, default_value_t = 0.8)]
    focus_m: f64,
    /// Base F-stop used for exposure balancing.
    #[arg(long, default_value_t = 8.0)]
    base_n: f64,
    /// Pixel pitch in micrometers at the working resolution.
    #[arg(long, default_value_t = 31.969)]
    pitch_um: f64,
    /// Exposure time in seconds at the base F-stop.
    #[arg(long, default_value_t = 0.01)]
    exposure_s: f64,
    /// Odd PSF window extent in pixels.
    #[arg(long, default_value_t = 63)]
    window: usize,
}

impl CamArgs {
    fn build(&self) -> Result<CameraConfig> {
        let cfg = match &self.cam {
            Some(path) => read_json(path)?,
            None => CameraConfig {
                focal_length_m: self.focal_mm * 1e-3,
                focus_distance_m: self.focus_m,
                f_stop: self.base_n,
                pixel_pitch_m: self.pitch_um * 1e-6,
                exposure_s: self.exposure_s,
                max_window_px: self.window,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
enum SceneKindArg {
    Plane,
    Staircase,
    Slant,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
enum TextureArg {
    Checker,
    Noise,
}

#[derive(Args, Clone, serde::Serialize)]
struct SceneArgs {
    #[arg(long, value_enum, default_value_t = SceneKindArg::Plane)]
    kind: SceneKindArg,
    /// Plane depth in meters (kind = plane).
    #[arg(long, default_value_t = 2.0)]
    depth: f64,
    /// Staircase band depths in meters (kind = staircase).
    #[arg(long, value_delimiter = ',', default_value = "1.6,2.4")]
    depths: Vec<f64>,
    /// Staircase band width fractions, summing to 1.
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.5")]
    widths: Vec<f64>,
    /// Near-edge depth in meters (kind = slant).
    #[arg(long, default_value_t = 1.6)]
    offset: f64,
    /// Depth increase across the image in meters (kind = slant).
    #[arg(long, default_value_t = 1.0)]
    slope: f64,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, value_enum, default_value_t = TextureArg::Noise)]
    texture: TextureArg,
    /// Texture cell size in pixels.
    #[arg(long, default_value_t = 4)]
    texture_scale: usize,
    #[arg(long, default_value_t = 0.8)]
    contrast: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SceneArgs {
    fn build(&self) -> SceneSpec {
        let kind = match self.kind {
            SceneKindArg::Plane => SceneKind::TexturedPlane {
                depth_m: self.depth,
            },
            SceneKindArg::Staircase => SceneKind::Staircase {
                depths: self.depths.clone(),
                widths: self.widths.clone(),
            },
            SceneKindArg::Slant => SceneKind::SlantedPlane {
                offset_m: self.offset,
                slope_m: self.slope,
            },
        };
        let texture = match self.texture {
            TextureArg::Checker => TextureKind::Checker {
                period_px: self.texture_scale,
            },
            TextureArg::Noise => TextureKind::Noise {
                scale_px: self.texture_scale,
            },
        };
        SceneSpec {
            kind,
            height: self.height,
            width: self.width,
            texture,
            contrast: self.contrast,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
enum PsfArg {
    Disc,
    Gaussian,
}

fn psf_model(psf: PsfArg, sigma_ratio: f64) -> PsfModel {
    match psf {
        PsfArg::Disc => PsfModel::Disc,
        PsfArg::Gaussian => PsfModel::Gaussian { sigma_ratio },
    }
}

#[derive(Args, serde::Serialize)]
struct SynthArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    cam: CamArgs,
    /// F-stops to render, low to high.
    #[arg(long, value_delimiter = ',', default_value = "4,8,11,13,16,22")]
    f_stops: Vec<f64>,
    /// F-stop recorded for the AIF capture.
    #[arg(long, default_value_t = 22.0)]
    aif_n: f64,
    #[arg(long, value_enum, default_value_t = PsfArg::Disc)]
    psf: PsfArg,
    #[arg(long, default_value_t = 0.25)]
    sigma_ratio: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, serde::Serialize)]
struct RenderArgs {
    #[arg(long)]
    aif: PathBuf,
    #[arg(long)]
    depth: PathBuf,
    /// Camera JSON file.
    #[arg(long)]
    cam: PathBuf,
    #[arg(long, value_enum, default_value_t = PsfArg::Disc)]
    psf: PsfArg,
    #[arg(long, default_value_t = 0.25)]
    sigma_ratio: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
enum PriorArg {
    Pixel,
    Grid,
}

#[derive(Args, serde::Serialize)]
struct SolveArgs {
    #[arg(long)]
    aif: PathBuf,
    #[arg(long)]
    blur: PathBuf,
    /// Camera JSON for the AIF capture.
    #[arg(long)]
    cam_aif: PathBuf,
    /// Camera JSON for the blurred capture.
    #[arg(long)]
    cam_blur: PathBuf,
    #[arg(long, value_enum, default_value_t = PriorArg::Pixel)]
    prior: PriorArg,
    /// Control grid side for the grid prior.
    #[arg(long, default_value_t = 32)]
    grid_size: usize,
    /// Keep the grid prior's parameters on the sqrt(M) sphere.
    #[arg(long, default_value_t = false)]
    latent_norm: bool,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    #[arg(long, default_value_t = 1.5e-3)]
    lr_prior: f64,
    #[arg(long, default_value_t = 5e-3)]
    lr_affine: f64,
    /// Total-variation weight on the relative depth.
    #[arg(long, default_value_t = 1e-3)]
    tv: f64,
    /// Scene lower bound in meters.
    #[arg(long)]
    smin: f64,
    /// Scene upper bound in meters.
    #[arg(long)]
    smax: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = PsfArg::Disc)]
    psf: PsfArg,
    #[arg(long, default_value_t = 0.25)]
    sigma_ratio: f64,
    #[arg(long)]
    out_depth: PathBuf,
    /// JSON report with alpha, beta, and the loss trace.
    #[arg(long)]
    out_report: PathBuf,
}

#[derive(Args, serde::Serialize)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Intrinsics JSON for the prediction camera (enables alignment).
    #[arg(long, requires_all = ["gt_cam", "extrinsics"])]
    pred_cam: Option<PathBuf>,
    /// Intrinsics JSON for the ground-truth camera.
    #[arg(long)]
    gt_cam: Option<PathBuf>,
    /// Extrinsics JSON: row-major rotation and translation.
    #[arg(long)]
    extrinsics: Option<PathBuf>,
    /// Scene label for the CSV row.
    #[arg(long, default_value = "scene")]
    scene: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, serde::Serialize)]
struct SweepArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    cam: CamArgs,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,64")]
    f_stops: Vec<f64>,
    /// F-stop recorded for the AIF side; must exceed every swept value.
    #[arg(long, default_value_t = 128.0)]
    aif_n: f64,
    /// Sweep affine initializations with a frozen prior instead of apertures.
    #[arg(long, default_value_t = false)]
    init_sweep: bool,
    /// Initial scale values in meters (init sweep), within (0, smax).
    #[arg(long, value_delimiter = ',', default_value = "0.07,1.75,3.15")]
    alphas: Vec<f64>,
    /// Initial offset values in meters (init sweep), within (0, smin).
    #[arg(long, value_delimiter = ',', default_value = "0.0298,0.745,1.341")]
    betas: Vec<f64>,
    /// F-stop of the blurred capture used by the init sweep.
    #[arg(long, default_value_t = 8.0)]
    blur_n: f64,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    #[arg(long, default_value_t = 0.03)]
    lr_prior: f64,
    #[arg(long, default_value_t = 0.01)]
    lr_affine: f64,
    #[arg(long, default_value_t = 1e-3)]
    tv: f64,
    #[arg(long, default_value_t = 1.49)]
    smin: f64,
    #[arg(long, default_value_t = 3.5)]
    smax: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, serde::Serialize)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = 64)]
    probes: usize,
    /// Relative finite-difference step (fraction of each probed depth).
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[command(flatten)]
    cam: CamArgs,
}

#[derive(Args, serde::Serialize)]
struct AlignArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    pred_cam: PathBuf,
    #[arg(long)]
    gt_cam: PathBuf,
    #[arg(long)]
    extrinsics: PathBuf,
    /// Ground-truth depth file fixing the output shape.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

fn read_depth(path: &Path) -> Result<DepthMap> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => Ok(io::read_pfm_depth(path)?),
        _ => Ok(io::read_png16_depth(path)?),
    }
}

/// Format an F-stop for file names: trailing zeros trimmed ("8", "1.4").
fn fstop_label(n: f64) -> String {
    if n == n.trunc() {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = args.scene.build();
    let base = args.cam.build()?;
    let model = psf_model(args.psf, args.sigma_ratio);
    if args.f_stops.iter().any(|n| *n > args.aif_n) {
        bail!(
            "every rendered f-stop must stay at or below --aif-n {}",
            args.aif_n
        );
    }
    let (aif, gt) = make_scene(&spec)?;
    let set = simulate_captures(&aif, &gt, &base, &args.f_stops, &model)?;

    std::fs::create_dir_all(&args.out_dir)?;
    let mut outputs = Vec::new();
    let mut cams = serde_json::Map::new();

    let aif_path = args.out_dir.join("aif.pfm");
    io::write_pfm_image(&aif_path, &set.aif)?;
    outputs.push(aif_path);
    let gt_path = args.out_dir.join("gt_depth.pfm");
    io::write_pfm_depth(&gt_path, &set.gt_depth)?;
    outputs.push(gt_path);

    let mut aif_cfg = base.with_f_stop(args.aif_n);
    aif_cfg.exposure_s = base.exposure_s * (args.aif_n / base.f_stop).powi(2);
    let cam_aif_path = args.out_dir.join("cam_aif.json");
    std::fs::write(&cam_aif_path, serde_json::to_string_pretty(&aif_cfg)?)?;
    outputs.push(cam_aif_path);
    cams.insert("aif".into(), serde_json::to_value(&aif_cfg)?);

    for (img, cfg) in &set.blurred {
        let label = fstop_label(cfg.f_stop);
        let img_path = args.out_dir.join(format!("blur_N{label}.pfm"));
        io::write_pfm_image(&img_path, img)?;
        outputs.push(img_path);
        let cam_path = args.out_dir.join(format!("cam_blur_N{label}.json"));
        std::fs::write(&cam_path, serde_json::to_string_pretty(cfg)?)?;
        outputs.push(cam_path);
        cams.insert(format!("blur_N{label}"), serde_json::to_value(cfg)?);
    }

    let cams_path = args.out_dir.join("cams.json");
    std::fs::write(&cams_path, serde_json::to_string_pretty(&cams)?)?;
    outputs.push(cams_path);

    let path = write_manifest(
        "synth",
        serde_json::to_value(args)?,
        &[],
        &outputs,
        &args.out_dir,
    )?;
    eprintln!("wrote {} files and {}", outputs.len(), path.display());
    Ok(())
}

fn cmd_render(args: &RenderArgs) -> Result<()> {
    let aif = io::read_pfm_image(&args.aif)?;
    let depth = read_depth(&args.depth)?;
    let cam: CameraConfig = read_json(&args.cam)?;
    let model = psf_model(args.psf, args.sigma_ratio);
    let out = render_blur(&aif, &depth, &cam, &model)?;
    io::write_pfm_image(&args.out, &out)?;
    write_manifest(
        "render",
        serde_json::to_value(args)?,
        &[args.aif.clone(), args.depth.clone(), args.cam.clone()],
        std::slice::from_ref(&args.out),
        &args.out,
    )?;
    Ok(())
}

#[derive(serde::Serialize)]
struct SolveReport {
    alpha: f64,
    beta: f64,
    iters_run: usize,
    best_loss: f64,
    loss_trace: Vec<f64>,
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let aif = io::read_pfm_image(&args.aif)?;
    let blur = io::read_pfm_image(&args.blur)?;
    let cam_aif: CameraConfig = read_json(&args.cam_aif)?;
    let cam_blur: CameraConfig = read_json(&args.cam_blur)?;
    let pair = CapturePair::new(
        Capture {
            image: aif,
            config: cam_aif,
        },
        Capture {
            image: blur,
            config: cam_blur,
        },
    )?;
    let pair = normalize_capture(&pair);

    let (h, w) = (pair.aif.image.height(), pair.aif.image.width());
    let cfg = SolveConfig {
        iters: args.iters,
        lr_prior: args.lr_prior,
        lr_affine: args.lr_affine,
        tv_weight: args.tv,
        psf_model: psf_model(args.psf, args.sigma_ratio),
        seed: args.seed,
        ..SolveConfig::default()
    };
    let aff0 = AffineScale::new(args.smin, args.smax)?;

    let result = match args.prior {
        PriorArg::Pixel => {
            let prior = PixelPrior::new(h, w);
            let init = vec![0.0; prior.param_dim()];
            solve(&pair, &prior, &init, &aff0, &cfg)?
        }
        PriorArg::Grid => {
            let prior = GridPrior::new(args.grid_size, args.grid_size, h, w)?
                .with_latent_norm(args.latent_norm);
            let init = if args.latent_norm {
                // Seeded standard-normal draw projected onto the sphere.
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
                let mut v: Vec<f64> = (0..prior.param_dim())
                    .map(|_| {
                        let u1: f64 = rng.random_range(1e-12..1.0);
                        let u2: f64 = rng.random_range(0.0..1.0);
                        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                    })
                    .collect();
                renormalize_latent(&mut v, prior.param_dim())?;
                v
            } else {
                vec![0.0; prior.param_dim()]
            };
            solve(&pair, &prior, &init, &aff0, &cfg)?
        }
    };

    io::write_pfm_depth(&args.out_depth, &result.metric_depth)?;
    let best_loss = result
        .loss_trace
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let report = SolveReport {
        alpha: result.alpha,
        beta: result.beta,
        iters_run: result.iters_run,
        best_loss,
        loss_trace: result.loss_trace.clone(),
    };
    std::fs::write(&args.out_report, serde_json::to_string_pretty(&report)?)?;
    write_manifest(
        "solve",
        serde_json::to_value(args)?,
        &[
            args.aif.clone(),
            args.blur.clone(),
            args.cam_aif.clone(),
            args.cam_blur.clone(),
        ],
        &[args.out_depth.clone(), args.out_report.clone()],
        &args.out_depth,
    )?;
    eprintln!(
        "solved: alpha {:.6} beta {:.6} best loss {best_loss:.6e}",
        result.alpha, result.beta
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let pred = read_depth(&args.pred)?;
    let gt = read_depth(&args.gt)?;
    let mut inputs = vec![args.pred.clone(), args.gt.clone()];
    let report = match (&args.pred_cam, &args.gt_cam, &args.extrinsics) {
        (Some(pc), Some(gc), Some(ex)) => {
            let pred_k: Intrinsics = read_json(pc)?;
            let gt_k: Intrinsics = read_json(gc)?;
            let ext: ExtrinsicsJson = read_json(ex)?;
            let t = RigidTransform::try_from(&ext)?;
            inputs.extend([pc.clone(), gc.clone(), ex.clone()]);
            eval::evaluate_aligned(&pred, &pred_k, &gt, &gt_k, &t)?
        }
        (None, None, None) => eval::compute_metrics(&pred, &gt)?,
        _ => bail!("alignment needs --pred-cam, --gt-cam, and --extrinsics together"),
    };
    let csv = format!(
        "scene,rmse,rel,log10,d1,d2,d3,valid_pixels\n{},{},{},{},{},{},{},{}\n",
        args.scene,
        report.rmse,
        report.rel,
        report.log10,
        report.delta1,
        report.delta2,
        report.delta3,
        report.valid_pixels
    );
    std::fs::write(&args.out, csv)?;
    write_manifest(
        "eval",
        serde_json::to_value(args)?,
        &inputs,
        std::slice::from_ref(&args.out),
        &args.out,
    )?;
    Ok(())
}

/// Initialization sweep: freeze the prior at the relative depth implied by
/// the neutral affine parameters, grid-search (alpha0, beta0), and tabulate
/// the resulting delta_1 per cell.
fn init_sweep_csv(
    args: &SweepArgs,
    spec: &SceneSpec,
    base: &CameraConfig,
    cfg: &SolveConfig,
) -> Result<String> {
    let (aif, gt) = make_scene(spec)?;
    let mut blur_cfg = base.with_f_stop(args.blur_n);
    blur_cfg.exposure_s = base.exposure_s * (args.blur_n / base.f_stop).powi(2);
    let blurred = render_blur(&aif, &gt, &blur_cfg, &cfg.psf_model)?;
    let mut aif_cfg = base.with_f_stop(args.aif_n);
    aif_cfg.exposure_s = base.exposure_s * (args.aif_n / base.f_stop).powi(2);
    let pair = CapturePair::new(
        Capture {
            image: aif.clone(),
            config: aif_cfg,
        },
        Capture {
            image: blurred,
            config: blur_cfg,
        },
    )?;

    let neutral = AffineScale::new(args.smin, args.smax)?;
    let (alpha0, beta0) = (neutral.alpha(), neutral.beta());
    let frozen: Vec<f64> = gt
        .data()
        .iter()
        .map(|d| {
            let rel = ((d - beta0) / alpha0).clamp(1e-6, 1.0 - 1e-6);
            (rel / (1.0 - rel)).ln()
        })
        .collect();
    let prior = PixelPrior::new(aif.height(), aif.width());
    let cells = defocus_core::solver::grid_init_sweep(
        &pair,
        &prior,
        &frozen,
        &gt,
        cfg,
        args.smin,
        args.smax,
        &args.alphas,
        &args.betas,
    )?;
    let mut csv = String::from("alpha0,beta0,delta1\n");
    for c in &cells {
        csv.push_str(&format!("{},{},{}\n", c.alpha0, c.beta0, c.delta1));
    }
    Ok(csv)
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let spec = args.scene.build();
    let base = args.cam.build()?;
    let cfg = SolveConfig {
        iters: args.iters,
        lr_prior: args.lr_prior,
        lr_affine: args.lr_affine,
        tv_weight: args.tv,
        ..SolveConfig::default()
    };
    let csv = if args.init_sweep {
        init_sweep_csv(args, &spec, &base, &cfg)?
    } else {
        let rows = aperture_sweep_experiment(
            &spec,
            &base,
            args.aif_n,
            &args.f_stops,
            &cfg,
            args.smin,
            args.smax,
        )?;
        let mut csv = String::from("f_stop,rmse,delta1\n");
        for r in &rows {
            csv.push_str(&format!("{},{},{}\n", r.f_stop, r.rmse, r.delta1));
        }
        csv
    };
    std::fs::write(&args.out, csv)?;
    write_manifest(
        "sweep",
        serde_json::to_value(args)?,
        &[],
        std::slice::from_ref(&args.out),
        &args.out,
    )?;
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<i32> {
    let cam = args.cam.build()?;
    // Default probe scene: random texture, random depths clear of the focus
    // distance.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let (h, w) = (16usize, 16usize);
    let aif = ImageBuffer::from_vec(
        h,
        w,
        1,
        (0..h * w).map(|_| rng.random_range(0.1..1.0)).collect(),
    )?;
    let depth_data: Vec<f64> = (0..h * w)
        .map(|_| loop {
            let d: f64 = rng.random_range(0.5..3.0);
            if (d - cam.focus_distance_m).abs() > 0.02 {
                break d;
            }
        })
        .collect();
    let depth = DepthMap::from_vec(h, w, depth_data)?;
    let report = finite_diff_check(
        &aif,
        &depth,
        &cam,
        &PsfModel::Disc,
        args.probes,
        args.step,
        args.seed,
    )?;
    println!("{}", serde_json::to_string(&report)?);
    if report.max_rel_error > args.tol {
        eprintln!(
            "gradient check failed: max relative error {:.3e} > tol {:.3e}",
            report.max_rel_error, args.tol
        );
        return Ok(1);
    }
    Ok(0)
}

fn cmd_align(args: &AlignArgs) -> Result<()> {
    let pred = read_depth(&args.pred)?;
    let gt = read_depth(&args.gt)?;
    let pred_k: Intrinsics = read_json(&args.pred_cam)?;
    let gt_k: Intrinsics = read_json(&args.gt_cam)?;
    let ext: ExtrinsicsJson = read_json(&args.extrinsics)?;
    let t = RigidTransform::try_from(&ext)?;
    let cloud = eval::unproject(&pred, &pred_k)?;
    let moved = eval::transform_points(&cloud, &t);
    let proj = eval::project_depth(&moved, &gt_k, (gt.height(), gt.width()))?;
    io::write_pfm_depth(&args.out, &proj.depth)?;
    write_manifest(
        "align",
        serde_json::to_value(args)?,
        &[
            args.pred.clone(),
            args.pred_cam.clone(),
            args.gt_cam.clone(),
            args.extrinsics.clone(),
            args.gt.clone(),
        ],
        std::slice::from_ref(&args.out),
        &args.out,
    )?;
    eprintln!(
        "projected {} points, dropped {}",
        cloud.len() - proj.dropped,
        proj.dropped
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a).map(|_| 0),
        Command::Render(a) => cmd_render(a).map(|_| 0),
        Command::Solve(a) => cmd_solve(a).map(|_| 0),
        Command::Eval(a) => cmd_eval(a).map(|_| 0),
        Command::Sweep(a) => cmd_sweep(a).map(|_| 0),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Align(a) => cmd_align(a).map(|_| 0),
    }
}

fn main() {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("DEFOCUS_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("warning: thread pool already initialized: {e}");
        }
    }
    match run(&cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
