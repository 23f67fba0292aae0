//! Synthetic scene generation, capture simulation at multiple apertures, and
//! dataset I/O.
//!
//! Textures are procedural (checker or lattice value noise) with a contrast
//! knob: defocus observability depends on local contrast, so zero-contrast
//! scenes are valid inputs that deliberately carry no depth cue. All data is
//! generated linear and quantized to f32 so PFM round trips are bit-exact.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{DepthMap, ImageBuffer};
use crate::io;
use crate::optics::{coc_diameter, CameraConfig, PsfModel};
use crate::render::{render_blur, Capture, CapturePair};
use crate::solver::{solve, AffineScale, SolveConfig};

/// Scene geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SceneKind {
    /// Fronto-parallel plane at constant depth.
    TexturedPlane { depth_m: f64 },
    /// Vertical bands of constant depth; `widths` are fractions summing to 1.
    Staircase { depths: Vec<f64>, widths: Vec<f64> },
    /// Depth ramp along x: `offset + slope * x / (width - 1)`.
    SlantedPlane { offset_m: f64, slope_m: f64 },
    /// Load an existing RGBD pair from disk.
    RgbdImport { image: PathBuf, depth: PathBuf },
}

/// Texture painted on the scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TextureKind {
    /// Two-level checkerboard with the given cell size in pixels.
    Checker { period_px: usize },
    /// Multi-octave lattice value noise with the given base cell size.
    Noise { scale_px: usize },
    /// Grayscale or color texture from an image file (PFM or PNG).
    File { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub height: usize,
    pub width: usize,
    pub texture: TextureKind,
    /// Peak-to-peak texture amplitude around the 0.5 mid level, in (0, 1].
    pub contrast: f64,
    pub seed: u64,
}

impl SceneSpec {
    fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidValue("scene size must be positive".into()));
        }
        if !(self.contrast >= 0.0 && self.contrast <= 1.0) {
            return Err(Error::InvalidValue(format!(
                "contrast must lie in [0, 1], got {}",
                self.contrast
            )));
        }
        match &self.kind {
            SceneKind::TexturedPlane { depth_m } => {
                if *depth_m <= 0.0 {
                    return Err(Error::InvalidValue("plane depth must be positive".into()));
                }
            }
            SceneKind::Staircase { depths, widths } => {
                if depths.is_empty() || depths.len() != widths.len() {
                    return Err(Error::InvalidValue(
                        "staircase needs matching, non-empty depth and width lists".into(),
                    ));
                }
                if depths.iter().any(|d| *d <= 0.0) {
                    return Err(Error::InvalidValue(
                        "staircase depths must be positive".into(),
                    ));
                }
                let total: f64 = widths.iter().sum();
                if (total - 1.0).abs() > 1e-9 || widths.iter().any(|w| *w <= 0.0) {
                    return Err(Error::InvalidValue("staircase widths must sum to 1".into()));
                }
            }
            SceneKind::SlantedPlane { offset_m, slope_m } => {
                if *offset_m <= 0.0 || offset_m + slope_m <= 0.0 {
                    return Err(Error::InvalidValue(
                        "slanted plane leaves positive depth".into(),
                    ));
                }
            }
            SceneKind::RgbdImport { .. } => {}
        }
        Ok(())
    }
}

/// Quantize to f32 so generated data survives PFM round trips bit-exactly.
#[inline]
fn q32(v: f64) -> f64 {
    v as f32 as f64
}

fn paint_texture(spec: &SceneSpec) -> Result<ImageBuffer> {
    let (h, w) = (spec.height, spec.width);
    let amp = spec.contrast / 2.0;
    match &spec.texture {
        TextureKind::Checker { period_px } => {
            let p = (*period_px).max(1);
            let data: Vec<f64> = (0..h * w)
                .map(|i| {
                    let (y, x) = (i / w, i % w);
                    let on = (y / p + x / p) % 2 == 0;
                    q32(if on { 0.5 + amp } else { 0.5 - amp })
                })
                .collect();
            ImageBuffer::from_vec(h, w, 1, data)
        }
        TextureKind::Noise { scale_px } => {
            let base = (*scale_px).max(1);
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            // Three octaves of bilinear lattice value noise.
            let mut field = vec![0.0f64; h * w];
            let mut weight_total = 0.0;
            let mut octave_weight = 1.0;
            for octave in 0..3usize {
                let cell = (base >> octave).max(1);
                let gh = h / cell + 2;
                let gw = w / cell + 2;
                let lattice: Vec<f64> = (0..gh * gw).map(|_| rng.random_range(-1.0..1.0)).collect();
                for y in 0..h {
                    let fy = y as f64 / cell as f64;
                    let y0 = fy.floor() as usize;
                    let ty = fy - y0 as f64;
                    for x in 0..w {
                        let fx = x as f64 / cell as f64;
                        let x0 = fx.floor() as usize;
                        let tx = fx - x0 as f64;
                        let v00 = lattice[y0 * gw + x0];
                        let v01 = lattice[y0 * gw + x0 + 1];
                        let v10 = lattice[(y0 + 1) * gw + x0];
                        let v11 = lattice[(y0 + 1) * gw + x0 + 1];
                        let v = v00 * (1.0 - ty) * (1.0 - tx)
                            + v01 * (1.0 - ty) * tx
                            + v10 * ty * (1.0 - tx)
                            + v11 * ty * tx;
                        field[y * w + x] += octave_weight * v;
                    }
                }
                weight_total += octave_weight;
                octave_weight *= 0.5;
            }
            let data: Vec<f64> = field
                .iter()
                .map(|v| q32(0.5 + amp * v / weight_total))
                .collect();
            ImageBuffer::from_vec(h, w, 1, data)
        }
        TextureKind::File { path } => {
            let img = load_image_any(path)?;
            if img.height() != h || img.width() != w {
                return Err(Error::DimensionMismatch(format!(
                    "texture file is {}x{}, scene wants {h}x{w}",
                    img.height(),
                    img.width()
                )));
            }
            Ok(img)
        }
    }
}

fn load_image_any(path: &Path) -> Result<ImageBuffer> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => io::read_pfm_image(path),
        _ => {
            let img = image::open(path)?.into_rgb32f();
            let (w, h) = (img.width() as usize, img.height() as usize);
            let mut data = vec![0.0f64; h * w * 3];
            for y in 0..h {
                for x in 0..w {
                    let px = img.get_pixel(x as u32, y as u32);
                    for ch in 0..3 {
                        data[(y * w + x) * 3 + ch] = q32(px.0[ch].max(0.0) as f64);
                    }
                }
            }
            ImageBuffer::from_vec(h, w, 3, data)
        }
    }
}

/// Generate the AIF image and ground-truth depth for a scene spec.
/// Deterministic in the spec's seed.
pub fn make_scene(spec: &SceneSpec) -> Result<(ImageBuffer, DepthMap)> {
    spec.validate()?;
    if let SceneKind::RgbdImport { image, depth } = &spec.kind {
        return load_rgbd(image, depth);
    }
    let aif = paint_texture(spec)?;
    let (h, w) = (spec.height, spec.width);
    let depth = match &spec.kind {
        SceneKind::TexturedPlane { depth_m } => DepthMap::constant(h, w, q32(*depth_m))?,
        SceneKind::Staircase { depths, widths } => {
            // Band edges in pixels; the last band absorbs rounding.
            let mut edges = Vec::with_capacity(depths.len() + 1);
            edges.push(0usize);
            let mut acc = 0.0;
            for frac in widths.iter().take(widths.len() - 1) {
                acc += frac;
                edges.push(((acc * w as f64).round() as usize).min(w));
            }
            edges.push(w);
            let mut data = vec![0.0f64; h * w];
            for (band, d) in depths.iter().enumerate() {
                for x in edges[band]..edges[band + 1] {
                    for y in 0..h {
                        data[y * w + x] = q32(*d);
                    }
                }
            }
            DepthMap::from_vec(h, w, data)?
        }
        SceneKind::SlantedPlane { offset_m, slope_m } => {
            let data: Vec<f64> = (0..h * w)
                .map(|i| {
                    let x = (i % w) as f64 / (w.max(2) - 1) as f64;
                    q32(offset_m + slope_m * x)
                })
                .collect();
            DepthMap::from_vec(h, w, data)?
        }
        SceneKind::RgbdImport { .. } => unreachable!(),
    };
    Ok((aif, depth))
}

/// Load an RGBD pair: image from PFM/PNG, depth from PFM (meters) or 16-bit
/// PNG (millimeters).
pub fn load_rgbd<P: AsRef<Path>, Q: AsRef<Path>>(
    image_path: P,
    depth_path: Q,
) -> Result<(ImageBuffer, DepthMap)> {
    let img = load_image_any(image_path.as_ref())?;
    let depth = match depth_path.as_ref().extension().and_then(|e| e.to_str()) {
        Some("pfm") => io::read_pfm_depth(depth_path.as_ref())?,
        _ => io::read_png16_depth(depth_path.as_ref())?,
    };
    if img.height() != depth.height() || img.width() != depth.width() {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs depth {}x{}",
            img.height(),
            img.width(),
            depth.height(),
            depth.width()
        )));
    }
    Ok((img, depth))
}

/// The AIF image, ground truth, and one rendered capture per F-stop.
#[derive(Debug, Clone)]
pub struct CaptureSet {
    pub aif: ImageBuffer,
    pub gt_depth: DepthMap,
    pub blurred: Vec<(ImageBuffer, CameraConfig)>,
}

impl CaptureSet {
    /// Capture pair for solving: the blur side is the capture at `idx`, the
    /// AIF side is the highest-F-stop capture (the closest to blur-free).
    pub fn pair(&self, idx: usize) -> Result<CapturePair> {
        let (blur_img, blur_cfg) = self
            .blurred
            .get(idx)
            .ok_or_else(|| Error::InvalidValue(format!("capture index {idx} out of range")))?;
        let (aif_img, aif_cfg) = self
            .blurred
            .iter()
            .max_by(|a, b| a.1.f_stop.partial_cmp(&b.1.f_stop).unwrap())
            .map(|(i, c)| (i.clone(), c.clone()))
            .expect("capture set is never empty");
        if aif_cfg.f_stop <= blur_cfg.f_stop {
            return Err(Error::InvalidValue(format!(
                "capture {idx} has no higher-F-stop AIF partner"
            )));
        }
        CapturePair::new(
            Capture {
                image: aif_img,
                config: aif_cfg,
            },
            Capture {
                image: blur_img.clone(),
                config: blur_cfg.clone(),
            },
        )
    }
}

/// Render one blurred capture per F-stop from the AIF image and ground-truth
/// depth. Exposures are balanced so `t * (f/N)^2` is constant across the set
/// and the energy factor between any two captures is 1.
pub fn simulate_captures(
    aif: &ImageBuffer,
    gt_depth: &DepthMap,
    base_cam: &CameraConfig,
    f_stops: &[f64],
    model: &PsfModel,
) -> Result<CaptureSet> {
    if f_stops.is_empty() {
        return Err(Error::InvalidValue("f_stops must be non-empty".into()));
    }
    base_cam.validate()?;
    let mut blurred = Vec::with_capacity(f_stops.len());
    for &n in f_stops {
        let mut cfg = base_cam.with_f_stop(n);
        cfg.exposure_s = base_cam.exposure_s * (n / base_cam.f_stop).powi(2);
        let img = render_blur(aif, gt_depth, &cfg, model)?;
        blurred.push((img, cfg));
    }
    Ok(CaptureSet {
        aif: aif.clone(),
        gt_depth: gt_depth.clone(),
        blurred,
    })
}

/// Mean CoC over the scene for one capture's camera.
pub fn mean_coc_px(depth: &DepthMap, cam: &CameraConfig) -> Result<f64> {
    let mut sum = 0.0;
    for d in depth.data() {
        sum += coc_diameter(*d, cam)?;
    }
    Ok(sum / depth.data().len() as f64)
}

/// One row of an aperture sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub f_stop: f64,
    pub rmse: f64,
    pub delta1: f64,
}

/// For each F-stop: build the capture pair (ideal AIF + that capture), solve
/// for metric depth, and score against the ground truth.
///
/// `aif_f_stop` is the F-stop recorded for the AIF side; it only enters the
/// energy bookkeeping and must exceed every swept value.
#[allow(clippy::too_many_arguments)]
pub fn aperture_sweep_experiment(
    spec: &SceneSpec,
    base_cam: &CameraConfig,
    aif_f_stop: f64,
    f_stops: &[f64],
    cfg: &SolveConfig,
    s_min: f64,
    s_max: f64,
) -> Result<Vec<SweepRow>> {
    if f_stops.is_empty() {
        return Err(Error::InvalidValue("f_stops must be non-empty".into()));
    }
    let (aif, gt) = make_scene(spec)?;
    let mut aif_cfg = base_cam.with_f_stop(aif_f_stop);
    aif_cfg.exposure_s = base_cam.exposure_s * (aif_f_stop / base_cam.f_stop).powi(2);
    let mut rows = Vec::with_capacity(f_stops.len());
    for &n in f_stops {
        if n >= aif_f_stop {
            return Err(Error::InvalidValue(format!(
                "swept f-stop {n} must stay below the AIF f-stop {aif_f_stop}"
            )));
        }
        let mut blur_cfg = base_cam.with_f_stop(n);
        blur_cfg.exposure_s = base_cam.exposure_s * (n / base_cam.f_stop).powi(2);
        let blurred = render_blur(&aif, &gt, &blur_cfg, &cfg.psf_model)?;
        let pair = CapturePair::new(
            Capture {
                image: aif.clone(),
                config: aif_cfg.clone(),
            },
            Capture {
                image: blurred,
                config: blur_cfg,
            },
        )?;
        let prior = crate::prior::PixelPrior::new(aif.height(), aif.width());
        let aff0 = AffineScale::new(s_min, s_max)?;
        let init = vec![0.0; aif.height() * aif.width()];
        let result = solve(&pair, &prior, &init, &aff0, cfg)?;
        let report = crate::eval::compute_metrics(&result.metric_depth, &gt)?;
        rows.push(SweepRow {
            f_stop: n,
            rmse: report.rmse,
            delta1: report.delta1,
        });
    }
    Ok(rows)
}
