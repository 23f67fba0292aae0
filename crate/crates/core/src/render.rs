//! Defocus-blur forward model and radiometric energy normalization.
//!
//! The blurred image is the spatially varying convolution of the all-in-focus
//! image with per-source normalized PSF kernels whose size follows the local
//! depth. Evaluated as a gather over a bounded window so tiles never contend;
//! sources outside the image contribute nothing and every output pixel is
//! renormalized by the sum of contributing source weights.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{DepthMap, ImageBuffer};
use crate::optics::{
    clamp_coc, coc_derivative_unchecked, coc_diameter_unchecked, disc_weight, disc_weight_dc,
    gaussian_weight, gaussian_weight_dc, CameraConfig, PsfModel,
};

/// One image plus the camera settings it was captured with.
#[derive(Debug, Clone)]
pub struct Capture {
    pub image: ImageBuffer,
    pub config: CameraConfig,
}

/// All-in-focus (high F-stop) and blurred (low F-stop) captures of one scene.
#[derive(Debug, Clone)]
pub struct CapturePair {
    pub aif: Capture,
    pub blurred: Capture,
}

impl CapturePair {
    pub fn new(aif: Capture, blurred: Capture) -> Result<Self> {
        aif.config.validate()?;
        blurred.config.validate()?;
        if !aif.image.same_shape(&blurred.image) {
            return Err(Error::DimensionMismatch(
                "aif and blurred images must share height/width/channels".into(),
            ));
        }
        if aif.config.f_stop <= blurred.config.f_stop {
            return Err(Error::InvalidCamera(format!(
                "aif f-stop {} must exceed blurred f-stop {}",
                aif.config.f_stop, blurred.config.f_stop
            )));
        }
        Ok(Self { aif, blurred })
    }
}

/// Exposure/aperture energy factor `(t_aif / t_b) * (N_b^2 / N_aif^2)`.
pub fn energy_scale(aif_cfg: &CameraConfig, blur_cfg: &CameraConfig) -> f64 {
    (aif_cfg.exposure_s / blur_cfg.exposure_s)
        * ((blur_cfg.f_stop * blur_cfg.f_stop) / (aif_cfg.f_stop * aif_cfg.f_stop))
}

/// Scale the blurred capture so both captures share total radiometric energy.
pub fn normalize_capture(pair: &CapturePair) -> CapturePair {
    let factor = energy_scale(&pair.aif.config, &pair.blurred.config);
    CapturePair {
        aif: pair.aif.clone(),
        blurred: Capture {
            image: pair.blurred.image.scaled(factor),
            config: pair.blurred.config.clone(),
        },
    }
}

/// Per-source kernel tables shared by the forward and backward passes.
///
/// For each source pixel: the clamped CoC, the reciprocal kernel mass `1/Z`,
/// the mass derivative ratio `Z'/Z`, the depth derivative `dc/dd` (zero when
/// the CoC sits on the clamp), and the integer support radius.
pub(crate) struct RenderPlan {
    pub height: usize,
    pub width: usize,
    pub model: PsfModel,
    pub coc: Vec<f64>,
    pub inv_mass: Vec<f64>,
    pub dmass_ratio: Vec<f64>,
    pub dcoc_dd: Vec<f64>,
    pub radius: Vec<u16>,
    pub max_radius: usize,
}

#[inline]
pub(crate) fn psf_weight(model: &PsfModel, m: f64, c: f64) -> f64 {
    match model {
        PsfModel::Disc => disc_weight(m, c),
        PsfModel::Gaussian { sigma_ratio } => gaussian_weight(m, c, *sigma_ratio),
    }
}

#[inline]
fn psf_weight_dc(model: &PsfModel, m: f64, c: f64) -> f64 {
    match model {
        PsfModel::Disc => disc_weight_dc(m, c),
        PsfModel::Gaussian { sigma_ratio } => gaussian_weight_dc(m, c, *sigma_ratio),
    }
}

impl RenderPlan {
    pub fn new(depth: &DepthMap, cam: &CameraConfig, model: &PsfModel) -> Result<Self> {
        cam.validate()?;
        model.validate()?;
        let d_min = cam.min_depth_m();
        if let Some(d) = depth.data().iter().find(|d| **d < d_min) {
            return Err(Error::DepthOutOfDomain {
                depth: *d,
                min: d_min,
            });
        }
        let (h, w) = (depth.height(), depth.width());
        let win_r = cam.window_radius_px();
        let n = h * w;
        let mut coc = vec![0.0; n];
        let mut inv_mass = vec![0.0; n];
        let mut dmass_ratio = vec![0.0; n];
        let mut dcoc_dd = vec![0.0; n];
        let mut radius = vec![0u16; n];

        coc.par_iter_mut()
            .zip(dcoc_dd.par_iter_mut())
            .zip(radius.par_iter_mut())
            .zip(depth.data().par_iter())
            .for_each(|(((c, dc), r), d)| {
                let (cv, clamped) = clamp_coc(coc_diameter_unchecked(*d, cam), cam);
                *c = cv;
                *dc = if clamped {
                    0.0
                } else {
                    coc_derivative_unchecked(*d, cam)
                };
                *r = support_radius(model, cv, win_r) as u16;
            });

        inv_mass
            .par_iter_mut()
            .zip(dmass_ratio.par_iter_mut())
            .zip(coc.par_iter().zip(radius.par_iter()))
            .for_each(|((inv_z, zr), (c, r))| {
                let r = *r as isize;
                let mut z = 0.0f64;
                let mut dz = 0.0f64;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let m = ((dy * dy + dx * dx) as f64).sqrt();
                        z += psf_weight(model, m, *c);
                        dz += psf_weight_dc(model, m, *c);
                    }
                }
                *inv_z = 1.0 / z;
                *zr = dz / z;
            });

        let max_radius = radius.iter().map(|r| *r as usize).max().unwrap_or(0);
        Ok(Self {
            height: h,
            width: w,
            model: *model,
            coc,
            inv_mass,
            dmass_ratio,
            dcoc_dd,
            radius,
            max_radius,
        })
    }
}

/// Disc weights vanish beyond `(c + 1) / 2`; the Gaussian is truncated at
/// eight sigma, where the out-of-support mass is below 1e-14 of the total.
fn support_radius(model: &PsfModel, c: f64, window_radius: usize) -> usize {
    match model {
        PsfModel::Disc => (((c + 1.0) / 2.0).floor() as usize).min(window_radius),
        PsfModel::Gaussian { sigma_ratio } => {
            ((8.0 * sigma_ratio * c).ceil() as usize).clamp(1, window_radius)
        }
    }
}

/// Forward pass: returns the blurred image and the per-pixel sum of
/// contributing source weights (the boundary renormalizer).
pub(crate) fn render_forward(plan: &RenderPlan, aif: &ImageBuffer) -> (ImageBuffer, Vec<f64>) {
    let (h, w, ch) = (plan.height, plan.width, aif.channels());
    let r = plan.max_radius as isize;
    let mut out = vec![0.0f64; h * w * ch];
    let mut den = vec![0.0f64; h * w];
    let aif_data = aif.data();

    out.par_chunks_mut(w * ch)
        .zip(den.par_chunks_mut(w))
        .enumerate()
        .for_each(|(i, (out_row, den_row))| {
            let i = i as isize;
            let mut acc = vec![0.0f64; ch];
            for j in 0..w as isize {
                acc.iter_mut().for_each(|a| *a = 0.0);
                let mut weight_sum = 0.0f64;
                let y_lo = (i - r).max(0);
                let y_hi = (i + r).min(h as isize - 1);
                for u in y_lo..=y_hi {
                    let dy = i - u;
                    let x_lo = (j - r).max(0);
                    let x_hi = (j + r).min(w as isize - 1);
                    for v in x_lo..=x_hi {
                        let dx = j - v;
                        let s = u as usize * w + v as usize;
                        let rad = plan.radius[s] as isize;
                        if dy.abs() > rad || dx.abs() > rad {
                            continue;
                        }
                        let m = ((dy * dy + dx * dx) as f64).sqrt();
                        let wgt = psf_weight(&plan.model, m, plan.coc[s]) * plan.inv_mass[s];
                        if wgt == 0.0 {
                            continue;
                        }
                        weight_sum += wgt;
                        let base = s * ch;
                        for (k, a) in acc.iter_mut().enumerate() {
                            *a += aif_data[base + k] * wgt;
                        }
                    }
                }
                let j = j as usize;
                den_row[j] = weight_sum;
                for (k, a) in acc.iter().enumerate() {
                    out_row[j * ch + k] = a / weight_sum;
                }
            }
        });

    let out = ImageBuffer::from_signed(h, w, ch, out).expect("render produced non-finite output");
    (out, den)
}

/// Backward pass: gradient of `<upstream, forward(aif, depth)>` w.r.t. depth.
///
/// Chains the per-branch kernel slopes through the normalization quotient and
/// the CoC derivative. Pure gather over each source's own support; no shared
/// accumulators.
pub(crate) fn render_backward(
    plan: &RenderPlan,
    aif: &ImageBuffer,
    out: &ImageBuffer,
    den: &[f64],
    upstream: &ImageBuffer,
) -> Vec<f64> {
    let (h, w, ch) = (plan.height, plan.width, aif.channels());
    let aif_data = aif.data();
    let out_data = out.data();
    let up_data = upstream.data();
    let mut grad = vec![0.0f64; h * w];

    grad.par_chunks_mut(w)
        .enumerate()
        .for_each(|(u, grad_row)| {
            let u = u as isize;
            for v in 0..w as isize {
                let s = u as usize * w + v as usize;
                let dc_dd = plan.dcoc_dd[s];
                if dc_dd == 0.0 {
                    grad_row[v as usize] = 0.0;
                    continue;
                }
                let c = plan.coc[s];
                let inv_z = plan.inv_mass[s];
                let zr = plan.dmass_ratio[s];
                let rad = plan.radius[s] as isize;
                let mut gc = 0.0f64;
                let y_lo = (u - rad).max(0);
                let y_hi = (u + rad).min(h as isize - 1);
                for i in y_lo..=y_hi {
                    let dy = i - u;
                    let x_lo = (v - rad).max(0);
                    let x_hi = (v + rad).min(w as isize - 1);
                    for j in x_lo..=x_hi {
                        let dx = j - v;
                        let m = ((dy * dy + dx * dx) as f64).sqrt();
                        let wgt = psf_weight(&plan.model, m, c);
                        let dwgt = psf_weight_dc(&plan.model, m, c);
                        let dnorm = (dwgt - wgt * zr) * inv_z;
                        if dnorm == 0.0 {
                            continue;
                        }
                        let p = i as usize * w + j as usize;
                        let mut residual = 0.0f64;
                        for k in 0..ch {
                            residual +=
                                up_data[p * ch + k] * (aif_data[s * ch + k] - out_data[p * ch + k]);
                        }
                        gc += residual / den[p] * dnorm;
                    }
                }
                grad_row[v as usize] = gc * dc_dd;
            }
        });

    grad
}

/// Render the defocused image seen by `cam` given the AIF image and depth.
pub fn render_blur(
    aif: &ImageBuffer,
    depth: &DepthMap,
    cam: &CameraConfig,
    model: &PsfModel,
) -> Result<ImageBuffer> {
    if aif.height() != depth.height() || aif.width() != depth.width() {
        return Err(Error::DimensionMismatch(format!(
            "aif {}x{} vs depth {}x{}",
            aif.height(),
            aif.width(),
            depth.height(),
            depth.width()
        )));
    }
    let plan = RenderPlan::new(depth, cam, model)?;
    Ok(render_forward(&plan, aif).0)
}
