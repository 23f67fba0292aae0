//! Thin-lens circle of confusion and depth-dependent point spread functions.
//!
//! The blur disc diameter for a point source at depth `d` under a thin lens
//! with focal length `f`, focus distance `F`, F-stop `N` and pixel pitch `s` is
//!
//! ```text
//! c(d) = (f^2 / N) * |d - F| / (d * (F - f) * s)    [pixels]
//! ```
//!
//! The disc PSF is a uniform disc of diameter `c` with a one-pixel linear
//! fall-off at the rim, normalized to unit mass. An isotropic Gaussian with
//! `sigma = sigma_ratio * c` is available as the mismatched baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Near-field floor as a multiple of the focal length; the CoC equation
/// diverges as `d -> 0`.
pub const MIN_DEPTH_FACTOR: f64 = 1.1;

/// Default `sigma / c` for the Gaussian PSF: matches the second moment of a
/// uniform disc of diameter `c`.
pub const DEFAULT_GAUSSIAN_SIGMA_RATIO: f64 = 0.25;

/// Thin-lens parameters for one capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    /// Focal length `f` in meters.
    pub focal_length_m: f64,
    /// Focus distance `F` in meters; must exceed the focal length.
    pub focus_distance_m: f64,
    /// F-stop `N` (dimensionless).
    pub f_stop: f64,
    /// Effective pixel pitch `s` in meters at the working resolution.
    pub pixel_pitch_m: f64,
    /// Exposure time in seconds.
    pub exposure_s: f64,
    /// Odd kernel window extent in pixels.
    pub max_window_px: usize,
}

impl CameraConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.focal_length_m > 0.0 && self.focal_length_m.is_finite()) {
            return Err(Error::InvalidCamera(format!(
                "focal_length_m must be positive, got {}",
                self.focal_length_m
            )));
        }
        if !(self.focus_distance_m > self.focal_length_m && self.focus_distance_m.is_finite()) {
            return Err(Error::InvalidCamera(format!(
                "focus_distance_m must exceed focal_length_m, got {} <= {}",
                self.focus_distance_m, self.focal_length_m
            )));
        }
        if !(self.f_stop > 0.0 && self.f_stop.is_finite()) {
            return Err(Error::InvalidCamera(format!(
                "f_stop must be positive, got {}",
                self.f_stop
            )));
        }
        if !(self.pixel_pitch_m > 0.0 && self.pixel_pitch_m.is_finite()) {
            return Err(Error::InvalidCamera(format!(
                "pixel_pitch_m must be positive, got {}",
                self.pixel_pitch_m
            )));
        }
        if !(self.exposure_s > 0.0 && self.exposure_s.is_finite()) {
            return Err(Error::InvalidCamera(format!(
                "exposure_s must be positive, got {}",
                self.exposure_s
            )));
        }
        if self.max_window_px == 0 || self.max_window_px.is_multiple_of(2) {
            return Err(Error::InvalidCamera(format!(
                "max_window_px must be odd and >= 1, got {}",
                self.max_window_px
            )));
        }
        Ok(())
    }

    /// Smallest depth accepted by the CoC model.
    pub fn min_depth_m(&self) -> f64 {
        MIN_DEPTH_FACTOR * self.focal_length_m
    }

    /// CoC limit as `d -> inf`: `f^2 / (N (F - f) s)` in pixels.
    pub fn coc_asymptote_px(&self) -> f64 {
        let f = self.focal_length_m;
        f * f / (self.f_stop * (self.focus_distance_m - f) * self.pixel_pitch_m)
    }

    /// Largest CoC the kernel window can hold; two pixels are reserved so the
    /// fall-off ring stays inside the window.
    pub fn max_coc_px(&self) -> f64 {
        self.max_window_px.saturating_sub(2) as f64
    }

    /// Half extent of the kernel window.
    pub fn window_radius_px(&self) -> usize {
        (self.max_window_px - 1) / 2
    }

    pub fn with_f_stop(&self, f_stop: f64) -> Self {
        Self {
            f_stop,
            ..self.clone()
        }
    }
}

/// Point-spread function family used by the forward model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PsfModel {
    /// Uniform disc of diameter `c` with a one-pixel linear rim fall-off.
    Disc,
    /// Isotropic Gaussian with `sigma = sigma_ratio * c`.
    Gaussian { sigma_ratio: f64 },
}

impl PsfModel {
    pub fn gaussian() -> Self {
        PsfModel::Gaussian {
            sigma_ratio: DEFAULT_GAUSSIAN_SIGMA_RATIO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let PsfModel::Gaussian { sigma_ratio } = self {
            if !(*sigma_ratio > 0.0 && sigma_ratio.is_finite()) {
                return Err(Error::InvalidValue(format!(
                    "gaussian sigma_ratio must be positive, got {sigma_ratio}"
                )));
            }
        }
        Ok(())
    }
}

/// Normalized blur kernel on the camera's window grid.
#[derive(Debug, Clone)]
pub struct PsfKernel {
    /// Side length (== camera `max_window_px`).
    pub side: usize,
    /// Row-major weights, non-negative, summing to 1.
    pub weights: Vec<f64>,
    /// Index of the kernel origin on both axes: `(side - 1) / 2`.
    pub center: usize,
    /// CoC after clamping, in pixels.
    pub coc_px: f64,
    /// True when the requested CoC exceeded the window budget.
    pub clamped: bool,
}

impl PsfKernel {
    #[inline]
    pub fn get(&self, dy: isize, dx: isize) -> f64 {
        let y = self.center as isize + dy;
        let x = self.center as isize + dx;
        if y < 0 || x < 0 || y >= self.side as isize || x >= self.side as isize {
            0.0
        } else {
            self.weights[y as usize * self.side + x as usize]
        }
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

fn check_depth(d: f64, cam: &CameraConfig) -> Result<()> {
    cam.validate()?;
    let min = cam.min_depth_m();
    if !(d.is_finite() && d >= min) {
        return Err(Error::DepthOutOfDomain { depth: d, min });
    }
    Ok(())
}

/// Circle-of-confusion diameter in pixels for a source at depth `d` meters.
pub fn coc_diameter(d: f64, cam: &CameraConfig) -> Result<f64> {
    check_depth(d, cam)?;
    Ok(coc_diameter_unchecked(d, cam))
}

#[inline]
pub(crate) fn coc_diameter_unchecked(d: f64, cam: &CameraConfig) -> f64 {
    let f = cam.focal_length_m;
    (f * f / cam.f_stop) * (d - cam.focus_distance_m).abs()
        / (d * (cam.focus_distance_m - f) * cam.pixel_pitch_m)
}

/// Analytic `dc/dd` in pixels per meter.
///
/// The CoC has a kink at `d == F`; exactly at the focus distance the
/// right-limit value is returned (`sign(0)` treated as `+1`).
pub fn coc_derivative(d: f64, cam: &CameraConfig) -> Result<f64> {
    check_depth(d, cam)?;
    Ok(coc_derivative_unchecked(d, cam))
}

#[inline]
pub(crate) fn coc_derivative_unchecked(d: f64, cam: &CameraConfig) -> f64 {
    let f = cam.focal_length_m;
    let side = if d >= cam.focus_distance_m { 1.0 } else { -1.0 };
    side * f * f * cam.focus_distance_m
        / (cam.f_stop * (cam.focus_distance_m - f) * cam.pixel_pitch_m * d * d)
}

/// Unnormalized disc weight at radius `m` pixels for CoC `c` pixels.
///
/// 1 inside the disc, linear fall-off over the one-pixel rim, 0 outside.
/// Continuous in both arguments.
#[inline]
pub fn disc_weight(m: f64, c: f64) -> f64 {
    if m <= (c - 1.0) / 2.0 {
        1.0
    } else if m <= (c + 1.0) / 2.0 {
        (c + 1.0) / 2.0 - m
    } else {
        0.0
    }
}

/// Per-branch derivative of `disc_weight` with respect to `c`.
///
/// Measure-zero branch boundaries take the fall-off slope.
#[inline]
pub(crate) fn disc_weight_dc(m: f64, c: f64) -> f64 {
    if m <= (c - 1.0) / 2.0 {
        0.0
    } else if m <= (c + 1.0) / 2.0 {
        0.5
    } else {
        0.0
    }
}

/// Below this CoC the Gaussian kernel degenerates to a delta with zero
/// gradient; avoids 0 * inf in the weight derivative.
pub(crate) const GAUSSIAN_DELTA_COC: f64 = 1e-3;

#[inline]
pub(crate) fn gaussian_weight(m: f64, c: f64, sigma_ratio: f64) -> f64 {
    if c < GAUSSIAN_DELTA_COC {
        return if m == 0.0 { 1.0 } else { 0.0 };
    }
    let sigma = sigma_ratio * c;
    (-m * m / (2.0 * sigma * sigma)).exp()
}

#[inline]
pub(crate) fn gaussian_weight_dc(m: f64, c: f64, sigma_ratio: f64) -> f64 {
    if c < GAUSSIAN_DELTA_COC {
        return 0.0;
    }
    let sigma = sigma_ratio * c;
    let w = (-m * m / (2.0 * sigma * sigma)).exp();
    if w == 0.0 {
        0.0
    } else {
        w * m * m / (sigma * sigma * c)
    }
}

/// Clamp a raw CoC to the window budget. Returns `(coc, clamped)`.
#[inline]
pub(crate) fn clamp_coc(c_raw: f64, cam: &CameraConfig) -> (f64, bool) {
    let cap = cam.max_coc_px();
    if c_raw > cap {
        (cap, true)
    } else {
        (c_raw, false)
    }
}

/// Build the normalized PSF kernel for a source at depth `d`.
///
/// The CoC is clamped to `max_window_px - 2`; `PsfKernel::clamped` reports
/// when that happened.
pub fn build_kernel(d: f64, cam: &CameraConfig, model: &PsfModel) -> Result<PsfKernel> {
    model.validate()?;
    let c_raw = coc_diameter(d, cam)?;
    let (c, clamped) = clamp_coc(c_raw, cam);
    let side = cam.max_window_px;
    let center = cam.window_radius_px();
    let mut weights = vec![0.0f64; side * side];
    let mut sum = 0.0f64;
    for y in 0..side {
        for x in 0..side {
            let dy = y as f64 - center as f64;
            let dx = x as f64 - center as f64;
            let m = (dy * dy + dx * dx).sqrt();
            let w = match model {
                PsfModel::Disc => disc_weight(m, c),
                PsfModel::Gaussian { sigma_ratio } => gaussian_weight(m, c, *sigma_ratio),
            };
            weights[y * side + x] = w;
            sum += w;
        }
    }
    for w in &mut weights {
        *w /= sum;
    }
    Ok(PsfKernel {
        side,
        weights,
        center,
        coc_px: c,
        clamped,
    })
}
