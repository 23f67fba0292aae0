//! Differentiable parameterizations of the relative depth map.
//!
//! These stand in for a generative depth prior: a parameter vector decodes to
//! a relative depth map in [0, 1] and exposes the matching vector-Jacobian
//! product. Latent-like parameterizations keep their vector on the sqrt(M)
//! sphere via [`renormalize_latent`] after every optimizer step.
//!
//! An external prior can be plugged over a forward-only line protocol
//! (newline-delimited JSON on standard streams, request
//! `{"image_path": ..., "latent": [...]}` / response `{"depth_path": ...}`);
//! that protocol is documented here but intentionally not implemented, and it
//! carries no gradients.

use crate::error::{Error, Result};
use crate::image::DepthMap;

/// Differentiable map from a parameter vector to a relative depth map.
pub trait DepthParameterization {
    /// Length of the parameter vector.
    fn param_dim(&self) -> usize;

    /// Output map shape (height, width).
    fn shape(&self) -> (usize, usize);

    /// Decode parameters into relative depth; every value lies in [0, 1].
    fn decode(&self, params: &[f64]) -> Result<DepthMap>;

    /// Pull a depth-shaped upstream gradient back onto the parameters.
    fn vjp(&self, params: &[f64], upstream: &[f64]) -> Result<Vec<f64>>;

    /// Whether the parameter vector should be kept on the sqrt(M) sphere.
    fn latent_like(&self) -> bool {
        false
    }

    /// Optional post-step projection hook; the default is a no-op.
    fn renormalize(&self, params: &mut [f64]) -> Result<()> {
        if self.latent_like() {
            renormalize_latent(params, self.param_dim())?;
        }
        Ok(())
    }

    fn check_len(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_dim() {
            return Err(Error::DimensionMismatch(format!(
                "parameter length {} != expected {}",
                params.len(),
                self.param_dim()
            )));
        }
        Ok(())
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One unconstrained logit per pixel; decode is an elementwise sigmoid.
#[derive(Debug, Clone)]
pub struct PixelPrior {
    height: usize,
    width: usize,
    /// Default smoothness weight a solve config may copy.
    pub tv_weight: f64,
}

impl PixelPrior {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            tv_weight: 1e-3,
        }
    }
}

impl DepthParameterization for PixelPrior {
    fn param_dim(&self) -> usize {
        self.height * self.width
    }

    fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn decode(&self, params: &[f64]) -> Result<DepthMap> {
        self.check_len(params)?;
        DepthMap::from_vec(
            self.height,
            self.width,
            params.iter().map(|p| sigmoid(*p)).collect(),
        )
    }

    fn vjp(&self, params: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        self.check_len(params)?;
        if upstream.len() != params.len() {
            return Err(Error::DimensionMismatch("upstream length mismatch".into()));
        }
        Ok(params
            .iter()
            .zip(upstream)
            .map(|(p, u)| {
                let s = sigmoid(*p);
                u * s * (1.0 - s)
            })
            .collect())
    }
}

/// Coarse control grid, bilinearly upsampled then squashed; emulates a
/// low-dimensional latent. Can opt in to sqrt(M) sphere projection.
#[derive(Debug, Clone)]
pub struct GridPrior {
    ctrl_h: usize,
    ctrl_w: usize,
    out_h: usize,
    out_w: usize,
    latent: bool,
}

impl GridPrior {
    pub fn new(ctrl_h: usize, ctrl_w: usize, out_h: usize, out_w: usize) -> Result<Self> {
        if ctrl_h == 0 || ctrl_w == 0 || out_h == 0 || out_w == 0 {
            return Err(Error::DimensionMismatch(
                "grid prior sizes must be positive".into(),
            ));
        }
        Ok(Self {
            ctrl_h,
            ctrl_w,
            out_h,
            out_w,
            latent: false,
        })
    }

    /// Keep the control vector on the sqrt(M) sphere during optimization.
    pub fn with_latent_norm(mut self, latent: bool) -> Self {
        self.latent = latent;
        self
    }

    /// Source coordinate and interpolation weight for output index `i`
    /// (align-corners mapping).
    #[inline]
    fn axis(out: usize, ctrl: usize, i: usize) -> (usize, usize, f64) {
        if ctrl == 1 || out == 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (ctrl - 1) as f64 / (out - 1) as f64;
        let lo = (pos.floor() as usize).min(ctrl - 2);
        (lo, lo + 1, pos - lo as f64)
    }
}

impl DepthParameterization for GridPrior {
    fn param_dim(&self) -> usize {
        self.ctrl_h * self.ctrl_w
    }

    fn shape(&self) -> (usize, usize) {
        (self.out_h, self.out_w)
    }

    fn decode(&self, params: &[f64]) -> Result<DepthMap> {
        self.check_len(params)?;
        let mut data = vec![0.0; self.out_h * self.out_w];
        for y in 0..self.out_h {
            let (y0, y1, fy) = Self::axis(self.out_h, self.ctrl_h, y);
            for x in 0..self.out_w {
                let (x0, x1, fx) = Self::axis(self.out_w, self.ctrl_w, x);
                let v00 = params[y0 * self.ctrl_w + x0];
                let v01 = params[y0 * self.ctrl_w + x1];
                let v10 = params[y1 * self.ctrl_w + x0];
                let v11 = params[y1 * self.ctrl_w + x1];
                let v = v00 * (1.0 - fy) * (1.0 - fx)
                    + v01 * (1.0 - fy) * fx
                    + v10 * fy * (1.0 - fx)
                    + v11 * fy * fx;
                data[y * self.out_w + x] = sigmoid(v);
            }
        }
        DepthMap::from_vec(self.out_h, self.out_w, data)
    }

    fn vjp(&self, params: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        self.check_len(params)?;
        if upstream.len() != self.out_h * self.out_w {
            return Err(Error::DimensionMismatch("upstream length mismatch".into()));
        }
        let mut grad = vec![0.0; params.len()];
        for y in 0..self.out_h {
            let (y0, y1, fy) = Self::axis(self.out_h, self.ctrl_h, y);
            for x in 0..self.out_w {
                let (x0, x1, fx) = Self::axis(self.out_w, self.ctrl_w, x);
                let v00 = params[y0 * self.ctrl_w + x0];
                let v01 = params[y0 * self.ctrl_w + x1];
                let v10 = params[y1 * self.ctrl_w + x0];
                let v11 = params[y1 * self.ctrl_w + x1];
                let v = v00 * (1.0 - fy) * (1.0 - fx)
                    + v01 * (1.0 - fy) * fx
                    + v10 * fy * (1.0 - fx)
                    + v11 * fy * fx;
                let s = sigmoid(v);
                let g = upstream[y * self.out_w + x] * s * (1.0 - s);
                grad[y0 * self.ctrl_w + x0] += g * (1.0 - fy) * (1.0 - fx);
                grad[y0 * self.ctrl_w + x1] += g * (1.0 - fy) * fx;
                grad[y1 * self.ctrl_w + x0] += g * fy * (1.0 - fx);
                grad[y1 * self.ctrl_w + x1] += g * fy * fx;
            }
        }
        Ok(grad)
    }

    fn latent_like(&self) -> bool {
        self.latent
    }
}

/// Rescale `params` to L2 norm `sqrt(target_dim)` in place. Idempotent and
/// direction-preserving; errors on a zero-norm input.
pub fn renormalize_latent(params: &mut [f64], target_dim: usize) -> Result<()> {
    let norm = params.iter().map(|p| p * p).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::InvalidValue(format!(
            "cannot renormalize vector of norm {norm}"
        )));
    }
    let scale = (target_dim as f64).sqrt() / norm;
    for p in params.iter_mut() {
        *p *= scale;
    }
    Ok(())
}

/// Anisotropic total variation of a relative depth map, with its subgradient
/// (zero at exact ties).
pub fn tv_penalty(depth: &DepthMap, weight: f64) -> (f64, Vec<f64>) {
    let (h, w) = (depth.height(), depth.width());
    let d = depth.data();
    let mut value = 0.0f64;
    let mut grad = vec![0.0f64; h * w];
    let sgn = |x: f64| -> f64 {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                let diff = d[i + 1] - d[i];
                value += diff.abs();
                let s = sgn(diff);
                grad[i + 1] += weight * s;
                grad[i] -= weight * s;
            }
            if y + 1 < h {
                let diff = d[i + w] - d[i];
                value += diff.abs();
                let s = sgn(diff);
                grad[i + w] += weight * s;
                grad[i] -= weight * s;
            }
        }
    }
    (weight * value, grad)
}
