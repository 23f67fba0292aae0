//! Inference-time optimization recovering metric depth from a capture pair.
//!
//! The relative depth map comes from a pluggable parameterization; the metric
//! map is a bounded affine transform of it. Both the affine parameters and
//! the prior parameters follow adaptive-moment gradient descent on the
//! defocus reprojection loss, with optional sphere projection of latent-like
//! parameter vectors after every step. The returned iterate is the one with
//! the lowest recorded loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::loss_and_grad;
use crate::image::DepthMap;
use crate::optics::PsfModel;
use crate::prior::{tv_penalty, DepthParameterization};
use crate::render::{render_backward, render_forward, CapturePair, RenderPlan};

/// Bounded learnable affine map from relative to metric depth:
/// `alpha = s_max * sigmoid(a)`, `beta = s_min * sigmoid(b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineScale {
    pub a: f64,
    pub b: f64,
    pub s_min: f64,
    pub s_max: f64,
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

impl AffineScale {
    /// Neutral parameters (`a = b = 0`) for the given scene bounds.
    pub fn new(s_min: f64, s_max: f64) -> Result<Self> {
        if !(s_max > s_min && s_min > 0.0 && s_max.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "scene bounds must satisfy s_max > s_min > 0, got ({s_min}, {s_max})"
            )));
        }
        Ok(Self {
            a: 0.0,
            b: 0.0,
            s_min,
            s_max,
        })
    }

    pub fn with_params(mut self, a: f64, b: f64) -> Self {
        self.a = a;
        self.b = b;
        self
    }

    /// Sigmoid preimages of the requested scale and offset, clamped to
    /// |a|, |b| <= 20. Fails when `alpha0` is outside `(0, s_max)` or
    /// `beta0` outside `(0, s_min)`.
    pub fn from_alpha_beta(alpha0: f64, beta0: f64, s_min: f64, s_max: f64) -> Result<Self> {
        let base = Self::new(s_min, s_max)?;
        if !(alpha0 > 0.0 && alpha0 < s_max) {
            return Err(Error::InvalidValue(format!(
                "alpha0 {alpha0} outside (0, {s_max})"
            )));
        }
        if !(beta0 > 0.0 && beta0 < s_min) {
            return Err(Error::InvalidValue(format!(
                "beta0 {beta0} outside (0, {s_min})"
            )));
        }
        let logit = |r: f64| (r / (1.0 - r)).ln().clamp(-20.0, 20.0);
        Ok(base.with_params(logit(alpha0 / s_max), logit(beta0 / s_min)))
    }

    pub fn alpha(&self) -> f64 {
        self.s_max * sigmoid(self.a)
    }

    pub fn beta(&self) -> f64 {
        self.s_min * sigmoid(self.b)
    }
}

/// Hyperparameters of one solve run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveConfig {
    pub iters: usize,
    pub lr_prior: f64,
    pub lr_affine: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub tv_weight: f64,
    pub psf_model: PsfModel,
    pub seed: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            iters: 200,
            lr_prior: 1.5e-3,
            lr_affine: 5e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            tv_weight: 1e-3,
            psf_model: PsfModel::Disc,
            seed: 0,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::InvalidValue("iters must be >= 1".into()));
        }
        if !(self.lr_prior > 0.0 && self.lr_affine > 0.0) {
            return Err(Error::InvalidValue(
                "learning rates must be positive".into(),
            ));
        }
        if self.tv_weight < 0.0 {
            return Err(Error::InvalidValue("tv_weight must be >= 0".into()));
        }
        self.psf_model.validate()
    }
}

/// Best-loss iterate of a solve run.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub metric_depth: DepthMap,
    pub relative_depth: DepthMap,
    pub alpha: f64,
    pub beta: f64,
    pub loss_trace: Vec<f64>,
    pub iters_run: usize,
}

/// Per-iteration view handed to an observer; parameters are the values the
/// loss was evaluated at.
pub struct IterationSnapshot<'a> {
    pub iter: usize,
    pub loss: f64,
    pub params: &'a [f64],
    pub affine: &'a AffineScale,
}

/// Elementwise `alpha * rel + beta`. Errors when the relative map leaves
/// [0, 1].
pub fn metric_depth(rel: &DepthMap, aff: &AffineScale) -> Result<DepthMap> {
    if let Some(v) = rel.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidValue(format!(
            "relative depth {v} outside [0, 1]"
        )));
    }
    let (alpha, beta) = (aff.alpha(), aff.beta());
    DepthMap::from_vec(
        rel.height(),
        rel.width(),
        rel.data().iter().map(|v| alpha * v + beta).collect(),
    )
}

/// Defocus reprojection objective: squared L2 between the observed blurred
/// capture and the re-rendered one, plus `tv_weight` times the total
/// variation of the relative map when one is supplied.
///
/// Assumes the pair is already energy-normalized.
pub fn objective(
    pair: &CapturePair,
    metric: &DepthMap,
    rel: Option<&DepthMap>,
    cfg: &SolveConfig,
) -> Result<f64> {
    cfg.validate()?;
    let pred = crate::render::render_blur(
        &pair.aif.image,
        metric,
        &pair.blurred.config,
        &cfg.psf_model,
    )?;
    let (data, _) = loss_and_grad(&pred, &pair.blurred.image)?;
    let tv = rel.map(|r| tv_penalty(r, cfg.tv_weight).0).unwrap_or(0.0);
    Ok(data + tv)
}

/// Scalar Adam state for a fixed-size parameter block.
struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(lr: f64, cfg: &SolveConfig, n: usize) -> Self {
        Self {
            lr,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Run the optimization, updating both the prior parameters and the affine
/// scale. See [`solve_with_observer`] for the instrumented variant.
pub fn solve<P: DepthParameterization + ?Sized>(
    pair: &CapturePair,
    prior: &P,
    init_params: &[f64],
    aff0: &AffineScale,
    cfg: &SolveConfig,
) -> Result<SolveResult> {
    solve_with_observer(pair, prior, init_params, aff0, cfg, true, |_| {})
}

/// Full solve loop with a per-iteration observer and a switch to freeze the
/// prior parameters (used by the initialization sweep).
pub fn solve_with_observer<P, F>(
    pair: &CapturePair,
    prior: &P,
    init_params: &[f64],
    aff0: &AffineScale,
    cfg: &SolveConfig,
    optimize_prior: bool,
    mut observer: F,
) -> Result<SolveResult>
where
    P: DepthParameterization + ?Sized,
    F: FnMut(&IterationSnapshot<'_>),
{
    cfg.validate()?;
    prior.check_len(init_params)?;
    let (ph, pw) = prior.shape();
    if ph != pair.aif.image.height() || pw != pair.aif.image.width() {
        return Err(Error::DimensionMismatch(format!(
            "prior decodes to {ph}x{pw} but images are {}x{}",
            pair.aif.image.height(),
            pair.aif.image.width()
        )));
    }

    let mut params = init_params.to_vec();
    let mut aff = aff0.clone();
    let mut adam_prior = Adam::new(cfg.lr_prior, cfg, params.len());
    let mut adam_affine = Adam::new(cfg.lr_affine, cfg, 2);

    let mut best_loss = f64::INFINITY;
    let mut best_params = params.clone();
    let mut best_aff = aff.clone();
    let mut trace = Vec::with_capacity(cfg.iters);

    for iter in 0..cfg.iters {
        let rel = prior.decode(&params)?;
        let metric = metric_depth(&rel, &aff)?;
        let plan = RenderPlan::new(&metric, &pair.blurred.config, &cfg.psf_model)?;
        let (pred, den) = render_forward(&plan, &pair.aif.image);
        let (data_loss, upstream) = loss_and_grad(&pred, &pair.blurred.image)?;
        let (tv_loss, tv_grad) = tv_penalty(&rel, cfg.tv_weight);
        let loss = data_loss + tv_loss;

        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iter, loss });
        }
        trace.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best_params.copy_from_slice(&params);
            best_aff = aff.clone();
        }
        observer(&IterationSnapshot {
            iter,
            loss,
            params: &params,
            affine: &aff,
        });

        let grad_metric = render_backward(&plan, &pair.aif.image, &pred, &den, &upstream);

        // Chain through the affine map: d_m = alpha * rel + beta.
        let (alpha, beta_sig) = (aff.alpha(), sigmoid(aff.b));
        let alpha_sig = sigmoid(aff.a);
        let grad_sum: f64 = grad_metric.iter().sum();
        let grad_dot_rel: f64 = grad_metric.iter().zip(rel.data()).map(|(g, r)| g * r).sum();
        let grad_a = aff.s_max * alpha_sig * (1.0 - alpha_sig) * grad_dot_rel;
        let grad_b = aff.s_min * beta_sig * (1.0 - beta_sig) * grad_sum;

        if optimize_prior {
            let grad_rel: Vec<f64> = grad_metric
                .iter()
                .zip(&tv_grad)
                .map(|(g, t)| alpha * g + t)
                .collect();
            let grad_params = prior.vjp(&params, &grad_rel)?;
            adam_prior.step(&mut params, &grad_params);
            prior.renormalize(&mut params)?;
        }

        let mut ab = [aff.a, aff.b];
        adam_affine.step(&mut ab, &[grad_a, grad_b]);
        aff.a = ab[0];
        aff.b = ab[1];
    }

    let relative_depth = prior.decode(&best_params)?;
    let metric = metric_depth(&relative_depth, &best_aff)?;
    Ok(SolveResult {
        metric_depth: metric,
        relative_depth,
        alpha: best_aff.alpha(),
        beta: best_aff.beta(),
        loss_trace: trace,
        iters_run: cfg.iters,
    })
}

/// One cell of an initialization sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub alpha0: f64,
    pub beta0: f64,
    pub delta1: f64,
}

/// Grid-search over affine initializations with frozen prior parameters,
/// scoring each run by the delta_1 accuracy against the ground truth.
///
/// Grid values are absolute: `alpha0` in `(0, s_max)`, `beta0` in
/// `(0, s_min)`; each cell starts from the sigmoid preimages of its values.
#[allow(clippy::too_many_arguments)]
pub fn grid_init_sweep<P: DepthParameterization + ?Sized>(
    pair: &CapturePair,
    prior: &P,
    frozen_params: &[f64],
    gt: &DepthMap,
    cfg: &SolveConfig,
    s_min: f64,
    s_max: f64,
    alpha_grid: &[f64],
    beta_grid: &[f64],
) -> Result<Vec<SweepCell>> {
    if alpha_grid.is_empty() || beta_grid.is_empty() {
        return Err(Error::InvalidValue(
            "initialization grids must be non-empty".into(),
        ));
    }
    let mut cells = Vec::with_capacity(alpha_grid.len() * beta_grid.len());
    for &alpha0 in alpha_grid {
        for &beta0 in beta_grid {
            let aff0 = AffineScale::from_alpha_beta(alpha0, beta0, s_min, s_max)?;
            let result =
                solve_with_observer(pair, prior, frozen_params, &aff0, cfg, false, |_| {})?;
            let report = crate::eval::compute_metrics(&result.metric_depth, gt)?;
            cells.push(SweepCell {
                alpha0,
                beta0,
                delta1: report.delta1,
            });
        }
    }
    Ok(cells)
}
