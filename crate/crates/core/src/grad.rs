//! Analytic reverse-mode gradients of the forward model with respect to the
//! depth map, and a finite-difference verification harness.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{DepthMap, ImageBuffer};
use crate::optics::{CameraConfig, PsfModel};
use crate::render::{render_backward, render_forward, RenderPlan};

/// Outcome of a finite-difference comparison run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    pub num_points: usize,
    /// Relative step: each probe uses `step * depth` meters.
    pub step: f64,
}

/// Gradient of `<upstream, render_blur(aif, depth)>` with respect to `depth`,
/// returned row-major with the depth map's shape.
pub fn render_blur_vjp(
    aif: &ImageBuffer,
    depth: &DepthMap,
    cam: &CameraConfig,
    model: &PsfModel,
    upstream: &ImageBuffer,
) -> Result<Vec<f64>> {
    if aif.height() != depth.height() || aif.width() != depth.width() {
        return Err(Error::DimensionMismatch(
            "aif and depth shapes differ".into(),
        ));
    }
    if !upstream.same_shape(aif) {
        return Err(Error::DimensionMismatch(
            "upstream must match the rendered shape".into(),
        ));
    }
    let plan = RenderPlan::new(depth, cam, model)?;
    let (out, den) = render_forward(&plan, aif);
    Ok(render_backward(&plan, aif, &out, &den, upstream))
}

/// Squared L2 loss `||pred - obs||^2` and its gradient `2 (pred - obs)`.
pub fn loss_and_grad(pred: &ImageBuffer, obs: &ImageBuffer) -> Result<(f64, ImageBuffer)> {
    if !pred.same_shape(obs) {
        return Err(Error::DimensionMismatch(
            "loss operands must share a shape".into(),
        ));
    }
    let mut loss = 0.0f64;
    let mut grad = vec![0.0f64; pred.data().len()];
    for (g, (p, o)) in grad.iter_mut().zip(pred.data().iter().zip(obs.data())) {
        let r = p - o;
        loss += r * r;
        *g = 2.0 * r;
    }
    let grad = ImageBuffer::from_signed(pred.height(), pred.width(), pred.channels(), grad)?;
    Ok((loss, grad))
}

/// Compare the analytic depth gradient against central differences of the
/// full scalar pipeline `d -> ||render(aif, d) - obs||^2` at randomly chosen
/// pixels. Pixels within `2 * step * d` of the focus distance are skipped
/// (the CoC kink).
///
/// `step` is relative: the probe at pixel depth `d` uses `step * d` meters.
pub fn finite_diff_check(
    aif: &ImageBuffer,
    depth: &DepthMap,
    cam: &CameraConfig,
    model: &PsfModel,
    probes: usize,
    step: f64,
    seed: u64,
) -> Result<GradReport> {
    if probes == 0 {
        return Err(Error::InvalidValue("probes must be >= 1".into()));
    }
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::InvalidValue("step must be positive".into()));
    }

    // Reference observation: a fixed target so the loss is generic (zero
    // target would make the gradient degenerate at dark pixels).
    let obs = ImageBuffer::zeros(aif.height(), aif.width(), aif.channels());
    let loss_of = |d: &DepthMap| -> Result<f64> {
        let pred = crate::render::render_blur(aif, d, cam, model)?;
        Ok(loss_and_grad(&pred, &obs)?.0)
    };

    let pred = crate::render::render_blur(aif, depth, cam, model)?;
    let (_, upstream) = loss_and_grad(&pred, &obs)?;
    let analytic = render_blur_vjp(aif, depth, cam, model, &upstream)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = depth.data().len();
    let order = sample(&mut rng, n, n);

    let mut max_rel = 0.0f64;
    let mut sum_rel = 0.0f64;
    let mut used = 0usize;
    for idx in order {
        if used >= probes {
            break;
        }
        let d = depth.data()[idx];
        let h = step * d;
        if (d - cam.focus_distance_m).abs() < 2.0 * h {
            continue;
        }
        let mut plus = depth.clone();
        plus.data_mut()[idx] = d + h;
        let mut minus = depth.clone();
        minus.data_mut()[idx] = d - h;
        let fd = (loss_of(&plus)? - loss_of(&minus)?) / (2.0 * h);
        let an = analytic[idx];
        let denom = an.abs().max(fd.abs());
        let rel = if denom < 1e-9 {
            0.0
        } else {
            (an - fd).abs() / denom
        };
        max_rel = max_rel.max(rel);
        sum_rel += rel;
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidValue(
            "no probe pixel was far enough from the focus distance".into(),
        ));
    }
    Ok(GradReport {
        max_rel_error: max_rel,
        mean_rel_error: sum_rel / used as f64,
        num_points: used,
        step,
    })
}
