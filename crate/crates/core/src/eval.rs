//! Depth metric suite and calibrated reprojection between a predicted depth
//! map and a ground-truth depth camera.
//!
//! Metrics follow the usual monocular-depth conventions: RMSE, absolute
//! relative error, mean log10 error, and the delta_n accuracy thresholds,
//! evaluated only where both maps carry non-zero depth. Alignment unprojects
//! the prediction, applies a rigid transform, and re-projects it into the
//! ground-truth camera with nearest-pixel z-buffered splatting.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::DepthMap;

/// Pinhole intrinsics with optional radial/tangential distortion
/// coefficients `[k1, k2, p1, p2, k3]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distortion: Option<[f64; 5]>,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "focal lengths must be positive, got ({fx}, {fy})"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            distortion: None,
        })
    }
}

/// Rotation plus translation; the rotation must be orthonormal with
/// determinant +1 (both within 1e-9).
#[derive(Debug, Clone)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram = rotation.transpose() * rotation;
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        if ortho_err > 1e-9 {
            return Err(Error::InvalidValue(format!(
                "rotation is not orthonormal (max |R^T R - I| = {ortho_err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidValue(format!(
                "rotation determinant {det} != +1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Build from a row-major 9-element rotation and a 3-vector translation,
    /// the layout used by the extrinsics JSON files.
    pub fn from_row_major(rotation: &[f64; 9], translation: &[f64; 3]) -> Result<Self> {
        let r = Matrix3::from_row_slice(rotation);
        Self::new(
            r,
            Vector3::new(translation[0], translation[1], translation[2]),
        )
    }
}

/// Serialized form of [`RigidTransform`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtrinsicsJson {
    /// Row-major 3x3 rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl TryFrom<&ExtrinsicsJson> for RigidTransform {
    type Error = Error;

    fn try_from(e: &ExtrinsicsJson) -> Result<Self> {
        RigidTransform::from_row_major(&e.rotation, &e.translation)
    }
}

/// Depth accuracy report over the valid mask.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub rel: f64,
    pub log10: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub valid_pixels: usize,
}

/// Compute RMSE, REL, log10 and delta thresholds of `pred` against `gt`,
/// restricted to pixels where both maps are non-zero.
pub fn compute_metrics(pred: &DepthMap, gt: &DepthMap) -> Result<MetricsReport> {
    if !pred.same_shape(gt) {
        return Err(Error::DimensionMismatch(
            "metric maps must share a shape".into(),
        ));
    }
    let mut n = 0usize;
    let mut se = 0.0f64;
    let mut rel = 0.0f64;
    let mut log10 = 0.0f64;
    let mut d1 = 0usize;
    let mut d2 = 0usize;
    let mut d3 = 0usize;
    for (p, g) in pred.data().iter().zip(gt.data()) {
        if *p <= 0.0 || *g <= 0.0 {
            continue;
        }
        n += 1;
        let diff = g - p;
        se += diff * diff;
        rel += diff.abs() / g;
        log10 += (g.log10() - p.log10()).abs();
        let ratio = (g / p).max(p / g);
        if ratio < 1.25 {
            d1 += 1;
        }
        if ratio < 1.25f64.powi(2) {
            d2 += 1;
        }
        if ratio < 1.25f64.powi(3) {
            d3 += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let nf = n as f64;
    Ok(MetricsReport {
        rmse: (se / nf).sqrt(),
        rel: rel / nf,
        log10: log10 / nf,
        delta1: d1 as f64 / nf,
        delta2: d2 as f64 / nf,
        delta3: d3 as f64 / nf,
        valid_pixels: n,
    })
}

/// Unproject valid pixels to 3-D points (`z` equals the depth value), in
/// row-major pixel order.
pub fn unproject(depth: &DepthMap, k: &Intrinsics) -> Result<Vec<Vector3<f64>>> {
    if !(k.fx > 0.0 && k.fy > 0.0) {
        return Err(Error::InvalidValue("singular intrinsics".into()));
    }
    let mut cloud = Vec::with_capacity(depth.valid_count());
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            let d = depth.get(y, x);
            if d <= 0.0 {
                continue;
            }
            cloud.push(Vector3::new(
                d * (x as f64 - k.cx) / k.fx,
                d * (y as f64 - k.cy) / k.fy,
                d,
            ));
        }
    }
    Ok(cloud)
}

/// Apply `p' = R p + t` to every point.
pub fn transform_points(cloud: &[Vector3<f64>], t: &RigidTransform) -> Vec<Vector3<f64>> {
    cloud
        .iter()
        .map(|p| t.rotation * p + t.translation)
        .collect()
}

/// Result of splatting a point cloud into a depth image.
#[derive(Debug, Clone)]
pub struct Projection {
    pub depth: DepthMap,
    /// Points that fell outside the image or behind the camera.
    pub dropped: usize,
}

/// Project points into a depth map of the given shape with nearest-pixel
/// z-buffering (the nearest surface wins). Untouched pixels stay 0/invalid.
pub fn project_depth(
    cloud: &[Vector3<f64>],
    k: &Intrinsics,
    out_shape: (usize, usize),
) -> Result<Projection> {
    let (h, w) = out_shape;
    let mut data = vec![0.0f64; h * w];
    let mut dropped = 0usize;
    for p in cloud {
        if p.z <= 0.0 {
            dropped += 1;
            continue;
        }
        let u = (k.fx * p.x / p.z + k.cx).round();
        let v = (k.fy * p.y / p.z + k.cy).round();
        if u < 0.0 || v < 0.0 || u >= w as f64 || v >= h as f64 {
            dropped += 1;
            continue;
        }
        let idx = v as usize * w + u as usize;
        if data[idx] == 0.0 || p.z < data[idx] {
            data[idx] = p.z;
        }
    }
    Ok(Projection {
        depth: DepthMap::from_vec(h, w, data)?,
        dropped,
    })
}

/// Resample a depth map so the distortion given in `k` is removed
/// (nearest-neighbor inverse warp; identity when no coefficients are set).
pub fn undistort_depth(depth: &DepthMap, k: &Intrinsics) -> DepthMap {
    let Some(coeffs) = k.distortion else {
        return depth.clone();
    };
    let [k1, k2, p1, p2, k3] = coeffs;
    let (h, w) = (depth.height(), depth.width());
    let mut data = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            // Undistorted pixel -> normalized coordinates -> distort ->
            // sample the recorded (distorted) map.
            let xn = (x as f64 - k.cx) / k.fx;
            let yn = (y as f64 - k.cy) / k.fy;
            let r2 = xn * xn + yn * yn;
            let radial = 1.0 + k1 * r2 + k2 * r2 * r2 + k3 * r2 * r2 * r2;
            let xd = xn * radial + 2.0 * p1 * xn * yn + p2 * (r2 + 2.0 * xn * xn);
            let yd = yn * radial + p1 * (r2 + 2.0 * yn * yn) + 2.0 * p2 * xn * yn;
            let u = (xd * k.fx + k.cx).round();
            let v = (yd * k.fy + k.cy).round();
            if u >= 0.0 && v >= 0.0 && (u as usize) < w && (v as usize) < h {
                data[y * w + x] = depth.get(v as usize, u as usize);
            }
        }
    }
    DepthMap::from_vec(h, w, data).expect("undistortion preserves validity")
}

/// Align `pred` into the ground-truth camera frame and evaluate it there.
///
/// The ground-truth map is undistorted first when its intrinsics carry
/// distortion coefficients.
pub fn evaluate_aligned(
    pred: &DepthMap,
    pred_k: &Intrinsics,
    gt: &DepthMap,
    gt_k: &Intrinsics,
    t: &RigidTransform,
) -> Result<MetricsReport> {
    let gt_clean = undistort_depth(gt, gt_k);
    let cloud = unproject(pred, pred_k)?;
    let moved = transform_points(&cloud, t);
    let projected = project_depth(&moved, gt_k, (gt.height(), gt.width()))?;
    compute_metrics(&projected.depth, &gt_clean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_depth(h: usize, w: usize, seed: u64) -> DepthMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DepthMap::from_vec(
            h,
            w,
            (0..h * w).map(|_| rng.random_range(0.5..4.0)).collect(),
        )
        .unwrap()
    }

    /// Plain per-pixel scalar loop, kept deliberately separate from the
    /// production implementation.
    fn metrics_oracle(pred: &DepthMap, gt: &DepthMap) -> MetricsReport {
        let mut vals = Vec::new();
        for i in 0..pred.data().len() {
            let (p, g) = (pred.data()[i], gt.data()[i]);
            if p > 0.0 && g > 0.0 {
                vals.push((p, g));
            }
        }
        let n = vals.len() as f64;
        let rmse = (vals.iter().map(|(p, g)| (g - p) * (g - p)).sum::<f64>() / n).sqrt();
        let rel = vals.iter().map(|(p, g)| (g - p).abs() / g).sum::<f64>() / n;
        let log10 = vals
            .iter()
            .map(|(p, g)| (g.log10() - p.log10()).abs())
            .sum::<f64>()
            / n;
        let frac = |t: f64| vals.iter().filter(|(p, g)| (g / p).max(p / g) < t).count() as f64 / n;
        MetricsReport {
            rmse,
            rel,
            log10,
            delta1: frac(1.25),
            delta2: frac(1.5625),
            delta3: frac(1.953125),
            valid_pixels: vals.len(),
        }
    }

    #[test]
    fn identical_maps_are_perfect() {
        let d = random_depth(8, 8, 1);
        let r = compute_metrics(&d, &d).unwrap();
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.rel, 0.0);
        assert_eq!(r.log10, 0.0);
        assert_eq!((r.delta1, r.delta2, r.delta3), (1.0, 1.0, 1.0));
        assert_eq!(r.valid_pixels, 64);
    }

    #[test]
    fn hand_computed_constant_case() {
        let gt = DepthMap::constant(4, 4, 2.0).unwrap();
        let pred = DepthMap::constant(4, 4, 2.6).unwrap();
        let r = compute_metrics(&pred, &gt).unwrap();
        assert!((r.rel - 0.3).abs() < 1e-12);
        assert!((r.rmse - 0.6).abs() < 1e-12);
        assert_eq!(r.delta1, 0.0); // 1.3 > 1.25
        assert_eq!(r.delta2, 1.0); // 1.3 < 1.5625
        assert_eq!(r.delta3, 1.0);
        assert!((r.log10 - (2.6f64.log10() - 2.0f64.log10())).abs() < 1e-12);
    }

    #[test]
    fn matches_scalar_oracle_exactly() {
        for seed in 0..10u64 {
            let mut pred = random_depth(8, 8, seed * 2 + 10);
            let gt = random_depth(8, 8, seed * 2 + 11);
            // Punch some invalid pixels.
            pred.data_mut()[seed as usize % 64] = 0.0;
            let ours = compute_metrics(&pred, &gt).unwrap();
            let oracle = metrics_oracle(&pred, &gt);
            assert_eq!(ours.rmse, oracle.rmse);
            assert_eq!(ours.rel, oracle.rel);
            assert_eq!(ours.log10, oracle.log10);
            assert_eq!(ours.delta1, oracle.delta1);
            assert_eq!(ours.delta2, oracle.delta2);
            assert_eq!(ours.delta3, oracle.delta3);
            assert_eq!(ours.valid_pixels, oracle.valid_pixels);
        }
    }

    #[test]
    fn delta_monotone_and_symmetry_structure() {
        for seed in 0..5u64 {
            let pred = random_depth(10, 10, seed + 30);
            let gt = random_depth(10, 10, seed + 40);
            let fwd = compute_metrics(&pred, &gt).unwrap();
            assert!(fwd.delta1 <= fwd.delta2 && fwd.delta2 <= fwd.delta3);
            let rev = compute_metrics(&gt, &pred).unwrap();
            // Max-ratio deltas and RMSE are symmetric.
            assert_eq!(fwd.delta1, rev.delta1);
            assert_eq!(fwd.delta2, rev.delta2);
            assert_eq!(fwd.delta3, rev.delta3);
            assert!((fwd.rmse - rev.rmse).abs() < 1e-15);
        }
        // REL and log10 are not symmetric: exercised on a crafted pair.
        let gt = DepthMap::constant(2, 2, 2.0).unwrap();
        let pred = DepthMap::constant(2, 2, 1.0).unwrap();
        let fwd = compute_metrics(&pred, &gt).unwrap();
        let rev = compute_metrics(&gt, &pred).unwrap();
        assert!((fwd.rel - 0.5).abs() < 1e-12);
        assert!((rev.rel - 1.0).abs() < 1e-12);
        assert_ne!(fwd.rel, rev.rel);
    }

    #[test]
    fn scale_law() {
        let pred = random_depth(9, 9, 50);
        let gt = random_depth(9, 9, 51);
        let base = compute_metrics(&pred, &gt).unwrap();
        let k = 3.7;
        let scale = |d: &DepthMap| {
            DepthMap::from_vec(
                d.height(),
                d.width(),
                d.data().iter().map(|v| k * v).collect(),
            )
            .unwrap()
        };
        let scaled = compute_metrics(&scale(&pred), &scale(&gt)).unwrap();
        assert!((scaled.rmse - k * base.rmse).abs() < 1e-12);
        assert!((scaled.rel - base.rel).abs() < 1e-12);
        assert!((scaled.log10 - base.log10).abs() < 1e-12);
        assert_eq!(scaled.delta1, base.delta1);
        assert_eq!(scaled.delta2, base.delta2);
        assert_eq!(scaled.delta3, base.delta3);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let a = DepthMap::from_vec(2, 2, vec![0.0, 1.0, 0.0, 2.0]).unwrap();
        let b = DepthMap::from_vec(2, 2, vec![1.0, 0.0, 2.0, 0.0]).unwrap();
        assert!(matches!(compute_metrics(&a, &b), Err(Error::EmptyMask)));
    }

    #[test]
    fn unproject_examples() {
        let k = Intrinsics::new(100.0, 100.0, 0.0, 0.0).unwrap();
        let mut depth = DepthMap::from_vec(1, 101, vec![0.0; 101]).unwrap();
        depth.set(0, 100, 2.0);
        let cloud = unproject(&depth, &k).unwrap();
        assert_eq!(cloud.len(), 1);
        assert!((cloud[0] - Vector3::new(2.0, 0.0, 2.0)).norm() < 1e-12);

        // Principal point maps to the optical axis.
        let k = Intrinsics::new(80.0, 90.0, 5.0, 7.0).unwrap();
        let mut depth = DepthMap::from_vec(8, 8, vec![0.0; 64]).unwrap();
        depth.set(7, 5, 1.7);
        let cloud = unproject(&depth, &k).unwrap();
        assert!((cloud[0] - Vector3::new(0.0, 0.0, 1.7)).norm() < 1e-12);
    }

    #[test]
    fn rigid_transform_examples_and_isometry() {
        let cloud = vec![
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.5, -0.25, 2.0),
            Vector3::new(-1.0, 0.75, 3.0),
        ];
        let id = RigidTransform::identity();
        assert_eq!(transform_points(&cloud, &id), cloud);

        let shift = RigidTransform::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 1.0)).unwrap();
        for (p, q) in cloud.iter().zip(transform_points(&cloud, &shift)) {
            assert_eq!(q.z, p.z + 1.0);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let axis = nalgebra::Unit::new_normalize(Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ));
        let rot = nalgebra::Rotation3::from_axis_angle(&axis, 0.83).into_inner();
        let t = RigidTransform::new(rot, Vector3::new(0.1, -0.2, 0.3)).unwrap();
        let pts: Vec<Vector3<f64>> = (0..100)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(0.5..4.0),
                )
            })
            .collect();
        let moved = transform_points(&pts, &t);
        for _ in 0..100 {
            let i = rng.random_range(0..pts.len());
            let j = rng.random_range(0..pts.len());
            let before = (pts[i] - pts[j]).norm();
            let after = (moved[i] - moved[j]).norm();
            assert!((before - after).abs() < 1e-9);
        }
    }

    #[test]
    fn rigid_transform_validation() {
        let mut bad = Matrix3::identity();
        bad[(0, 0)] = 1.5;
        assert!(RigidTransform::new(bad, Vector3::zeros()).is_err());
        // Reflection: orthonormal but det -1.
        let refl = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(refl, Vector3::zeros()).is_err());
    }

    #[test]
    fn unproject_project_round_trip() {
        let k = Intrinsics::new(120.0, 115.0, 16.0, 12.0).unwrap();
        let mut depth = random_depth(24, 32, 70);
        depth.data_mut()[5] = 0.0;
        depth.data_mut()[100] = 0.0;
        let cloud = unproject(&depth, &k).unwrap();
        let proj = project_depth(&cloud, &k, (24, 32)).unwrap();
        assert_eq!(proj.dropped, 0);
        for y in 0..24 {
            for x in 0..32 {
                assert_eq!(proj.depth.get(y, x), depth.get(y, x));
            }
        }
    }

    #[test]
    fn z_buffer_keeps_the_nearest_point() {
        let k = Intrinsics::new(100.0, 100.0, 2.0, 2.0).unwrap();
        // Both points project to the principal pixel.
        let cloud = vec![Vector3::new(0.0, 0.0, 3.0), Vector3::new(0.0, 0.0, 1.5)];
        let proj = project_depth(&cloud, &k, (5, 5)).unwrap();
        assert_eq!(proj.depth.get(2, 2), 1.5);

        // Off-image and behind-camera points are dropped and counted.
        let cloud = vec![Vector3::new(100.0, 0.0, 1.0), Vector3::new(0.0, 0.0, -1.0)];
        let proj = project_depth(&cloud, &k, (5, 5)).unwrap();
        assert_eq!(proj.dropped, 2);
        assert_eq!(proj.depth.valid_count(), 0);
    }

    #[test]
    fn aligned_evaluation_identity_is_perfect() {
        let k = Intrinsics::new(90.0, 90.0, 12.0, 10.0).unwrap();
        let d = random_depth(20, 24, 80);
        let r = evaluate_aligned(&d, &k, &d, &k, &RigidTransform::identity()).unwrap();
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.delta1, 1.0);
    }

    #[test]
    fn aligned_evaluation_matches_analytic_warp() {
        // Fronto-parallel plane seen by two cameras separated by a pure
        // x-translation chosen so the reprojection lands on integer pixels:
        // shift = fx * tx / z0 = 64 * 0.25 / 2.0 = 8 columns.
        let (h, w) = (16, 24);
        let z0 = 2.0;
        let fx = 64.0;
        let tx = 0.25;
        let shift = (fx * tx / z0) as usize;
        let k = Intrinsics::new(fx, fx, w as f64 / 2.0, h as f64 / 2.0).unwrap();
        let pred = DepthMap::constant(h, w, z0).unwrap();
        let gt = DepthMap::constant(h, w, z0).unwrap();
        let t = RigidTransform::new(Matrix3::identity(), Vector3::new(tx, 0.0, 0.0)).unwrap();
        let report = evaluate_aligned(&pred, &k, &gt, &k, &t).unwrap();

        // Analytic warp: the same plane shifted by `shift` columns, compared
        // on the overlapping region.
        let mut warped = vec![0.0f64; h * w];
        for y in 0..h {
            for x in 0..w {
                if x + shift < w {
                    warped[y * w + x + shift] = z0;
                }
            }
        }
        let warped = DepthMap::from_vec(h, w, warped).unwrap();
        let oracle = compute_metrics(&warped, &gt).unwrap();
        assert_eq!(report.valid_pixels, oracle.valid_pixels);
        assert!((report.rmse - oracle.rmse).abs() < 1e-6);
        assert!((report.delta1 - oracle.delta1).abs() < 1e-6);
    }

    #[test]
    fn disjoint_views_error_out() {
        let k = Intrinsics::new(50.0, 50.0, 4.0, 4.0).unwrap();
        let pred = DepthMap::constant(8, 8, 1.0).unwrap();
        let gt = DepthMap::constant(8, 8, 1.0).unwrap();
        // Move the prediction far outside the ground-truth frustum.
        let t = RigidTransform::new(Matrix3::identity(), Vector3::new(100.0, 0.0, 0.0)).unwrap();
        assert!(matches!(
            evaluate_aligned(&pred, &k, &gt, &k, &t),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn undistort_identity_without_coefficients() {
        let k = Intrinsics::new(60.0, 60.0, 8.0, 8.0).unwrap();
        let d = random_depth(16, 16, 90);
        assert_eq!(undistort_depth(&d, &k), d);
        // Tiny distortion moves samples but preserves the center pixel.
        let mut kd = k.clone();
        kd.distortion = Some([1e-3, 0.0, 0.0, 0.0, 0.0]);
        let und = undistort_depth(&d, &kd);
        assert_eq!(und.get(8, 8), d.get(8, 8));
    }
}
