//! LiDAR-style ring sampling and multi-frame accumulation.
//!
//! Rays are cast on an azimuth–elevation grid of 64 elevation rings. Row
//! subsampling keeps every (64/rows)-th ring, mirroring how lower-resolution
//! scanners relate to a 64-ring unit. Accumulation re-samples the scene from
//! offset camera poses and reprojects the hits into the reference frame with
//! an optionally noise-perturbed pose estimate; with zero noise the merged
//! map reproduces ground truth at every covered pixel, and pose noise alone
//! produces the foreground/background spread across boundaries seen in
//! accumulated real-world ground truth.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{mat_vec, mat_vec_t, Pose, Scene};
use crate::depth::DepthMap;
use crate::{Error, Result};

/// Total elevation rings of the reference scanner.
pub const TOTAL_RINGS: u32 = 64;

/// Ring/azimuth geometry. The defaults span −24.8°..+2.0° elevation over 64
/// rings with a 90° azimuth fan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarOptions {
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub azimuth_fov_deg: f64,
}

impl Default for LidarOptions {
    fn default() -> Self {
        Self {
            elevation_min_deg: -24.8,
            elevation_max_deg: 2.0,
            azimuth_fov_deg: 90.0,
        }
    }
}

/// Elevation ring indices kept for a given subsampling: ring k survives when
/// `(k − offset) mod (64/rows) == 0`. `rows = 0` keeps nothing.
pub fn kept_rings(rows: u32, offset: u32) -> Result<Vec<u32>> {
    match rows {
        0 => Ok(Vec::new()),
        8 | 16 | 32 | 64 => {
            let step = (TOTAL_RINGS / rows) as i64;
            Ok((0..TOTAL_RINGS)
                .filter(|k| (*k as i64 - offset as i64).rem_euclid(step) == 0)
                .collect())
        }
        other => Err(Error::InvalidRows(other)),
    }
}

fn ring_elevation_rad(k: u32, opts: &LidarOptions) -> f64 {
    let span = opts.elevation_max_deg - opts.elevation_min_deg;
    (opts.elevation_min_deg + span * k as f64 / (TOTAL_RINGS - 1) as f64).to_radians()
}

/// Camera-frame ray direction for an elevation/azimuth pair. Positive
/// elevation points up (negative image y).
fn ray_direction(elevation: f64, azimuth: f64) -> [f64; 3] {
    let (se, ce) = elevation.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    [ce * sa, -se, ce * ca]
}

/// Sample the scene with a ring pattern from the reference camera.
///
/// Hits are projected to the nearest pixel with min-depth z-buffering on
/// conflicts. `rows = 0` returns an all-invalid map.
pub fn lidar_sample(scene: &Scene, rows: u32, offset: u32, azimuth_step_deg: f64) -> Result<DepthMap> {
    lidar_sample_with(scene, rows, offset, azimuth_step_deg, &LidarOptions::default())
}

/// [`lidar_sample`] with explicit ring geometry.
pub fn lidar_sample_with(
    scene: &Scene,
    rows: u32,
    offset: u32,
    azimuth_step_deg: f64,
    opts: &LidarOptions,
) -> Result<DepthMap> {
    if azimuth_step_deg.is_nan() || azimuth_step_deg <= 0.0 {
        return Err(Error::config("azimuth step must be positive"));
    }
    let rings = kept_rings(rows, offset)?;
    let mut map = DepthMap::new(scene.width, scene.height);
    let identity = Pose::default();
    sample_into(scene, &rings, azimuth_step_deg, opts, &identity, &identity, &mut map);
    Ok(map)
}

/// Cast the ring pattern from a camera at `true_pose` and splat the hits into
/// `map` using `est_pose` for the reprojection. Equal poses give exact
/// samples; a perturbed estimate produces boundary outliers.
fn sample_into(
    scene: &Scene,
    rings: &[u32],
    azimuth_step_deg: f64,
    opts: &LidarOptions,
    true_pose: &Pose,
    est_pose: &Pose,
    map: &mut DepthMap,
) {
    let r_true = true_pose.rotation_matrix();
    let r_est = est_pose.rotation_matrix();
    let half_fov = opts.azimuth_fov_deg.to_radians() / 2.0;
    let step = azimuth_step_deg.to_radians();
    let n_az = (opts.azimuth_fov_deg / azimuth_step_deg).round() as usize;
    let intr = &scene.intrinsics;
    for &k in rings {
        let elevation = ring_elevation_rad(k, opts);
        for j in 0..=n_az {
            let azimuth = -half_fov + j as f64 * step;
            let dir_cam = ray_direction(elevation, azimuth);
            let dir_world = mat_vec(&r_true, dir_cam);
            let Some((point, _)) = scene.intersect(true_pose.translation, dir_world) else {
                continue;
            };
            // camera-frame coordinates of the hit, then reproject with the
            // estimated pose
            let local = mat_vec_t(
                &r_true,
                [
                    point[0] - true_pose.translation[0],
                    point[1] - true_pose.translation[1],
                    point[2] - true_pose.translation[2],
                ],
            );
            let est = {
                let rotated = mat_vec(&r_est, local);
                [
                    rotated[0] + est_pose.translation[0],
                    rotated[1] + est_pose.translation[1],
                    rotated[2] + est_pose.translation[2],
                ]
            };
            if est[2] <= 0.0 || est[2] > scene.d_max {
                continue;
            }
            let u = (intr.focal * est[0] / est[2] + intr.cx).round();
            let v = (intr.focal * est[1] / est[2] + intr.cy).round();
            if u < 0.0 || v < 0.0 || u >= scene.width as f64 || v >= scene.height as f64 {
                continue;
            }
            let (ui, vi) = (u as usize, v as usize);
            match map.get(ui, vi) {
                Some(existing) if existing <= est[2] => {}
                _ => map.set(ui, vi, est[2]),
            }
        }
    }
}

/// Accumulate LiDAR samples from ±K frames around the reference into one
/// semi-dense map.
///
/// Each virtual frame i ∈ [−K, K] sits at `motion` scaled by i. Samples are
/// taken from the true pose; the reprojection uses the pose perturbed by
/// per-axis Gaussian noise `(sigma_rot, sigma_trans)`, the noisy-odometry
/// model. Frame 0 is the reference scan and needs no transform, so it stays
/// exact. Merging z-buffers on minimum depth.
pub fn accumulate_semidense(
    scene: &Scene,
    frames: u32,
    motion: &Pose,
    noise: (f64, f64),
    seed: u64,
) -> Result<DepthMap> {
    accumulate_semidense_with(scene, frames, motion, noise, seed, 64, 0.2, &LidarOptions::default())
}

/// [`accumulate_semidense`] with explicit sampling parameters.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_semidense_with(
    scene: &Scene,
    frames: u32,
    motion: &Pose,
    noise: (f64, f64),
    seed: u64,
    rows: u32,
    azimuth_step_deg: f64,
    opts: &LidarOptions,
) -> Result<DepthMap> {
    let (sigma_rot, sigma_trans) = noise;
    if sigma_rot < 0.0 || sigma_trans < 0.0 {
        return Err(Error::config("noise sigmas must be non-negative"));
    }
    let rings = kept_rings(rows, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = DepthMap::new(scene.width, scene.height);
    let k = frames as i64;
    for i in -k..=k {
        let true_pose = motion.scaled(i as f64);
        let est_pose = if i == 0 {
            true_pose
        } else {
            Pose {
                rotation: perturb(&mut rng, true_pose.rotation, sigma_rot),
                translation: perturb(&mut rng, true_pose.translation, sigma_trans),
            }
        };
        sample_into(scene, &rings, azimuth_step_deg, opts, &true_pose, &est_pose, &mut map);
    }
    Ok(map)
}

fn perturb(rng: &mut ChaCha8Rng, values: [f64; 3], sigma: f64) -> [f64; 3] {
    if sigma == 0.0 {
        return values;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated non-negative");
    values.map(|v| v + normal.sample(rng))
}
