//! Synthetic depth data with exact ground truth.
//!
//! Scenes are small sets of analytic primitives (fronto-parallel planes,
//! rectangles, vertical strips, a ground plane, slanted surfaces with depth
//! linear in a pixel coordinate). Dense ground truth is rendered by
//! intersecting one ray per pixel center with the primitives, and the
//! LiDAR-style samplers intersect the same geometry, so sparse and
//! accumulated maps agree with the ground truth exactly; outliers appear
//! only when pose noise is injected.
//!
//! Depth maps respect the `d_max` cutoff (default 90 m): deeper returns are
//! suppressed to simulate rays with no return.

mod lidar;

pub use lidar::{
    accumulate_semidense, accumulate_semidense_with, kept_rings, lidar_sample, lidar_sample_with,
    LidarOptions, TOTAL_RINGS,
};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::{Error, Result};

/// Default maximum depth: deeper hits are treated as no-return.
pub const DEFAULT_D_MAX: f64 = 90.0;

/// Product focal·baseline used by the default intrinsics (px·m).
pub const DEFAULT_FOCAL_BASELINE: f64 = 389.0;

/// Pinhole camera with a stereo baseline for disparity conversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    /// Focal length in pixels.
    pub focal: f64,
    /// Principal point x (pixels).
    pub cx: f64,
    /// Principal point y (pixels).
    pub cy: f64,
    /// Stereo baseline in meters.
    pub baseline: f64,
}

impl CameraIntrinsics {
    /// Intrinsics scaled to an image size: focal 1.25·w, principal point at
    /// (w/2, h/8) so the LiDAR elevation span fills the rows below the
    /// horizon, and baseline chosen so focal·baseline = 389 px·m.
    pub fn for_image(width: usize, height: usize) -> Self {
        let focal = 1.25 * width as f64;
        Self {
            focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 8.0,
            baseline: DEFAULT_FOCAL_BASELINE / focal,
        }
    }

    pub fn focal_baseline(&self) -> f64 {
        self.focal * self.baseline
    }

    pub fn validate(&self) -> Result<()> {
        if !self.focal.is_finite() || self.focal <= 0.0 || !self.baseline.is_finite() || self.baseline <= 0.0 {
            return Err(Error::config("focal and baseline must be positive"));
        }
        Ok(())
    }
}

/// SE(3) pose: Euler angles (radians) applied as Rz·Ry·Rx, then translation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

impl Pose {
    pub fn scaled(&self, k: f64) -> Pose {
        Pose {
            rotation: self.rotation.map(|a| a * k),
            translation: self.translation.map(|t| t * k),
        }
    }

    /// Rotation matrix Rz(γ)·Ry(β)·Rx(α).
    pub fn rotation_matrix(&self) -> [[f64; 3]; 3] {
        let [ax, ay, az] = self.rotation;
        let (sa, ca) = ax.sin_cos();
        let (sb, cb) = ay.sin_cos();
        let (sc, cc) = az.sin_cos();
        // Rz·Ry·Rx expanded
        [
            [cc * cb, cc * sb * sa - sc * ca, cc * sb * ca + sc * sa],
            [sc * cb, sc * sb * sa + cc * ca, sc * sb * ca - cc * sa],
            [-sb, cb * sa, cb * ca],
        ]
    }
}

pub(crate) fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub(crate) fn mat_vec_t(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

/// Analytic scene primitive. All labels reference the owning scene; the
/// backdrop-style surfaces carry label 0 (background).
#[derive(Debug, Clone, PartialEq)]
enum Primitive {
    /// Infinite fronto-parallel plane z = depth.
    Backdrop { depth: f64 },
    /// Fronto-parallel rectangle z = depth bounded in x and y (meters).
    Rect {
        depth: f64,
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
    },
    /// Vertical strip z = depth bounded in x only.
    Strip { depth: f64, x0: f64, x1: f64 },
    /// Horizontal ground plane y = height (camera y points down) for z ≥ z_min.
    Ground { height: f64, z_min: f64 },
    /// Surface with depth exactly linear in the image column of the
    /// reference view: z = a + b·u. Stored as z² = p·z + q·x.
    SlopeU { p: f64, q: f64 },
}

impl Primitive {
    /// Smallest t > 0 with o + t·dir on the surface, plus the hit depth (z).
    fn intersect(&self, o: [f64; 3], dir: [f64; 3]) -> Option<f64> {
        const T_MIN: f64 = 1e-9;
        match *self {
            Primitive::Backdrop { depth } => {
                if dir[2].abs() < 1e-15 {
                    return None;
                }
                let t = (depth - o[2]) / dir[2];
                (t > T_MIN).then_some(t)
            }
            Primitive::Rect {
                depth,
                x0,
                x1,
                y0,
                y1,
            } => {
                if dir[2].abs() < 1e-15 {
                    return None;
                }
                let t = (depth - o[2]) / dir[2];
                if t <= T_MIN {
                    return None;
                }
                let x = o[0] + t * dir[0];
                let y = o[1] + t * dir[1];
                (x >= x0 && x <= x1 && y >= y0 && y <= y1).then_some(t)
            }
            Primitive::Strip { depth, x0, x1 } => {
                if dir[2].abs() < 1e-15 {
                    return None;
                }
                let t = (depth - o[2]) / dir[2];
                if t <= T_MIN {
                    return None;
                }
                let x = o[0] + t * dir[0];
                (x >= x0 && x <= x1).then_some(t)
            }
            Primitive::Ground { height, z_min } => {
                if dir[1].abs() < 1e-15 {
                    return None;
                }
                let t = (height - o[1]) / dir[1];
                if t <= T_MIN {
                    return None;
                }
                let z = o[2] + t * dir[2];
                (z >= z_min).then_some(t)
            }
            Primitive::SlopeU { p, q } => {
                // (o_z + t·d_z)² − p(o_z + t·d_z) − q(o_x + t·d_x) = 0
                let a = dir[2] * dir[2];
                let b = 2.0 * o[2] * dir[2] - p * dir[2] - q * dir[0];
                let c = o[2] * o[2] - p * o[2] - q * o[0];
                let roots: Vec<f64> = if a.abs() < 1e-15 {
                    if b.abs() < 1e-15 {
                        vec![]
                    } else {
                        vec![-c / b]
                    }
                } else {
                    let disc = b * b - 4.0 * a * c;
                    if disc < 0.0 {
                        vec![]
                    } else {
                        let sq = disc.sqrt();
                        vec![(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)]
                    }
                };
                roots
                    .into_iter()
                    .filter(|&t| t > T_MIN && o[2] + t * dir[2] > 0.0)
                    .fold(None, |acc: Option<f64>, t| {
                        Some(acc.map_or(t, |m| m.min(t)))
                    })
            }
        }
    }
}

/// Analytic scene: geometry, intrinsics and raster dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub intrinsics: CameraIntrinsics,
    pub d_max: f64,
    primitives: Vec<(Primitive, u8)>,
}

impl Scene {
    /// Nearest hit along o + t·dir: `(world point, depth in reference z, label)`.
    /// Hits beyond `d_max` count as no return. Rays that miss everything
    /// return the far miss as `None`.
    pub fn intersect(&self, o: [f64; 3], dir: [f64; 3]) -> Option<([f64; 3], u8)> {
        let mut best: Option<(f64, u8)> = None;
        for (prim, label) in &self.primitives {
            if let Some(t) = prim.intersect(o, dir) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, *label));
                }
            }
        }
        let (t, label) = best?;
        let point = [o[0] + t * dir[0], o[1] + t * dir[1], o[2] + t * dir[2]];
        (point[2] > 0.0 && point[2] <= self.d_max).then_some((point, label))
    }

    /// Ray direction through a pixel center from the reference camera
    /// (z component fixed at 1, so t equals depth along the ray).
    pub fn pixel_ray(&self, u: f64, v: f64) -> [f64; 3] {
        [
            (u - self.intrinsics.cx) / self.intrinsics.focal,
            (v - self.intrinsics.cy) / self.intrinsics.focal,
            1.0,
        ]
    }

    /// Render exact dense ground truth from the reference camera.
    pub fn render_depth(&self) -> DepthMap {
        let mut map = DepthMap::new(self.width, self.height);
        for v in 0..self.height {
            for u in 0..self.width {
                let dir = self.pixel_ray(u as f64, v as f64);
                if let Some((point, _)) = self.intersect([0.0; 3], dir) {
                    map.set(u, v, point[2]);
                }
            }
        }
        map
    }

    /// Render the instance label map (0 = background).
    pub fn render_labels(&self) -> LabelMap {
        let mut ids = vec![0u8; self.width * self.height];
        for v in 0..self.height {
            for u in 0..self.width {
                let dir = self.pixel_ray(u as f64, v as f64);
                if let Some((_, label)) = self.intersect([0.0; 3], dir) {
                    ids[v * self.width + u] = label;
                }
            }
        }
        LabelMap {
            width: self.width,
            height: self.height,
            ids,
        }
    }
}

/// H×W instance/semantic id raster, background id 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub ids: Vec<u8>,
}

impl LabelMap {
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.ids[y * self.width + x]
    }
}

/// A generated scene bundle: analytic geometry plus its rendered maps.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub scene: Scene,
    pub dense_gt: DepthMap,
    pub sparse: DepthMap,
    pub semidense: Option<DepthMap>,
    pub labels: LabelMap,
}

fn default_step1d_width() -> usize {
    100
}
fn default_step1d_edge() -> usize {
    50
}
fn default_fg_depth() -> f64 {
    10.0
}
fn default_bg_depth() -> f64 {
    30.0
}
fn default_spacing() -> usize {
    8
}
fn default_2d_width() -> usize {
    192
}
fn default_2d_height() -> usize {
    128
}
fn default_flat_depth() -> f64 {
    15.0
}
fn default_slope_start() -> f64 {
    10.0
}
fn default_slope_rate() -> f64 {
    0.1
}
fn default_slab_depth() -> f64 {
    10.0
}
fn default_pole_depth() -> f64 {
    7.0
}
fn default_pole_bg() -> f64 {
    25.0
}
fn default_pole_width() -> usize {
    2
}
fn default_jitter() -> f64 {
    0.15
}
fn default_box_count() -> usize {
    3
}

/// Parametric scene description (JSON-serializable).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneSpec {
    /// One-row profile with a single step edge: depth `fg` for x < edge,
    /// `bg` for x ≥ edge. Sparse samples every `spacing` pixels at `phase`;
    /// by default the phase centers the sample grid on the edge so the two
    /// flanking samples straddle it symmetrically.
    Step1d {
        #[serde(default = "default_step1d_width")]
        width: usize,
        #[serde(default = "default_step1d_edge")]
        edge: usize,
        #[serde(default = "default_fg_depth")]
        fg_depth: f64,
        #[serde(default = "default_bg_depth")]
        bg_depth: f64,
        #[serde(default = "default_spacing")]
        spacing: usize,
        #[serde(default)]
        phase: Option<usize>,
    },
    /// One-row constant-depth profile.
    Flat1d {
        #[serde(default = "default_step1d_width")]
        width: usize,
        #[serde(default = "default_flat_depth")]
        depth: f64,
        #[serde(default = "default_spacing")]
        spacing: usize,
    },
    /// One-row profile with depth linear in the column: d(x) = start + rate·x.
    Slope1d {
        #[serde(default = "default_step1d_width")]
        width: usize,
        #[serde(default = "default_slope_start")]
        start_depth: f64,
        #[serde(default = "default_slope_rate")]
        rate: f64,
        #[serde(default = "default_spacing")]
        spacing: usize,
    },
    /// Frontal rectangle over a backdrop plane. The seed jitters the slab
    /// placement and both depths by up to `jitter` (relative).
    Slab2d {
        #[serde(default = "default_2d_width")]
        width: usize,
        #[serde(default = "default_2d_height")]
        height: usize,
        #[serde(default = "default_slab_depth")]
        slab_depth: f64,
        #[serde(default = "default_bg_depth")]
        bg_depth: f64,
        #[serde(default = "default_jitter")]
        jitter: f64,
    },
    /// Thin vertical strip over a backdrop plane.
    Pole {
        #[serde(default = "default_2d_width")]
        width: usize,
        #[serde(default = "default_2d_height")]
        height: usize,
        #[serde(default = "default_pole_depth")]
        pole_depth: f64,
        #[serde(default = "default_pole_bg")]
        bg_depth: f64,
        #[serde(default = "default_pole_width")]
        pole_width_px: usize,
    },
    /// Ground plane with a far wall and seeded boxes at mixed depths.
    Composite {
        #[serde(default = "default_2d_width")]
        width: usize,
        #[serde(default = "default_2d_height")]
        height: usize,
        #[serde(default = "default_box_count")]
        boxes: usize,
    },
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        match *self {
            SceneSpec::Step1d {
                width,
                edge,
                fg_depth,
                bg_depth,
                spacing,
                ..
            } => {
                if width == 0 || edge == 0 || edge >= width {
                    return bad("step1d: edge must lie strictly inside the row");
                }
                if fg_depth.is_nan() || bg_depth.is_nan() || fg_depth <= 0.0 || bg_depth <= fg_depth {
                    return bad("step1d: need 0 < fg_depth < bg_depth");
                }
                if spacing == 0 {
                    return bad("sample spacing must be positive");
                }
            }
            SceneSpec::Flat1d { width, depth, spacing } => {
                if width == 0 || depth.is_nan() || depth <= 0.0 || spacing == 0 {
                    return bad("flat1d: invalid dimensions");
                }
            }
            SceneSpec::Slope1d {
                width,
                start_depth,
                rate,
                spacing,
            } => {
                if width == 0 || spacing == 0 {
                    return bad("slope1d: invalid dimensions");
                }
                let end_depth = start_depth + rate * (width as f64 - 1.0);
                if start_depth.is_nan() || start_depth <= 0.0 || end_depth.is_nan() || end_depth <= 0.0 {
                    return bad("slope1d: depth must stay positive across the row");
                }
            }
            SceneSpec::Slab2d {
                width,
                height,
                slab_depth,
                bg_depth,
                jitter,
            } => {
                if width < 16 || height < 16 {
                    return bad("slab2d: scene too small");
                }
                if slab_depth.is_nan() || bg_depth.is_nan() || slab_depth <= 0.0 || bg_depth <= slab_depth {
                    return bad("slab2d: need 0 < slab_depth < bg_depth");
                }
                if !(0.0..=0.5).contains(&jitter) {
                    return bad("slab2d: jitter must lie in [0, 0.5]");
                }
            }
            SceneSpec::Pole {
                width,
                height,
                pole_depth,
                bg_depth,
                pole_width_px,
            } => {
                if width < 16 || height < 16 || pole_width_px == 0 || pole_width_px >= width / 2 {
                    return bad("pole: invalid dimensions");
                }
                if pole_depth.is_nan() || bg_depth.is_nan() || pole_depth <= 0.0 || bg_depth <= pole_depth {
                    return bad("pole: need 0 < pole_depth < bg_depth");
                }
            }
            SceneSpec::Composite { width, height, boxes } => {
                if width < 32 || height < 32 || boxes == 0 || boxes > 8 {
                    return bad("composite: invalid dimensions");
                }
            }
        }
        Ok(())
    }
}

/// Meter x-coordinate of the boundary between pixel columns `u-1` and `u`
/// on a fronto-parallel surface at `depth`.
fn column_boundary_m(u: f64, depth: f64, intr: &CameraIntrinsics) -> f64 {
    (u - 0.5 - intr.cx) * depth / intr.focal
}

fn row_boundary_m(v: f64, depth: f64, intr: &CameraIntrinsics) -> f64 {
    (v - 0.5 - intr.cy) * depth / intr.focal
}

/// Build a scene and its rendered maps. 1D profiles are sampled on a regular
/// grid; 2D scenes are sampled with the default LiDAR pattern (64 rings).
pub fn make_scene(spec: &SceneSpec, seed: u64) -> Result<SceneSample> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (scene, sparse_grid): (Scene, Option<(usize, usize)>) = match *spec {
        SceneSpec::Step1d {
            width,
            edge,
            fg_depth,
            bg_depth,
            spacing,
            phase,
        } => {
            let intr = CameraIntrinsics::for_image(width, 1);
            // strip covering pixel columns [0, edge-1]
            let x0 = column_boundary_m(-1.0, fg_depth, &intr);
            let x1 = column_boundary_m(edge as f64, fg_depth, &intr);
            let scene = Scene {
                width,
                height: 1,
                intrinsics: intr,
                d_max: DEFAULT_D_MAX,
                primitives: vec![
                    (Primitive::Strip { depth: fg_depth, x0, x1 }, 1),
                    (Primitive::Backdrop { depth: bg_depth }, 0),
                ],
            };
            let phase = phase.unwrap_or_else(|| {
                // center the sample grid on the edge
                (edge + spacing - spacing / 2) % spacing
            });
            (scene, Some((spacing, phase)))
        }
        SceneSpec::Flat1d { width, depth, spacing } => {
            let scene = Scene {
                width,
                height: 1,
                intrinsics: CameraIntrinsics::for_image(width, 1),
                d_max: DEFAULT_D_MAX,
                primitives: vec![(Primitive::Backdrop { depth }, 0)],
            };
            (scene, Some((spacing, 0)))
        }
        SceneSpec::Slope1d {
            width,
            start_depth,
            rate,
            spacing,
        } => {
            let intr = CameraIntrinsics::for_image(width, 1);
            let scene = Scene {
                width,
                height: 1,
                intrinsics: intr,
                d_max: DEFAULT_D_MAX,
                primitives: vec![(
                    Primitive::SlopeU {
                        p: start_depth + rate * intr.cx,
                        q: rate * intr.focal,
                    },
                    0,
                )],
            };
            (scene, Some((spacing, 0)))
        }
        SceneSpec::Slab2d {
            width,
            height,
            slab_depth,
            bg_depth,
            jitter,
        } => {
            let intr = CameraIntrinsics::for_image(width, height);
            let w = width as f64;
            let h = height as f64;
            let jit = |rng: &mut ChaCha8Rng, amp: f64| rng.random_range(-amp..=amp);
            let depth = slab_depth * (1.0 + jit(&mut rng, jitter * 0.5));
            let bg = bg_depth * (1.0 + jit(&mut rng, jitter * 0.5));
            let cu = w * 0.5 + jit(&mut rng, jitter * w * 0.5);
            let cv = h * 0.62 + jit(&mut rng, jitter * h * 0.25);
            let half_w = w * (0.16 + jit(&mut rng, jitter * 0.08));
            let half_h = h * (0.22 + jit(&mut rng, jitter * 0.1));
            // snap the rectangle to half-pixel boundaries so its ground-truth
            // footprint is exact
            let u0 = (cu - half_w).round();
            let u1 = (cu + half_w).round();
            let v0 = (cv - half_h).round();
            let v1 = (cv + half_h).round();
            let scene = Scene {
                width,
                height,
                intrinsics: intr,
                d_max: DEFAULT_D_MAX,
                primitives: vec![
                    (
                        Primitive::Rect {
                            depth,
                            x0: column_boundary_m(u0, depth, &intr),
                            x1: column_boundary_m(u1, depth, &intr),
                            y0: row_boundary_m(v0, depth, &intr),
                            y1: row_boundary_m(v1, depth, &intr),
                        },
                        1,
                    ),
                    (Primitive::Backdrop { depth: bg }, 0),
                ],
            };
            (scene, None)
        }
        SceneSpec::Pole {
            width,
            height,
            pole_depth,
            bg_depth,
            pole_width_px,
        } => {
            let intr = CameraIntrinsics::for_image(width, height);
            let c = (width / 2) as f64;
            let u0 = c - pole_width_px as f64 / 2.0;
            let u1 = c + pole_width_px as f64 / 2.0;
            let scene = Scene {
                width,
                height,
                intrinsics: intr,
                d_max: DEFAULT_D_MAX,
                primitives: vec![
                    (
                        Primitive::Strip {
                            depth: pole_depth,
                            x0: column_boundary_m(u0.round(), pole_depth, &intr),
                            x1: column_boundary_m(u1.round(), pole_depth, &intr),
                        },
                        1,
                    ),
                    (Primitive::Backdrop { depth: bg_depth }, 0),
                ],
            };
            (scene, None)
        }
        SceneSpec::Composite { width, height, boxes } => {
            let intr = CameraIntrinsics::for_image(width, height);
            let w = width as f64;
            let h = height as f64;
            let mut primitives = vec![
                (Primitive::Ground { height: 1.5, z_min: 2.0 }, 0),
                (Primitive::Backdrop { depth: 60.0 }, 0),
            ];
            for b in 0..boxes {
                let depth = rng.random_range(6.0..30.0);
                let cu = rng.random_range(w * 0.15..w * 0.85);
                let cv = rng.random_range(h * 0.35..h * 0.8);
                let half_w = rng.random_range(w * 0.04..w * 0.12);
                let half_h = rng.random_range(h * 0.08..h * 0.2);
                let u0 = (cu - half_w).round();
                let u1 = (cu + half_w).round();
                let v0 = (cv - half_h).round();
                let v1 = (cv + half_h).round();
                primitives.push((
                    Primitive::Rect {
                        depth,
                        x0: column_boundary_m(u0, depth, &intr),
                        x1: column_boundary_m(u1, depth, &intr),
                        y0: row_boundary_m(v0, depth, &intr),
                        y1: row_boundary_m(v1, depth, &intr),
                    },
                    (b + 1) as u8,
                ));
            }
            let scene = Scene {
                width,
                height,
                intrinsics: intr,
                d_max: DEFAULT_D_MAX,
                primitives,
            };
            (scene, None)
        }
    };

    let dense_gt = scene.render_depth();
    let labels = scene.render_labels();
    let sparse = match sparse_grid {
        Some((spacing, phase)) => {
            let mut sparse = DepthMap::new(scene.width, scene.height);
            for y in 0..scene.height {
                for x in 0..scene.width {
                    if x % spacing == phase % spacing {
                        if let Some(d) = dense_gt.get(x, y) {
                            sparse.set(x, y, d);
                        }
                    }
                }
            }
            sparse
        }
        None => lidar_sample(&scene, 64, 0, 0.2)?,
    };
    Ok(SceneSample {
        scene,
        dense_gt,
        sparse,
        semidense: None,
        labels,
    })
}

/// Valid-aware mean pooling by `factor` (2 or 4): a coarse pixel is valid
/// iff at least one fine pixel in its block is valid, and takes the mean of
/// the valid ones.
pub fn downsample(gt: &DepthMap, factor: u32) -> Result<DepthMap> {
    if factor != 2 && factor != 4 {
        return Err(Error::config(format!("downsample factor must be 2 or 4, got {factor}")));
    }
    let f = factor as usize;
    let cw = gt.width().div_ceil(f);
    let ch = gt.height().div_ceil(f);
    let mut out = DepthMap::new(cw, ch);
    for cy in 0..ch {
        for cx in 0..cw {
            let mut sum = 0.0;
            let mut n = 0u32;
            for dy in 0..f {
                for dx in 0..f {
                    let (x, y) = (cx * f + dx, cy * f + dy);
                    if x < gt.width() && y < gt.height() {
                        if let Some(d) = gt.get(x, y) {
                            sum += d;
                            n += 1;
                        }
                    }
                }
            }
            if n > 0 {
                out.set(cx, cy, sum / n as f64);
            }
        }
    }
    Ok(out)
}

/// Outlier statistics of a candidate depth map against a reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierStats {
    /// Share of compared pixels with |Δd| > 1 m.
    pub metric_fraction: f64,
    /// Share of compared pixels with disparity error > 3 px AND relative
    /// disparity error > 5 %.
    pub kitti_fraction: f64,
    /// Candidate valid pixels as a percentage of all pixels.
    pub coverage_pct: f64,
    /// Number of pixels valid in both maps.
    pub compared: usize,
}

/// Compare a candidate map against a dense(r) reference. Pixels are compared
/// where both maps are valid.
pub fn outlier_stats(
    candidate: &DepthMap,
    reference: &DepthMap,
    intr: &CameraIntrinsics,
) -> Result<OutlierStats> {
    candidate.expect_same_shape(reference)?;
    intr.validate()?;
    let fb = intr.focal_baseline();
    let mut compared = 0usize;
    let mut metric = 0usize;
    let mut kitti = 0usize;
    for (c, r) in candidate.data().iter().zip(reference.data()) {
        if *c > 0.0 && *r > 0.0 {
            compared += 1;
            if (c - r).abs() > 1.0 {
                metric += 1;
            }
            let disp_c = fb / c;
            let disp_r = fb / r;
            let err = (disp_c - disp_r).abs();
            if err > 3.0 && err / disp_r > 0.05 {
                kitti += 1;
            }
        }
    }
    if compared == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(OutlierStats {
        metric_fraction: metric as f64 / compared as f64,
        kitti_fraction: kitti as f64 / compared as f64,
        coverage_pct: 100.0 * candidate.valid_count() as f64 / candidate.len() as f64,
        compared,
    })
}

/// Conversion direction for [`disparity_depth_convert`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvertDirection {
    DisparityToDepth,
    DepthToDisparity,
}

/// `d = focal·baseline / disp` and its inverse (the same formula); an exact
/// involution for positive inputs.
pub fn disparity_depth_convert(
    value: f64,
    intr: &CameraIntrinsics,
    _direction: ConvertDirection,
) -> Result<f64> {
    intr.validate()?;
    if !value.is_finite() || value <= 0.0 {
        return Err(Error::domain(format!("value must be positive, got {value}")));
    }
    Ok(intr.focal_baseline() / value)
}
