//! Synthetic multi-view experiments: camera rigs, seeded trajectories,
//! rendered frames and the angle/resolution error sweeps.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraIntrinsics, CameraView};
use crate::geometry::{exp_se3, rotation_about, RigidTransform, Twist};
use crate::image::RgbImage;
use crate::metrics::{score_sequence, LostRule};
use crate::renderer::{projected_roi, render_template, sub_view, TriangleMesh};
use crate::solver::{track_sequence, FrameSource, SolverConfig, TrackerState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("included angle {0} deg is outside (0, 180)")]
    InvalidAngle(f64),
    #[error("standoff must be positive, got {0}")]
    InvalidStandoff(f64),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RigPattern {
    /// Optical centers on an arc in one plane with the object.
    #[default]
    Plane,
    /// Cameras on a cone around C-0's optical axis.
    Cone,
}

impl std::str::FromStr for RigPattern {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plane" => Ok(Self::Plane),
            "cone" => Ok(Self::Cone),
            other => Err(format!("unknown rig pattern '{other}' (expected plane or cone)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigSpec {
    pub pattern: RigPattern,
    /// Included angle of each additional camera with respect to C-0, degrees.
    pub included_angles: Vec<f64>,
    /// Distance from every optical center to the object center, mm.
    pub standoff: f64,
    /// Cone only: where on the cone the cameras sit, degrees from the plane layout.
    pub elevation: f64,
    pub intrinsics: CameraIntrinsics,
}

/// Default desk-scale intrinsics: 640x480, about 35 degrees horizontal field of view.
pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 1000.0,
        fy: 1000.0,
        cx: 319.5,
        cy: 239.5,
        width: 640,
        height: 480,
    }
}

impl Default for RigSpec {
    fn default() -> Self {
        Self {
            pattern: RigPattern::Plane,
            included_angles: vec![90.0],
            standoff: 2000.0,
            elevation: 45.0,
            intrinsics: default_intrinsics(),
        }
    }
}

/// Builds the rig in the world frame. C-0 sits at `(0, 0, -standoff)`
/// looking along +Z at the origin with +Y pointing down; each further camera
/// is C-0 swung about the origin by its included angle.
pub fn make_rig(spec: &RigSpec) -> Result<Vec<CameraView>, SimError> {
    if !(spec.standoff.is_finite() && spec.standoff > 0.0) {
        return Err(SimError::InvalidStandoff(spec.standoff));
    }
    let to_c0 = Vector3::new(0.0, 0.0, -1.0);
    let mut views = vec![CameraView::new(
        spec.intrinsics,
        RigidTransform::from_translation(to_c0 * spec.standoff),
        0,
    )];
    for (i, &angle) in spec.included_angles.iter().enumerate() {
        if !(angle > 0.0 && angle < 180.0) {
            return Err(SimError::InvalidAngle(angle));
        }
        let swing = match spec.pattern {
            RigPattern::Plane => Vector3::x(),
            RigPattern::Cone => {
                let e = spec.elevation.to_radians();
                Vector3::new(e.cos(), e.sin(), 0.0)
            }
        };
        // minimal rotation carrying the C-0 direction onto the new one
        let axis = to_c0.cross(&swing);
        let r = rotation_about(&axis, angle.to_radians());
        views.push(CameraView::new(
            spec.intrinsics,
            RigidTransform::new(r, r * to_c0 * spec.standoff),
            i + 1,
        ));
    }
    Ok(views)
}

/// The same rig at another image width, keeping the field of view.
pub fn rescale_rig(views: &[CameraView], width: u32) -> Vec<CameraView> {
    views
        .iter()
        .map(|v| CameraView::new(v.intrinsics.rescaled(width), *v.object_from_camera(), v.index))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionMode {
    #[default]
    FreeMove,
    RotateOnly,
    CamerasMove,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionSpec {
    pub mode: MotionMode,
    pub frames: usize,
    /// Largest per-frame translation, mm.
    pub translation_step: f64,
    /// Largest per-frame rotation, degrees.
    pub rotation_step: f64,
    /// Frames between spline waypoints.
    pub waypoint_spacing: usize,
    pub seed: u64,
}

impl Default for MotionSpec {
    fn default() -> Self {
        Self {
            mode: MotionMode::FreeMove,
            frames: 120,
            translation_step: 3.0,
            rotation_step: 1.5,
            waypoint_spacing: 20,
            seed: 1,
        }
    }
}

/// Colors and noise of the rendered frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneStyle {
    pub foreground: [u8; 3],
    pub background: [u8; 3],
    /// Standard deviation of additive per-channel Gaussian noise, in gray levels.
    pub noise_sigma: f64,
    /// Samples per pixel along each axis around the object.
    pub antialias: u32,
}

impl Default for SceneStyle {
    fn default() -> Self {
        Self {
            foreground: [220, 120, 40],
            background: [40, 90, 170],
            noise_sigma: 0.0,
            antialias: 1,
        }
    }
}

/// Mixes seed components into one 64-bit stream seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        // splitmix64 finalizer
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Smooth curve through `waypoints[j]` at frames `j * spacing`.
fn spline(waypoints: &[Vector3<f64>], spacing: usize, k: usize) -> Vector3<f64> {
    let j = (k / spacing).min(waypoints.len() - 2);
    let t = ((k - j * spacing) as f64 / spacing as f64).min(1.0);
    waypoints[j].lerp(&waypoints[j + 1], smoothstep(t))
}

fn random_ball(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let dir: [f64; 3] = UnitSphere.sample(rng);
    Vector3::from(dir) * rng.random::<f64>().cbrt()
}

/// Per-frame motion relative to the first frame: a rotation vector and a
/// translation, both starting at zero.
fn motion_curve(spec: &MotionSpec, rng: &mut ChaCha8Rng) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    let n = spec.frames.max(1);
    let spacing = spec.waypoint_spacing.max(1);
    let count = n.div_ceil(spacing) + 2;
    let mut rot: Vec<Vector3<f64>> = (0..count).map(|_| random_ball(rng)).collect();
    let mut trans: Vec<Vector3<f64>> = (0..count).map(|_| random_ball(rng)).collect();
    rot[0] = Vector3::zeros();
    trans[0] = Vector3::zeros();
    if spec.mode == MotionMode::RotateOnly {
        trans.iter_mut().for_each(|t| *t = Vector3::zeros());
    }

    // scale so the largest per-frame step meets the configured amplitude
    let max_step = |w: &[Vector3<f64>], rotation: bool| {
        (1..n)
            .map(|k| {
                let (a, b) = (spline(w, spacing, k - 1), spline(w, spacing, k));
                if rotation {
                    let ra = rotation_about(&a, a.norm());
                    let rb = rotation_about(&b, b.norm());
                    crate::metrics::rotation_error(&ra, &rb).unwrap_or(0.0).to_radians()
                } else {
                    (b - a).norm()
                }
            })
            .fold(0.0, f64::max)
    };
    let rescale = |w: &mut Vec<Vector3<f64>>, target: f64, rotation: bool| {
        for _ in 0..3 {
            let m = max_step(w, rotation);
            if m <= 0.0 {
                w.iter_mut().for_each(|v| *v = Vector3::zeros());
                return;
            }
            let s = target / m;
            w.iter_mut().for_each(|v| *v *= s);
        }
    };
    rescale(&mut rot, spec.rotation_step.max(0.0).to_radians(), true);
    rescale(&mut trans, spec.translation_step.max(0.0), false);
    (0..n)
        .map(|k| (spline(&rot, spacing, k), spline(&trans, spacing, k)))
        .collect()
}

/// Object poses (world from mesh) for every frame of a seeded trajectory.
///
/// The object starts centered at the world origin with a seeded random
/// orientation. `cameras_move` keeps the object still and moves the rig
/// rigidly about it, expressed here as the equivalent object motion.
pub fn generate_trajectory(mesh: &TriangleMesh, motion: &MotionSpec) -> Vec<RigidTransform> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[motion.seed, 0x7472_616a]));
    let axis = random_ball(&mut rng);
    let r0 = rotation_about(&axis, rng.random_range(0.0..2.0 * PI));
    let c = mesh.bbox_center();
    let start = RigidTransform::new(r0, -(r0 * c));
    let curve = motion_curve(motion, &mut rng);
    curve
        .iter()
        .map(|(w, t)| {
            let r = rotation_about(w, w.norm());
            match motion.mode {
                MotionMode::FreeMove | MotionMode::RotateOnly => {
                    // rotate about the object's center, then translate it
                    let about_center = RigidTransform::new(r, *t);
                    about_center.compose(&start)
                }
                MotionMode::CamerasMove => RigidTransform::new(r, *t).inverse().compose(&start),
            }
        })
        .collect()
}

/// A rendered-on-demand synthetic sequence. Ground truth is in the world
/// (rig) frame; C-0's camera frame is `c0_from_world` applied to it.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub mesh: TriangleMesh,
    pub rig: Vec<CameraView>,
    pub gt: Vec<RigidTransform>,
    pub style: SceneStyle,
    pub seed: u64,
}

impl SyntheticSequence {
    pub fn frames(&self) -> usize {
        self.gt.len()
    }

    /// Ground truth in C-0's camera frame.
    pub fn gt_in_c0(&self) -> Vec<RigidTransform> {
        let c0 = self.rig[0].camera_from_object();
        self.gt.iter().map(|p| c0.compose(p)).collect()
    }

    pub fn render(&self, k: usize, view: usize) -> RgbImage {
        render_frame(&self.mesh, &self.rig[view], &self.gt[k], &self.style, mix_seed(&[self.seed, k as u64, view as u64]))
    }

    pub fn with_rig(&self, rig: Vec<CameraView>) -> Self {
        Self { rig, ..self.clone() }
    }
}

impl FrameSource for SyntheticSequence {
    fn frame_count(&self) -> usize {
        self.frames()
    }

    fn view_count(&self) -> usize {
        self.rig.len()
    }

    fn images(&self, k: usize, views: &[usize]) -> Result<Vec<RgbImage>, String> {
        if k >= self.frames() {
            return Err(format!("frame {k} out of range"));
        }
        views
            .iter()
            .map(|&v| {
                if v >= self.rig.len() {
                    Err(format!("view {v} out of range"))
                } else {
                    Ok(self.render(k, v))
                }
            })
            .collect()
    }
}

fn shade(base: [u8; 3], factor: f64) -> [f64; 3] {
    base.map(|c| c as f64 * factor)
}

fn background(style: &SceneStyle, cell: usize, x: usize, y: usize) -> [f64; 3] {
    let checker = ((x / cell) + (y / cell)).is_multiple_of(2);
    shade(style.background, if checker { 1.0 } else { 0.85 })
}

/// Renders one frame: a softly textured object over a checkered background,
/// box-filtered over `antialias`^2 samples per pixel near the object, plus
/// optional Gaussian noise seeded by `seed`.
pub fn render_frame(
    mesh: &TriangleMesh,
    view: &CameraView,
    pose: &RigidTransform,
    style: &SceneStyle,
    seed: u64,
) -> RgbImage {
    let k = view.intrinsics;
    let (w, h) = (k.width as usize, k.height as usize);
    let cell = (w / 16).max(1);
    let mut color: Vec<[f64; 3]> = (0..w * h).map(|i| background(style, cell, i % w, i / w)).collect();

    if let Some(roi) = projected_roi(mesh, view, pose) {
        let a = style.antialias.max(1);
        let fine = render_template(mesh, &sub_view(view, &roi, a), pose);
        let fw = (roi.width() * a) as usize;
        let inv = 1.0 / (a * a) as f64;
        for y in roi.y0 as usize..roi.y1 as usize {
            for x in roi.x0 as usize..roi.x1 as usize {
                let mut acc = [0.0; 3];
                for sy in 0..a as usize {
                    for sx in 0..a as usize {
                        let fx = (x - roi.x0 as usize) * a as usize + sx;
                        let fy = (y - roi.y0 as usize) * a as usize + sy;
                        let j = fy * fw + fx;
                        let c = if fine.mask.occupancy[j] {
                            let p = fine.surface[j] / 25.0;
                            shade(style.foreground, 0.85 + 0.15 * (p.x.sin() * p.y.cos() + p.z.sin()) / 2.0)
                        } else {
                            background(style, cell, x, y)
                        };
                        for ch in 0..3 {
                            acc[ch] += c[ch] * inv;
                        }
                    }
                }
                color[y * w + x] = acc;
            }
        }
    }

    let noise = (style.noise_sigma > 0.0).then(|| Normal::new(0.0, style.noise_sigma).ok()).flatten();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = RgbImage::new(k.width, k.height);
    for (i, c) in color.iter().enumerate() {
        let px = c.map(|v| {
            let n = noise.map_or(0.0, |d| d.sample(&mut rng));
            (v + n).round().clamp(0.0, 255.0) as u8
        });
        img.data[i * 3..i * 3 + 3].copy_from_slice(&px);
    }
    img
}

pub fn generate_sequence(
    mesh: &TriangleMesh,
    rig: &[CameraView],
    motion: &MotionSpec,
    style: &SceneStyle,
) -> SyntheticSequence {
    SyntheticSequence {
        mesh: mesh.clone(),
        rig: rig.to_vec(),
        gt: generate_trajectory(mesh, motion),
        style: *style,
        seed: motion.seed,
    }
}

/// Errors of one tracked configuration, averaged over its frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub rotation_deg: f64,
    /// Mean absolute translation error along C-0's axes, mm.
    pub axis: [f64; 3],
    pub lost: usize,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableColumn {
    pub label: String,
    pub cameras: String,
    /// `None` when every run in the column failed.
    pub result: Option<CellResult>,
    pub errors: Vec<String>,
}

/// Error table with one column per configuration and the rows
/// `r(°)`, `tx(mm)`, `ty(mm)`, `tz(mm)`, `Lost Number`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub title: String,
    pub key_label: String,
    pub columns: Vec<TableColumn>,
}

pub const TABLE_SCHEMA: &str = "mvtrack-error-table/1";

impl ErrorTable {
    pub fn column(&self, label: &str) -> Option<&TableColumn> {
        self.columns.iter().find(|c| c.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# {TABLE_SCHEMA}\n# {}\n", self.title);
        let row = |name: &str, f: &dyn Fn(&TableColumn) -> String| {
            let mut line = name.to_string();
            for c in &self.columns {
                line.push(',');
                line.push_str(&f(c));
            }
            line.push('\n');
            line
        };
        let num = |f: fn(&CellResult) -> f64| {
            move |c: &TableColumn| c.result.as_ref().map_or("NaN".to_string(), |r| format!("{:.4}", f(r)))
        };
        out += &row(&self.key_label, &|c| c.label.clone());
        out += &row("Camera Index", &|c| c.cameras.clone());
        out += &row("r(°)", &num(|r| r.rotation_deg));
        out += &row("tx(mm)", &num(|r| r.axis[0]));
        out += &row("ty(mm)", &num(|r| r.axis[1]));
        out += &row("tz(mm)", &num(|r| r.axis[2]));
        out += &row("Lost Number", &|c| c.result.as_ref().map_or("NaN".into(), |r| r.lost.to_string()));
        for c in &self.columns {
            for e in &c.errors {
                out += &format!("# error [{}]: {}\n", c.label, e.replace('\n', " "));
            }
        }
        out
    }
}

/// Tracks `seq` with the listed views starting from ground truth at frame
/// 0 and scores frames 1.. in C-0's camera frame.
pub fn evaluate_configuration(
    seq: &SyntheticSequence,
    views: &[usize],
    cfg: &SolverConfig,
    lost_rule: &LostRule,
) -> Result<CellResult, String> {
    if seq.frames() < 2 {
        return Err("sequence needs at least two frames".into());
    }
    let rig: Vec<CameraView> = seq.rig.clone();
    let state = TrackerState::new(rig, seq.gt[0], seq.mesh.bbox_center()).subset(views);
    let source = Subset { seq, views };
    let all: Vec<usize> = (0..views.len()).collect();
    let tracked = track_sequence(state, &source, &all, &seq.mesh, cfg, Some(&seq.gt), lost_rule, 1);
    let c0 = seq.rig[0].camera_from_object();
    let est: Vec<RigidTransform> = tracked.rig_poses.iter().map(|p| c0.compose(p)).collect();
    let gt: Vec<RigidTransform> = seq.gt[1..].iter().map(|p| c0.compose(p)).collect();
    let (report, _) = score_sequence(&est, &gt, seq.mesh.vertices(), seq.mesh.bbox_longest_side(), tracked.resets.len())
        .map_err(|e| e.to_string())?;
    Ok(CellResult {
        rotation_deg: report.mean_rotation_deg,
        axis: report.mean_axis,
        lost: report.lost,
        frames: report.frames,
    })
}

/// View subset of a sequence, renumbered from zero.
struct Subset<'a> {
    seq: &'a SyntheticSequence,
    views: &'a [usize],
}

impl FrameSource for Subset<'_> {
    fn frame_count(&self) -> usize {
        self.seq.frames()
    }

    fn view_count(&self) -> usize {
        self.views.len()
    }

    fn images(&self, k: usize, views: &[usize]) -> Result<Vec<RgbImage>, String> {
        let mapped: Option<Vec<usize>> = views.iter().map(|&v| self.views.get(v).copied()).collect();
        self.seq.images(k, &mapped.ok_or("view out of range")?)
    }
}

/// Averages cell results over meshes: mean errors, summed lost counts.
fn combine(label: String, cameras: String, cells: Vec<Result<CellResult, String>>) -> TableColumn {
    let errors: Vec<String> = cells.iter().filter_map(|c| c.as_ref().err().cloned()).collect();
    let ok: Vec<&CellResult> = cells.iter().filter_map(|c| c.as_ref().ok()).collect();
    let result = (!ok.is_empty()).then(|| {
        let n = ok.len() as f64;
        CellResult {
            rotation_deg: ok.iter().map(|c| c.rotation_deg).sum::<f64>() / n,
            axis: [0, 1, 2].map(|i| ok.iter().map(|c| c.axis[i]).sum::<f64>() / n),
            lost: ok.iter().map(|c| c.lost).sum(),
            frames: ok.iter().map(|c| c.frames).sum(),
        }
    });
    TableColumn {
        label,
        cameras,
        result,
        errors,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub rig: RigSpec,
    pub motion: MotionSpec,
    pub style: SceneStyle,
    pub solver: SolverConfig,
    pub lost_rule: LostRule,
    /// Include a monocular C-0 column.
    pub monocular: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            rig: RigSpec {
                included_angles: vec![10.0, 30.0, 90.0],
                ..RigSpec::default()
            },
            motion: MotionSpec::default(),
            style: SceneStyle::default(),
            solver: SolverConfig::default(),
            lost_rule: LostRule::default(),
            monocular: true,
        }
    }
}

fn angle_label(a: f64) -> String {
    if a.fract() == 0.0 {
        format!("{a:.0}°")
    } else {
        format!("{a}°")
    }
}

/// Tracks every mesh once per configuration (monocular C-0, then C-0 paired
/// with each angled camera) and averages the errors over meshes.
pub fn run_angle_sweep(meshes: &[TriangleMesh], spec: &SweepSpec) -> Result<ErrorTable, SimError> {
    if meshes.is_empty() || spec.rig.included_angles.is_empty() {
        return Err(SimError::InvalidSweep("need at least one mesh and one angle".into()));
    }
    let rig = make_rig(&spec.rig)?;
    let mut configs: Vec<(String, String, Vec<usize>)> = Vec::new();
    if spec.monocular {
        configs.push(("Mono.".into(), "C-0".into(), vec![0]));
    }
    for (i, &a) in spec.rig.included_angles.iter().enumerate() {
        configs.push((angle_label(a), format!("C-0/C-{}", i + 1), vec![0, i + 1]));
    }
    let sequences: Vec<SyntheticSequence> = meshes
        .iter()
        .enumerate()
        .map(|(m, mesh)| {
            let motion = MotionSpec {
                seed: mix_seed(&[spec.motion.seed, m as u64]),
                ..spec.motion
            };
            generate_sequence(mesh, &rig, &motion, &spec.style)
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..configs.len()).flat_map(|c| (0..meshes.len()).map(move |m| (c, m))).collect();
    let results: Vec<Result<CellResult, String>> = jobs
        .par_iter()
        .map(|&(c, m)| evaluate_configuration(&sequences[m], &configs[c].2, &spec.solver, &spec.lost_rule))
        .collect();
    let mut results = results.into_iter();
    let columns = configs
        .into_iter()
        .map(|(label, cameras, _)| combine(label, cameras, results.by_ref().take(meshes.len()).collect()))
        .collect();
    Ok(ErrorTable {
        title: format!("{:?} rig, {:?}, {} meshes", spec.rig.pattern, spec.motion.mode, meshes.len()),
        key_label: "Included Angle".into(),
        columns,
    })
}

/// Binocular tracking with the first included angle at each image width
/// (aspect ratio and field of view held).
pub fn run_resolution_sweep(mesh: &TriangleMesh, widths: &[u32], spec: &SweepSpec) -> Result<ErrorTable, SimError> {
    if widths.is_empty() || widths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SimError::InvalidSweep("widths must be non-empty and ascending".into()));
    }
    let angle = *spec
        .rig
        .included_angles
        .first()
        .ok_or_else(|| SimError::InvalidSweep("need one included angle".into()))?;
    let rig = make_rig(&RigSpec {
        included_angles: vec![angle],
        ..spec.rig.clone()
    })?;
    let base = generate_sequence(mesh, &rig, &spec.motion, &spec.style);
    let results: Vec<Result<CellResult, String>> = widths
        .par_iter()
        .map(|&w| evaluate_configuration(&base.with_rig(rescale_rig(&rig, w)), &[0, 1], &spec.solver, &spec.lost_rule))
        .collect();
    let columns = widths
        .iter()
        .zip(results)
        .map(|(w, r)| combine(w.to_string(), "C-0/C-1".into(), vec![r]))
        .collect();
    Ok(ErrorTable {
        title: format!("{} binocular rig, resolution sweep", angle_label(angle)),
        key_label: "Reso.(width)".into(),
        columns,
    })
}

pub mod meshes {
    //! Procedural test objects, all between 90 and 230 mm on their longest side.

    use super::*;
    use std::collections::HashMap;

    fn mesh(vertices: Vec<Vector3<f64>>, faces: Vec<[u32; 3]>) -> TriangleMesh {
        TriangleMesh::new(vertices, faces).expect("procedural mesh is valid")
    }

    /// Subdivided icosahedron of the given radius centered at the origin.
    pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut v: Vec<Vector3<f64>> = [
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ]
        .iter()
        .map(|p| Vector3::from(*p).normalize())
        .collect();
        let mut f: Vec<[u32; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
            let mut mid = |a: u32, b: u32, v: &mut Vec<Vector3<f64>>| {
                *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    v.push(((v[a as usize] + v[b as usize]) / 2.0).normalize());
                    v.len() as u32 - 1
                })
            };
            let mut next = Vec::with_capacity(f.len() * 4);
            for [a, b, c] in f {
                let ab = mid(a, b, &mut v);
                let bc = mid(b, c, &mut v);
                let ca = mid(c, a, &mut v);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            f = next;
        }
        mesh(v.into_iter().map(|p| p * radius).collect(), f)
    }

    /// Sphere with smooth radial bumps, so its silhouette reveals rotation.
    pub fn bumpy_sphere(radius: f64) -> TriangleMesh {
        let base = icosphere(1.0, 4);
        let v = base
            .vertices()
            .iter()
            .map(|p| {
                let bump = 0.18 * (3.0 * p.x).sin() * (2.0 * p.y + 0.5).cos() + 0.12 * (4.0 * p.z).sin();
                p * radius * (1.0 + bump)
            })
            .collect();
        mesh(v, base.faces().to_vec())
    }

    fn push_box(v: &mut Vec<Vector3<f64>>, f: &mut Vec<[u32; 3]>, lo: Vector3<f64>, hi: Vector3<f64>) {
        let o = v.len() as u32;
        for i in 0..8 {
            v.push(Vector3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            ));
        }
        let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
        for [a, b, c, d] in quads {
            f.push([o + a, o + b, o + c]);
            f.push([o + a, o + c, o + d]);
        }
    }

    /// Axis-aligned box centered at the origin.
    pub fn cuboid(size: Vector3<f64>) -> TriangleMesh {
        let (mut v, mut f) = (Vec::new(), Vec::new());
        push_box(&mut v, &mut f, -size / 2.0, size / 2.0);
        mesh(v, f)
    }

    /// 200 x 130 x 100 mm block with a rectangular notch cut from one end.
    pub fn notched_box() -> TriangleMesh {
        let (mut v, mut f) = (Vec::new(), Vec::new());
        let b = |x, y, z| Vector3::new(x, y, z);
        push_box(&mut v, &mut f, b(-100.0, -65.0, -50.0), b(40.0, 65.0, 50.0));
        push_box(&mut v, &mut f, b(40.0, -65.0, -50.0), b(100.0, -15.0, 50.0));
        push_box(&mut v, &mut f, b(40.0, 35.0, -50.0), b(100.0, 65.0, 50.0));
        mesh(v, f)
    }

    /// L-shaped bracket, 180 mm long legs.
    pub fn l_bracket() -> TriangleMesh {
        let (mut v, mut f) = (Vec::new(), Vec::new());
        let b = |x, y, z| Vector3::new(x, y, z);
        push_box(&mut v, &mut f, b(-90.0, 50.0, -45.0), b(90.0, 90.0, 45.0));
        push_box(&mut v, &mut f, b(-90.0, -90.0, -45.0), b(-50.0, 50.0, 45.0));
        push_box(&mut v, &mut f, b(10.0, 20.0, -20.0), b(40.0, 50.0, 20.0));
        mesh(v, f)
    }

    /// Tube swept along a (2, 3) torus knot, about 200 mm across.
    pub fn torus_knot() -> TriangleMesh {
        let (seg, ring) = (240usize, 12usize);
        let (big, small, tube) = (62.0, 26.0, 15.0);
        let curve = |t: f64| {
            let (p, q) = (2.0, 3.0);
            let r = big + small * (q * t).cos();
            Vector3::new(r * (p * t).cos(), r * (p * t).sin(), small * (q * t).sin())
        };
        let mut v = Vec::with_capacity(seg * ring);
        for i in 0..seg {
            let t = 2.0 * PI * i as f64 / seg as f64;
            let c = curve(t);
            let tangent = (curve(t + 1e-4) - curve(t - 1e-4)).normalize();
            let n = tangent.cross(&Vector3::z()).normalize();
            let b = tangent.cross(&n);
            for j in 0..ring {
                let a = 2.0 * PI * j as f64 / ring as f64;
                v.push(c + (n * a.cos() + b * a.sin()) * tube);
            }
        }
        let mut f = Vec::with_capacity(seg * ring * 2);
        for i in 0..seg {
            for j in 0..ring {
                let idx = |i: usize, j: usize| ((i % seg) * ring + j % ring) as u32;
                f.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                f.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        mesh(v, f)
    }

    /// The default four-object suite.
    pub fn default_suite() -> Vec<(&'static str, TriangleMesh)> {
        vec![
            ("bumpy_sphere", bumpy_sphere(70.0)),
            ("notched_box", notched_box()),
            ("l_bracket", l_bracket()),
            ("torus_knot", torus_knot()),
        ]
    }

    /// Looks up a suite mesh by name.
    pub fn by_name(name: &str) -> Option<TriangleMesh> {
        default_suite().into_iter().find(|(n, _)| *n == name).map(|(_, m)| m)
    }
}

/// Random rigid perturbation with the given translation (mm) and rotation (degrees) magnitudes.
pub fn random_perturbation(rng: &mut impl Rng, translation: f64, rotation_deg: f64) -> RigidTransform {
    let t: [f64; 3] = UnitSphere.sample(rng);
    let r: [f64; 3] = UnitSphere.sample(rng);
    exp_se3(&Twist::new(
        Vector3::from(t) * translation,
        Vector3::from(r) * rotation_deg.to_radians(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis_angle(a: &CameraView, b: &CameraView) -> f64 {
        a.optical_axis().angle(&b.optical_axis())
    }

    #[test]
    fn plane_rig_geometry() {
        let rig = make_rig(&RigSpec::default()).unwrap();
        assert_eq!(rig.len(), 2);
        assert!((axis_angle(&rig[0], &rig[1]) - PI / 2.0).abs() < 1e-12);
        for v in &rig {
            assert!((v.center().norm() - 2000.0).abs() < 1e-9);
            // looks at the origin
            assert!(v.optical_axis().dot(&(-v.center()).normalize()) > 1.0 - 1e-12);
            assert!(v.center().y.abs() < 1e-9);
        }
        assert!((rig[0].center() - Vector3::new(0.0, 0.0, -2000.0)).norm() < 1e-12);
        let mono = make_rig(&RigSpec {
            included_angles: vec![],
            ..RigSpec::default()
        })
        .unwrap();
        assert_eq!(mono.len(), 1);
    }

    #[test]
    fn cone_rig_angles() {
        for a in [10.0, 30.0, 90.0, 150.0] {
            let rig = make_rig(&RigSpec {
                pattern: RigPattern::Cone,
                included_angles: vec![a],
                ..RigSpec::default()
            })
            .unwrap();
            assert!((axis_angle(&rig[0], &rig[1]).to_degrees() - a).abs() < 1e-9);
            assert!(rig[1].center().y.abs() > 1.0);
        }
    }

    #[test]
    fn invalid_angles_rejected() {
        for a in [0.0, 180.0, -5.0, f64::NAN] {
            let spec = RigSpec {
                included_angles: vec![a],
                ..RigSpec::default()
            };
            assert!(make_rig(&spec).is_err());
        }
    }

    #[test]
    fn mesh_sizes_in_range() {
        for (name, m) in meshes::default_suite() {
            let d = m.bbox_longest_side();
            assert!((90.0..=230.0).contains(&d), "{name}: {d}");
        }
    }

    #[test]
    fn rotate_only_keeps_center_fixed() {
        let mesh = meshes::notched_box();
        let motion = MotionSpec {
            mode: MotionMode::RotateOnly,
            frames: 40,
            ..MotionSpec::default()
        };
        let traj = generate_trajectory(&mesh, &motion);
        let c = mesh.bbox_center();
        let p0 = traj[0].transform_point(&c);
        for p in &traj {
            assert!((p.transform_point(&c) - p0).norm() < 1e-9);
        }
        assert!(crate::metrics::rotation_error(&traj[0].rotation, &traj[39].rotation).unwrap() > 1.0);
    }

    #[test]
    fn zero_amplitude_is_static() {
        let mesh = meshes::l_bracket();
        let motion = MotionSpec {
            translation_step: 0.0,
            rotation_step: 0.0,
            frames: 10,
            ..MotionSpec::default()
        };
        let traj = generate_trajectory(&mesh, &motion);
        assert!(traj.iter().all(|p| *p == traj[0]));
    }

    #[test]
    fn steps_bounded_by_amplitude() {
        let mesh = meshes::l_bracket();
        for mode in [MotionMode::FreeMove, MotionMode::CamerasMove] {
            let motion = MotionSpec {
                mode,
                frames: 60,
                translation_step: 2.0,
                rotation_step: 1.0,
                ..MotionSpec::default()
            };
            let traj = generate_trajectory(&mesh, &motion);
            let c = mesh.bbox_center();
            let mut max_r: f64 = 0.0;
            for w in traj.windows(2) {
                let r = crate::metrics::rotation_error(&w[0].rotation, &w[1].rotation).unwrap();
                max_r = max_r.max(r);
                assert!(r <= 1.0 + 1e-6, "{r}");
                if mode == MotionMode::FreeMove {
                    let d = (w[1].transform_point(&c) - w[0].transform_point(&c)).norm();
                    assert!(d <= 2.0 + 1e-6, "{d}");
                }
            }
            assert!(max_r > 0.9);
        }
    }

    #[test]
    fn sequences_are_deterministic() {
        let mesh = meshes::bumpy_sphere(60.0);
        let rig = make_rig(&RigSpec {
            intrinsics: default_intrinsics().rescaled(160),
            ..RigSpec::default()
        })
        .unwrap();
        let motion = MotionSpec {
            frames: 5,
            seed: 42,
            ..MotionSpec::default()
        };
        let style = SceneStyle {
            noise_sigma: 4.0,
            ..SceneStyle::default()
        };
        let a = generate_sequence(&mesh, &rig, &motion, &style);
        let b = generate_sequence(&mesh, &rig, &motion, &style);
        assert_eq!(a.gt, b.gt);
        for k in 0..5 {
            for v in 0..2 {
                assert_eq!(a.render(k, v), b.render(k, v));
            }
        }
        assert_ne!(a.render(1, 0), a.render(2, 0));
        let other = generate_sequence(&mesh, &rig, &MotionSpec { seed: 43, ..motion }, &style);
        assert_ne!(a.gt, other.gt);
    }

    #[test]
    fn object_visible_in_all_views() {
        let rig = make_rig(&RigSpec {
            included_angles: vec![10.0, 30.0, 90.0],
            ..RigSpec::default()
        })
        .unwrap();
        for (name, mesh) in meshes::default_suite() {
            let seq = generate_sequence(&mesh, &rig, &MotionSpec::default(), &SceneStyle::default());
            for k in [0, 60, 119] {
                for v in &rig {
                    let m = render_template(&mesh, v, &seq.gt[k]).mask;
                    let c = m.centroid().unwrap();
                    assert!(m.count() > 2000, "{name} frame {k}");
                    assert!(c.x > 100.0 && c.x < 540.0 && c.y > 80.0 && c.y < 400.0, "{name} {c:?}");
                }
            }
        }
    }

    #[test]
    fn error_table_csv_layout() {
        let table = ErrorTable {
            title: "t".into(),
            key_label: "Included Angle".into(),
            columns: vec![
                TableColumn {
                    label: "Mono.".into(),
                    cameras: "C-0".into(),
                    result: Some(CellResult {
                        rotation_deg: 1.0,
                        axis: [0.5, 0.25, 22.0],
                        lost: 2,
                        frames: 10,
                    }),
                    errors: vec![],
                },
                TableColumn {
                    label: "90°".into(),
                    cameras: "C-0/C-1".into(),
                    result: None,
                    errors: vec!["boom".into()],
                },
            ],
        };
        let csv = table.to_csv();
        let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        let labels: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
        assert_eq!(
            labels,
            ["Included Angle", "Camera Index", "r(°)", "tx(mm)", "ty(mm)", "tz(mm)", "Lost Number"]
        );
        assert_eq!(rows[1], "Camera Index,C-0,C-0/C-1");
        assert_eq!(rows[5], "tz(mm),22.0000,NaN");
        assert!(csv.contains("# error [90°]: boom"));
    }
}
