//! Joint multi-view Gauss-Newton pose estimation in the object-centered frame.
//!
//! Every view's contour-band samples contribute to one 6x6 system in the
//! object-centered frame `O_o`. The increment is applied on the left of the
//! latent object pose and mapped into each camera by conjugation with that
//! camera's `camera_from_object`.
//!
//! Within a round the rendered level set is held fixed and moved rigidly
//! with the pose: a sample tied to model point `X` reads the field at
//! `pixel - (project(T X) - project(T0 X))`, where `T0` is the render pose.

use nalgebra::{Matrix6, RowVector6, Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraView;
use crate::energy::{
    build_color_model, energy_phi_derivative, pixel_energy, ColorModel, EnergyConfig, EnergyError, FrameObservation,
    Sample,
};
use crate::geometry::{exp_se3, RigidTransform, Twist};
use crate::image::RgbImage;
use crate::metrics::{rotation_error, translation_error, LostRule};
use crate::renderer::{contour_band_strided, render_template_field, TriangleMesh};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("no usable samples in any view")]
    EmptySampleSet,
    #[error("normal equations are singular even at the maximum damping")]
    SingularSystem,
    #[error("tracking lost: {0}")]
    LostTrack(String),
    #[error("expected {expected} images, got {got}")]
    ImageCount { expected: usize, got: usize },
    #[error("image {index} is {got_w}x{got_h}, camera expects {want_w}x{want_h}")]
    ImageSize {
        index: usize,
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

/// How a sample's gradient enters the right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    /// `g = sum J^T`: Newton step on the energy with `J^T J` as Hessian.
    #[default]
    Unit,
    /// `g = sum J^T F`: Gauss-Newton on the squared per-pixel energies.
    EnergyWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub rounds: u32,
    pub iters_per_round: u32,
    pub residual: ResidualMode,
    /// Levenberg damping at the start of each round.
    pub initial_damping: f64,
    /// Damping used the first time a step is rejected while damping is zero.
    pub first_damping: f64,
    pub damping_factor: f64,
    pub max_damping: f64,
    /// Consecutive rounds of rising energy that count as divergence.
    pub divergence_rounds: u32,
    /// Relative rise of the round-start energy that counts toward divergence.
    pub divergence_tolerance: f64,
    /// With several rounds, render the last round's templates at image
    /// resolution instead of `energy.template_scale`.
    pub native_final_round: bool,
    pub energy: EnergyConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rounds: 1,
            iters_per_round: 7,
            residual: ResidualMode::Unit,
            initial_damping: 0.0,
            first_damping: 1.0,
            damping_factor: 10.0,
            max_damping: 1e6,
            divergence_rounds: 3,
            divergence_tolerance: 0.05,
            native_final_round: true,
            energy: EnergyConfig::default(),
        }
    }
}

impl SolverConfig {
    /// Schedule used for annotation-quality estimates: 5 rounds of 7 iterations.
    pub fn annotation() -> Self {
        Self {
            rounds: 5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        self.energy.validate()?;
        if !(self.divergence_tolerance >= 0.0 && self.divergence_tolerance.is_finite()) {
            return Err(SolverError::InvalidConfig("divergence_tolerance must be finite and non-negative".into()));
        }
        if self.rounds == 0 || self.iters_per_round == 0 {
            return Err(SolverError::InvalidConfig("rounds and iters_per_round must be positive".into()));
        }
        if !(self.damping_factor > 1.0 && self.first_damping > 0.0 && self.max_damping >= self.first_damping)
            || !(self.initial_damping >= 0.0)
        {
            return Err(SolverError::InvalidConfig("damping schedule must be positive and increasing".into()));
        }
        Ok(())
    }
}

/// Accumulated `sum J^T J` and `sum J^T r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalEquations {
    pub h: Matrix6<f64>,
    pub g: Vector6<f64>,
    pub samples: usize,
    pub skipped: usize,
    pub energy: f64,
}

impl Default for NormalEquations {
    fn default() -> Self {
        Self {
            h: Matrix6::zeros(),
            g: Vector6::zeros(),
            samples: 0,
            skipped: 0,
            energy: 0.0,
        }
    }
}

impl NormalEquations {
    pub fn add(&mut self, j: &RowVector6<f64>, residual: f64) {
        let jt = j.transpose();
        self.h += jt * j;
        self.g += jt * residual;
        self.samples += 1;
    }

    pub fn merge(&mut self, other: &NormalEquations) {
        self.h += other.h;
        self.g += other.g;
        self.samples += other.samples;
        self.skipped += other.skipped;
        self.energy += other.energy;
    }
}

/// Multi-view tracker state.
///
/// Per-camera poses are always derived from the single latent
/// `object_from_template`, so they cannot drift apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    /// Camera placements in the rig frame (`object_from_camera` = rig from camera).
    #[serde(with = "views_serde")]
    rig: Vec<CameraView>,
    /// Object-centered frame in the rig frame, frozen within a frame.
    rig_from_object: RigidTransform,
    /// Latent pose: object-centered frame from mesh frame.
    object_from_template: RigidTransform,
    /// Origin of the object-centered frame in mesh coordinates.
    center: Vector3<f64>,
    #[serde(skip)]
    views: Vec<CameraView>,
    #[serde(skip)]
    camera_poses: Vec<RigidTransform>,
    pub color_models: Vec<Option<ColorModel>>,
    pub lost: bool,
}

impl TrackerState {
    /// `rig_from_template` is the object pose in the rig frame; `center` the
    /// object-centered origin in mesh coordinates (bounding-box center).
    pub fn new(rig: Vec<CameraView>, rig_from_template: RigidTransform, center: Vector3<f64>) -> Self {
        let n = rig.len();
        let mut s = Self {
            rig,
            rig_from_object: RigidTransform::identity(),
            object_from_template: rig_from_template,
            center,
            views: Vec::new(),
            camera_poses: Vec::new(),
            color_models: vec![None; n],
            lost: false,
        };
        s.recenter();
        s
    }

    /// Re-anchors `O_o` at the current object center and refreshes the views.
    pub fn recenter(&mut self) {
        let rig_from_template = self.rig_from_template();
        self.rig_from_object = rig_from_template.compose(&RigidTransform::from_translation(self.center));
        self.object_from_template = RigidTransform::from_translation(-self.center);
        self.refresh();
    }

    fn refresh(&mut self) {
        let object_from_rig = self.rig_from_object.inverse();
        self.views = self
            .rig
            .iter()
            .map(|v| v.with_object_from_camera(object_from_rig.compose(v.object_from_camera())))
            .collect();
        self.camera_poses = self
            .views
            .iter()
            .map(|v| v.camera_from_object().compose(&self.object_from_template))
            .collect();
    }

    /// Cameras expressed against the current object-centered frame.
    pub fn views(&self) -> &[CameraView] {
        &self.views
    }

    pub fn rig(&self) -> &[CameraView] {
        &self.rig
    }

    pub fn view_count(&self) -> usize {
        self.rig.len()
    }

    pub fn center(&self) -> Vector3<f64> {
        self.center
    }

    pub fn object_from_template(&self) -> &RigidTransform {
        &self.object_from_template
    }

    pub fn rig_from_object(&self) -> &RigidTransform {
        &self.rig_from_object
    }

    pub fn rig_from_template(&self) -> RigidTransform {
        self.rig_from_object.compose(&self.object_from_template)
    }

    /// Object pose in camera `i` (camera from mesh frame).
    pub fn camera_pose(&self, i: usize) -> &RigidTransform {
        &self.camera_poses[i]
    }

    pub fn camera_poses(&self) -> &[RigidTransform] {
        &self.camera_poses
    }

    /// Left-multiplies the latent pose by `exp(dxi)` and re-derives every
    /// camera's pose, i.e. `cTt <- cTo exp(dxi) cTo^-1 cTt` for all views.
    pub fn apply_increment(&self, dxi: &Twist) -> TrackerState {
        let mut next = self.clone();
        next.object_from_template = exp_se3(dxi).compose(&self.object_from_template);
        next.camera_poses = next
            .views
            .iter()
            .map(|v| v.camera_from_object().compose(&next.object_from_template))
            .collect();
        next
    }

    /// Replaces the pose (e.g. a reset to ground truth) and drops color models.
    pub fn reset_to(&mut self, rig_from_template: RigidTransform) {
        self.rig_from_object = RigidTransform::identity();
        self.object_from_template = rig_from_template;
        self.color_models.iter_mut().for_each(|m| *m = None);
        self.lost = false;
        self.recenter();
    }

    /// State restricted to a subset of the cameras, in the given order.
    pub fn subset(&self, views: &[usize]) -> TrackerState {
        let rig = views.iter().map(|&i| self.rig[i].clone()).collect();
        let mut s = TrackerState::new(rig, self.rig_from_template(), self.center);
        s.color_models = views.iter().map(|&i| self.color_models[i].clone()).collect();
        s.lost = self.lost;
        s
    }

    /// Call after deserializing to rebuild derived fields.
    pub fn restore(&mut self) {
        self.refresh();
    }
}

mod views_serde {
    use super::*;
    use crate::camera::CameraIntrinsics;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct ViewRecord {
        intrinsics: CameraIntrinsics,
        object_from_camera: RigidTransform,
        index: usize,
    }

    pub fn serialize<S: Serializer>(views: &[CameraView], s: S) -> Result<S::Ok, S::Error> {
        let records: Vec<ViewRecord> = views
            .iter()
            .map(|v| ViewRecord {
                intrinsics: v.intrinsics,
                object_from_camera: *v.object_from_camera(),
                index: v.index,
            })
            .collect();
        records.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CameraView>, D::Error> {
        let records = Vec::<ViewRecord>::deserialize(d)?;
        Ok(records
            .into_iter()
            .map(|r| CameraView::new(r.intrinsics, r.object_from_camera, r.index))
            .collect())
    }
}

/// Where a sample reads the level set once the object has moved to `current`.
#[inline]
fn sample_position(view: &CameraView, sample: &Sample, current: &RigidTransform) -> Option<nalgebra::Vector2<f64>> {
    let x = view.project_coords(&current.transform_point(&sample.model_point)).ok()?;
    Some(sample.pixel - (x - sample.anchor))
}

/// Energy value and 1x6 pose derivative of one sample at `current`.
///
/// `None` when the model point is behind the camera or the level-set stencil
/// leaves the image.
pub fn sample_jacobian(
    obs: &FrameObservation,
    view: &CameraView,
    sample: &Sample,
    current: &RigidTransform,
    s: f64,
) -> Option<(f64, RowVector6<f64>)> {
    let pos = sample_position(view, sample, current)?;
    let phi = obs.levelset.sample(pos.x, pos.y)?;
    let grad = obs.levelset.gradient(pos.x, pos.y)?;
    let d_phi = energy_phi_derivative(phi, sample.pf, sample.pb, s);
    let dpose = view.pose_jacobian_coords(&sample.model_point, current).ok()?;
    // the field is read at pixel - dx, so dF/dxi = -dF/dphi grad(phi) dx/dxi
    let j = -(grad.transpose() * d_phi) * dpose;
    Some((pixel_energy(phi, sample.pf, sample.pb, s), j))
}

/// Adds one view's samples to `acc`. Fails when every sample was skipped.
pub fn accumulate_view(
    obs: &FrameObservation,
    view: &CameraView,
    state: &TrackerState,
    acc: &mut NormalEquations,
    cfg: &SolverConfig,
) -> Result<(), SolverError> {
    let s = cfg.energy.heaviside_slope;
    let current = state.object_from_template();
    let before = acc.samples;
    for sample in &obs.samples {
        match sample_jacobian(obs, view, sample, current, s) {
            Some((f, j)) => {
                let r = match cfg.residual {
                    ResidualMode::Unit => 1.0,
                    ResidualMode::EnergyWeighted => f,
                };
                acc.add(&j, r);
                acc.energy += f;
            }
            None => acc.skipped += 1,
        }
    }
    if acc.samples == before {
        return Err(SolverError::EmptySampleSet);
    }
    Ok(())
}

/// Summed energy of one view's samples at the state's pose, and the number of samples used.
pub fn view_energy(obs: &FrameObservation, view: &CameraView, state: &TrackerState, s: f64) -> (f64, usize) {
    let current = state.object_from_template();
    obs.samples
        .iter()
        .filter_map(|sample| {
            let pos = sample_position(view, sample, current)?;
            let phi = obs.levelset.sample(pos.x, pos.y)?;
            Some(pixel_energy(phi, sample.pf, sample.pb, s))
        })
        .fold((0.0, 0), |(e, n), f| (e + f, n + 1))
}

/// Solves `(H + lambda diag(H)) dxi = -g` by Cholesky, raising the damping
/// when the factorization fails.
pub fn solve_step(acc: &NormalEquations, damping: f64) -> Result<Twist, SolverError> {
    let d = SolverConfig::default();
    solve_damped(acc, damping, d.first_damping, d.damping_factor, d.max_damping)
}

fn solve_damped(acc: &NormalEquations, damping: f64, first: f64, factor: f64, max: f64) -> Result<Twist, SolverError> {
    if acc.g.iter().all(|&v| v == 0.0) && acc.h.iter().all(|v| v.is_finite()) {
        return Ok(Twist::zero());
    }
    let diag = Matrix6::from_diagonal(&acc.h.diagonal());
    let mut lambda = damping;
    loop {
        let a = acc.h + diag * lambda;
        if let Some(chol) = a.cholesky() {
            let x = chol.solve(&(-acc.g));
            if x.iter().all(|v| v.is_finite()) {
                return Ok(Twist::from_vector(&x));
            }
        }
        lambda = if lambda == 0.0 { first } else { lambda * factor };
        if lambda > max {
            return Err(SolverError::SingularSystem);
        }
    }
}

/// Monocular object-centered step: the single-view energy, summed directly.
pub fn solve_monocular(
    obs: &FrameObservation,
    view: &CameraView,
    state: &TrackerState,
    cfg: &SolverConfig,
    damping: f64,
) -> Result<Twist, SolverError> {
    let s = cfg.energy.heaviside_slope;
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    let mut n = 0;
    for sample in &obs.samples {
        if let Some((f, j)) = sample_jacobian(obs, view, sample, state.object_from_template(), s) {
            let r = match cfg.residual {
                ResidualMode::Unit => 1.0,
                ResidualMode::EnergyWeighted => f,
            };
            h += j.transpose() * j;
            g += j.transpose() * r;
            n += 1;
        }
    }
    if n == 0 {
        return Err(SolverError::EmptySampleSet);
    }
    let acc = NormalEquations {
        h,
        g,
        samples: n,
        ..Default::default()
    };
    solve_damped(&acc, damping, cfg.first_damping, cfg.damping_factor, cfg.max_damping)
}

/// Renders the template for one view and gathers its sample set.
///
/// Returns `Ok(None)` when the object does not produce a usable silhouette
/// in this view.
pub fn observe_view(
    mesh: &TriangleMesh,
    view: &CameraView,
    state: &TrackerState,
    image: &RgbImage,
    prev_color: Option<&ColorModel>,
    cfg: &EnergyConfig,
) -> Result<Option<FrameObservation>, SolverError> {
    let pose = *state.object_from_template();
    let band = cfg.band_for_width(image.width);
    let margin = band.ceil() as u32 + SAMPLE_MARGIN;
    let template = render_template_field(mesh, view, &pose, cfg.template_scale, margin);
    let levelset = template.levelset.clone();
    if levelset.is_degenerate() {
        return Ok(None);
    }
    let color = match build_color_model(image, &levelset, prev_color, cfg) {
        Ok(c) => c,
        Err(EnergyError::DegenerateRegion { .. }) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let w = levelset.width as usize;
    let samples: Vec<Sample> = contour_band_strided(&levelset, band, cfg.stride)
        .into_iter()
        .filter_map(|b| {
            let model_point = template.contour_point(b.x, b.y)?;
            let anchor = view.project_coords(&pose.transform_point(&model_point)).ok()?;
            let (pf, pb) = color.posteriors(image.pixel(b.y as usize * w + b.x as usize));
            Some(Sample {
                pixel: nalgebra::Vector2::new(b.x as f64, b.y as f64),
                phi: b.phi,
                pf,
                pb,
                model_point,
                anchor,
            })
        })
        .collect();
    if samples.is_empty() {
        return Ok(None);
    }
    Ok(Some(FrameObservation {
        view_index: view.index,
        levelset,
        color,
        samples,
        render_pose: pose,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    /// Mean per-sample energy before and after the round's iterations.
    pub start_energy: f64,
    pub end_energy: f64,
    pub samples: usize,
    pub skipped: usize,
    pub accepted_steps: u32,
    /// Accepted energy after each iteration (summed over samples).
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameReport {
    pub rounds: Vec<RoundReport>,
    pub converged: bool,
    /// Set when the frame ended lost; the reason.
    pub lost: Option<String>,
    /// True when the pose was reset to ground truth after this frame.
    pub reset: bool,
}

/// Extra pixels kept around the band so warped samples stay on the field.
const SAMPLE_MARGIN: u32 = 8;

/// Step size under which an iteration counts as converged (mm, rad).
const CONVERGED_TRANSLATION: f64 = 1e-3;
const CONVERGED_ROTATION: f64 = 1e-5;

/// Tracks one synchronized frame: `rounds` times re-render the templates
/// and rebuild the color models, then run `iters_per_round` damped
/// Gauss-Newton iterations on the joint energy of all views.
pub fn track_frame(
    state: &TrackerState,
    images: &[RgbImage],
    mesh: &TriangleMesh,
    cfg: &SolverConfig,
) -> Result<(TrackerState, FrameReport), SolverError> {
    if images.len() != state.view_count() {
        return Err(SolverError::ImageCount {
            expected: state.view_count(),
            got: images.len(),
        });
    }
    for (i, (img, view)) in images.iter().zip(state.rig()).enumerate() {
        if img.width != view.intrinsics.width || img.height != view.intrinsics.height {
            return Err(SolverError::ImageSize {
                index: i,
                got_w: img.width,
                got_h: img.height,
                want_w: view.intrinsics.width,
                want_h: view.intrinsics.height,
            });
        }
    }
    let s = cfg.energy.heaviside_slope;
    let mut state = state.clone();
    state.recenter();
    let frame_models = state.color_models.clone();
    let mut report = FrameReport::default();
    let mut rising = 0;

    let native = EnergyConfig {
        template_scale: 1,
        ..cfg.energy
    };
    for r in 0..cfg.rounds {
        let energy_cfg = if cfg.native_final_round && cfg.rounds > 1 && r + 1 == cfg.rounds {
            &native
        } else {
            &cfg.energy
        };
        let observed: Vec<Option<FrameObservation>> = state
            .views()
            .par_iter()
            .zip(images.par_iter())
            .zip(frame_models.par_iter())
            .map(|((view, img), prev)| observe_view(mesh, view, &state, img, prev.as_ref(), energy_cfg))
            .collect::<Result<_, _>>()?;
        let active: Vec<(usize, &FrameObservation)> =
            observed.iter().enumerate().filter_map(|(i, o)| o.as_ref().map(|o| (i, o))).collect();
        if active.is_empty() {
            return Err(SolverError::EmptySampleSet);
        }
        for (i, o) in &active {
            state.color_models[*i] = Some(o.color.clone());
        }

        let energy_of = |st: &TrackerState| {
            active
                .iter()
                .map(|(i, o)| view_energy(o, &st.views()[*i], st, s))
                .fold((0.0, 0usize), |(e, n), (de, dn)| (e + de, n + dn))
        };
        let (e_start, n_start) = energy_of(&state);
        let mut current_energy = e_start;
        let mut lambda = cfg.initial_damping;
        let mut round = RoundReport {
            start_energy: e_start / n_start.max(1) as f64,
            end_energy: 0.0,
            samples: 0,
            skipped: 0,
            accepted_steps: 0,
            trace: Vec::with_capacity(cfg.iters_per_round as usize),
        };

        for _ in 0..cfg.iters_per_round {
            let mut acc = NormalEquations::default();
            for (i, o) in &active {
                let mut part = NormalEquations::default();
                // a view whose samples all fell off the image just contributes nothing
                let _ = accumulate_view(o, &state.views()[*i], &state, &mut part, cfg);
                acc.merge(&part);
            }
            round.samples = acc.samples;
            round.skipped = acc.skipped;
            if acc.samples == 0 {
                return Err(SolverError::EmptySampleSet);
            }
            let step = solve_damped(&acc, lambda, cfg.first_damping, cfg.damping_factor, cfg.max_damping)?;
            let candidate = state.apply_increment(&step);
            let (e_new, _) = energy_of(&candidate);
            if e_new <= current_energy {
                state = candidate;
                current_energy = e_new;
                round.accepted_steps += 1;
                lambda /= cfg.damping_factor;
                if step.rho.norm() < CONVERGED_TRANSLATION && step.phi.norm() < CONVERGED_ROTATION {
                    report.converged = true;
                    round.trace.push(current_energy);
                    break;
                }
            } else {
                lambda = if lambda == 0.0 { cfg.first_damping } else { lambda * cfg.damping_factor };
                if lambda > cfg.max_damping {
                    report.converged = true;
                    round.trace.push(current_energy);
                    break;
                }
            }
            round.trace.push(current_energy);
        }
        let (_, n_end) = energy_of(&state);
        round.end_energy = current_energy / n_end.max(1) as f64;

        if let Some(prev) = report.rounds.last() {
            if round.start_energy > prev.start_energy * (1.0 + cfg.divergence_tolerance) {
                rising += 1;
            } else {
                rising = 0;
            }
        }
        report.rounds.push(round);
        if rising >= cfg.divergence_rounds {
            return Err(SolverError::LostTrack(format!("energy rose for {rising} consecutive rounds")));
        }
        state.recenter();
    }
    Ok((state, report))
}

/// Images for a multi-view sequence, fetched one frame at a time.
pub trait FrameSource: Sync {
    fn frame_count(&self) -> usize;
    fn view_count(&self) -> usize;
    /// Images of frame `k` for the listed views, in that order.
    fn images(&self, k: usize, views: &[usize]) -> Result<Vec<RgbImage>, String>;
}

/// Result of tracking a whole sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedSequence {
    /// Final object pose per frame in the rig frame (before any reset).
    pub rig_poses: Vec<RigidTransform>,
    /// Per frame, the object pose in each tracked camera.
    pub camera_poses: Vec<Vec<RigidTransform>>,
    pub reports: Vec<FrameReport>,
    /// Frames after which the pose was reset to ground truth.
    pub resets: Vec<usize>,
    /// State after the last frame, resets included.
    pub final_state: TrackerState,
}

/// Chains [`track_frame`] over a sequence, starting frame `k + 1` from the
/// result of frame `k`.
///
/// With ground truth (`gt`, rig frame) a frame that violates `lost_rule`, or
/// fails outright, is counted and the next frame starts from its ground truth.
pub fn track_sequence(
    initial: TrackerState,
    source: &dyn FrameSource,
    views: &[usize],
    mesh: &TriangleMesh,
    cfg: &SolverConfig,
    gt: Option<&[RigidTransform]>,
    lost_rule: &LostRule,
    start: usize,
) -> TrackedSequence {
    let mut state = initial;
    let n = source.frame_count();
    let mut out = TrackedSequence {
        rig_poses: Vec::with_capacity(n),
        camera_poses: Vec::with_capacity(n),
        reports: Vec::with_capacity(n),
        resets: Vec::new(),
        final_state: state.clone(),
    };
    for k in start..n {
        let result = source
            .images(k, views)
            .map_err(SolverError::LostTrack)
            .and_then(|imgs| track_frame(&state, &imgs, mesh, cfg));
        let mut report = match result {
            Ok((next, report)) => {
                state = next;
                report
            }
            Err(e) => {
                state.lost = true;
                FrameReport {
                    lost: Some(e.to_string()),
                    ..Default::default()
                }
            }
        };
        let pose = state.rig_from_template();
        out.rig_poses.push(pose);
        out.camera_poses.push(state.camera_poses().to_vec());

        if let Some(truth) = gt.and_then(|g| g.get(k)) {
            let failed = report.lost.is_some()
                || rotation_error(&pose.rotation, &truth.rotation).map_or(true, |r| {
                    lost_rule.violated(r, translation_error(&pose.translation, &truth.translation))
                });
            if failed {
                if report.lost.is_none() {
                    report.lost = Some("pose error beyond the lost threshold".into());
                }
                report.reset = true;
                out.resets.push(k);
                state.reset_to(*truth);
            }
        }
        out.reports.push(report);
    }
    out.final_state = state;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::CameraIntrinsics;
    use crate::geometry::exp_se3;

    fn state_with_views(n: usize) -> TrackerState {
        let k = CameraIntrinsics::new(500.0, 500.0, 319.5, 239.5, 640, 480).unwrap();
        let rig = (0..n)
            .map(|i| {
                let a = i as f64 * 0.7;
                let r = crate::geometry::rotation_about(&Vector3::y(), a);
                let c = r * Vector3::new(0.0, 0.0, -700.0);
                CameraView::new(k, RigidTransform::new(r, c), i)
            })
            .collect();
        let pose = exp_se3(&Twist::new(Vector3::new(3.0, -2.0, 10.0), Vector3::new(0.1, 0.2, -0.3)));
        TrackerState::new(rig, pose, Vector3::new(5.0, 1.0, -2.0))
    }

    #[test]
    fn solve_step_trivial_systems() {
        let zero = NormalEquations {
            h: Matrix6::identity() * 3.0,
            ..Default::default()
        };
        assert_eq!(solve_step(&zero, 0.0).unwrap(), Twist::zero());
        let mut e1 = Vector6::zeros();
        e1[0] = 1.0;
        let acc = NormalEquations {
            h: Matrix6::identity(),
            g: e1,
            ..Default::default()
        };
        assert_eq!(solve_step(&acc, 0.0).unwrap().to_vector(), -e1);
        let singular = NormalEquations {
            h: Matrix6::zeros(),
            g: e1,
            ..Default::default()
        };
        assert_eq!(solve_step(&singular, 0.0), Err(SolverError::SingularSystem));
    }

    #[test]
    fn solve_step_residual_small() {
        let mut rng_state = 7u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng_state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for _ in 0..50 {
            let a = Matrix6::from_fn(|_, _| next());
            let h = a * a.transpose() + Matrix6::identity() * 0.1;
            let g = Vector6::from_fn(|_, _| next());
            let acc = NormalEquations {
                h,
                g,
                ..Default::default()
            };
            for lambda in [0.0, 0.5, 10.0] {
                let x = solve_step(&acc, lambda).unwrap().to_vector();
                let d = Matrix6::from_diagonal(&h.diagonal());
                let r = (h + d * lambda) * x + g;
                assert!(r.norm() < 1e-10 * g.norm());
            }
        }
    }

    #[test]
    fn normal_equations_rank_one() {
        let mut acc = NormalEquations::default();
        acc.add(&RowVector6::new(1.0, -2.0, 0.5, 3.0, 0.0, 1.0), 1.0);
        let rank = acc.h.svd(false, false).singular_values.iter().filter(|&&s| s > 1e-9).count();
        assert_eq!(rank, 1);
        let before = acc;
        acc.add(&RowVector6::zeros(), 1.0);
        assert_eq!((acc.h, acc.g), (before.h, before.g));
    }

    #[test]
    fn zero_increment_keeps_state() {
        let s = state_with_views(3);
        let t = s.apply_increment(&Twist::zero());
        assert_eq!(t.object_from_template(), s.object_from_template());
        assert_eq!(t.camera_poses(), s.camera_poses());
    }

    #[test]
    fn single_identity_view_gets_plain_exponential() {
        let k = CameraIntrinsics::new(500.0, 500.0, 319.5, 239.5, 640, 480).unwrap();
        let mut s = TrackerState::new(
            vec![CameraView::new(k, RigidTransform::identity(), 0)],
            RigidTransform::from_translation(Vector3::new(0.0, 0.0, 600.0)),
            Vector3::zeros(),
        );
        // make camera-from-object the identity
        s.rig_from_object = RigidTransform::identity();
        s.object_from_template = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 600.0));
        s.refresh();
        let dxi = Twist::new(Vector3::new(1.0, 2.0, 3.0), Vector3::new(0.01, -0.02, 0.03));
        let t = s.apply_increment(&dxi);
        let expect = exp_se3(&dxi).compose(s.camera_pose(0));
        assert!((t.camera_pose(0).to_matrix4() - expect.to_matrix4()).abs().max() < 1e-12);
    }

    #[test]
    fn increment_matches_conjugated_update_per_camera() {
        let s = state_with_views(4);
        let dxi = Twist::new(Vector3::new(4.0, -1.0, 2.5), Vector3::new(-0.05, 0.02, 0.08));
        let t = s.apply_increment(&dxi);
        for i in 0..4 {
            let c_from_o = s.views()[i].camera_from_object();
            let delta = c_from_o.compose(&exp_se3(&dxi)).compose(&c_from_o.inverse());
            let expect = delta.compose(s.camera_pose(i));
            assert!((t.camera_pose(i).to_matrix4() - expect.to_matrix4()).abs().max() < 1e-9);
            let latent = t.views()[i].object_from_camera().compose(t.camera_pose(i));
            assert!((latent.to_matrix4() - t.object_from_template().to_matrix4()).abs().max() < 1e-9);
        }
    }

    #[test]
    fn recenter_preserves_pose() {
        let s = state_with_views(2);
        let before = s.rig_from_template();
        let mut t = s.apply_increment(&Twist::new(Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 0.1, 0.0)));
        let moved = t.rig_from_template();
        t.recenter();
        assert!((t.rig_from_template().to_matrix4() - moved.to_matrix4()).abs().max() < 1e-12);
        assert!((moved.to_matrix4() - before.to_matrix4()).abs().max() > 1e-3);
        assert!((t.object_from_template().translation + t.center()).norm() < 1e-12);
    }

    #[test]
    fn state_serde_roundtrip() {
        let s = state_with_views(2);
        let json = serde_json::to_string(&s).unwrap();
        let mut back: TrackerState = serde_json::from_str(&json).unwrap();
        back.restore();
        assert_eq!(back, s);
    }
}
