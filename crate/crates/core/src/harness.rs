//! Experiment orchestration behind the command-line tool: configuration,
//! sequence directories, tracking and evaluation runs, sweeps and reports.
//!
//! A sequence directory holds `rig.json`, `gt.poses`, `mesh.obj`,
//! `sequence.json` and one `view_<i>/frame_<k>.ppm` per camera and frame.
//! Ground truth and predicted latent poses are object-in-rig transforms;
//! per-camera predictions are object-in-camera.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraView;
use crate::geometry::RigidTransform;
use crate::image::RgbImage;
use crate::io::{
    decode_ppm, encode_ppm, format_obj, format_rig, format_trajectory, load_obj, load_rig, load_trajectory, read_bytes,
    read_to_string, records, write_file, IoError, PoseRecord,
};
use crate::metrics::{frame_errors, score_sequence, FrameErrors, LostRule, MetricsError, SequenceReport};
use crate::renderer::TriangleMesh;
use crate::simulator::{
    generate_sequence, make_rig, meshes, run_angle_sweep, run_resolution_sweep, ErrorTable, MotionSpec, RigSpec,
    SceneStyle, SimError, SweepSpec, SyntheticSequence,
};
use crate::solver::{track_sequence, FrameReport, FrameSource, SolverConfig, SolverError, TrackerState};

pub const SEQUENCE_SCHEMA: &str = "mvtrack-sequence/1";
pub const FRAME_REPORT_SCHEMA: &str = "mvtrack-frame-report/1";
pub const SUMMARY_SCHEMA: &str = "mvtrack-summary/1";
pub const STATE_SCHEMA: &str = "mvtrack-state/1";
pub const TRACK_LOG_SCHEMA: &str = "mvtrack-track-log/1";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config field '{field}': {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Data(String),
}

impl HarnessError {
    fn config(field: &str, message: impl Into<String>) -> Self {
        HarnessError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Whether the error stems from configuration rather than from running.
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config { .. })
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Meshes of the angle sweep, procedural names or OBJ paths.
    pub meshes: Vec<String>,
    pub monocular: bool,
    /// Image widths of the resolution sweep; empty skips it.
    pub widths: Vec<u32>,
    pub resolution_mesh: String,
    pub resolution_angle: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            meshes: meshes::default_suite().into_iter().map(|(n, _)| n.to_string()).collect(),
            monocular: true,
            widths: Vec::new(),
            resolution_mesh: "l_bracket".into(),
            resolution_angle: 90.0,
        }
    }
}

/// Everything one experiment needs. Relative mesh paths resolve against
/// the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Procedural mesh name (see [`meshes::default_suite`]) or OBJ path.
    pub mesh: String,
    pub rig: RigSpec,
    pub motion: MotionSpec,
    pub style: SceneStyle,
    pub solver: SolverConfig,
    pub lost_rule: LostRule,
    pub sweep: SweepConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mesh: "notched_box".into(),
            rig: RigSpec::default(),
            motion: MotionSpec::default(),
            style: SceneStyle::default(),
            solver: SolverConfig::default(),
            lost_rule: LostRule::default(),
            sweep: SweepConfig::default(),
            base_dir: PathBuf::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let field = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.contains("field"))
                .unwrap_or("<root>")
                .to_string();
            HarnessError::Config { field, message: msg }
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json(&read_to_string(path)?).map_err(|e| match e {
            HarnessError::Config { field, message } => HarnessError::Config {
                field,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate().map_err(|e| HarnessError::config("solver", e.to_string()))?;
        make_rig(&self.rig).map_err(|e| HarnessError::config("rig", e.to_string()))?;
        if self.motion.frames == 0 {
            return Err(HarnessError::config("motion.frames", "must be at least 1"));
        }
        if self.motion.waypoint_spacing == 0 {
            return Err(HarnessError::config("motion.waypoint_spacing", "must be at least 1"));
        }
        if !(self.motion.translation_step >= 0.0 && self.motion.rotation_step >= 0.0) {
            return Err(HarnessError::config("motion", "step amplitudes must be non-negative"));
        }
        if !(self.style.noise_sigma >= 0.0) || self.style.antialias == 0 {
            return Err(HarnessError::config("style", "noise_sigma must be >= 0 and antialias >= 1"));
        }
        Ok(())
    }

    /// Loads a mesh by procedural name or path; `field` names the config
    /// entry in errors.
    pub fn resolve_mesh(&self, name: &str, field: &str) -> Result<TriangleMesh> {
        if name.is_empty() {
            return Err(HarnessError::config(field, "no mesh given"));
        }
        if let Some(m) = meshes::by_name(name) {
            return Ok(m);
        }
        let path = self.base_dir.join(name);
        load_obj(&path).map_err(|e| HarnessError::config(field, e.to_string()))
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec {
            rig: self.rig.clone(),
            motion: self.motion,
            style: self.style,
            solver: self.solver,
            lost_rule: self.lost_rule,
            monocular: self.sweep.monocular,
        }
    }
}

/// Metadata file of a sequence directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceInfo {
    pub schema: String,
    pub frames: usize,
    pub views: usize,
    pub seed: u64,
    pub style: SceneStyle,
}

pub fn frame_path(dir: &Path, view: usize, frame: usize) -> PathBuf {
    dir.join(format!("view_{view}")).join(format!("frame_{frame:05}.ppm"))
}

/// Generates the synthetic sequence described by `cfg`.
pub fn simulate(cfg: &ExperimentConfig) -> Result<SyntheticSequence> {
    cfg.validate()?;
    let mesh = cfg.resolve_mesh(&cfg.mesh, "mesh")?;
    let rig = make_rig(&cfg.rig)?;
    Ok(generate_sequence(&mesh, &rig, &cfg.motion, &cfg.style))
}

/// Writes a sequence directory. Frames are rendered in parallel; the output
/// bytes do not depend on scheduling.
pub fn write_sequence(seq: &SyntheticSequence, dir: &Path) -> Result<()> {
    let info = SequenceInfo {
        schema: SEQUENCE_SCHEMA.into(),
        frames: seq.frames(),
        views: seq.rig.len(),
        seed: seq.seed,
        style: seq.style,
    };
    write_file(&dir.join("sequence.json"), serde_json::to_string_pretty(&info).expect("info serializes") + "\n")?;
    write_file(&dir.join("rig.json"), format_rig(&seq.rig))?;
    write_file(&dir.join("gt.poses"), format_trajectory(&records(&seq.gt, 0)))?;
    write_file(&dir.join("mesh.obj"), format_obj(&seq.mesh))?;
    let jobs: Vec<(usize, usize)> = (0..seq.frames()).flat_map(|k| (0..seq.rig.len()).map(move |v| (k, v))).collect();
    jobs.par_iter()
        .try_for_each(|&(k, v)| write_file(&frame_path(dir, v, k), encode_ppm(&seq.render(k, v))))?;
    info!("wrote {} frames x {} views to {}", seq.frames(), seq.rig.len(), dir.display());
    Ok(())
}

/// Maps a dataset on disk onto the tracker's inputs. Implementations for
/// external benchmarks translate their calibration and annotation formats
/// into cameras, pose records and frames.
pub trait BenchmarkAdapter {
    fn rig(&self) -> &[CameraView];
    fn mesh(&self) -> &TriangleMesh;
    /// Object-in-rig ground truth, when the dataset has it.
    fn ground_truth(&self) -> Option<&[PoseRecord]>;
    fn frames(&self) -> &dyn FrameSource;
}

/// A sequence directory in this crate's own layout.
#[derive(Debug, Clone)]
pub struct DiskSequence {
    pub dir: PathBuf,
    pub rig: Vec<CameraView>,
    pub mesh: TriangleMesh,
    pub gt: Option<Vec<PoseRecord>>,
    pub frames: usize,
}

impl DiskSequence {
    pub fn open(dir: &Path) -> Result<Self> {
        let info: SequenceInfo = serde_json::from_str(&read_to_string(&dir.join("sequence.json"))?)
            .map_err(|e| HarnessError::Data(format!("{}: {e}", dir.join("sequence.json").display())))?;
        if info.schema != SEQUENCE_SCHEMA {
            return Err(HarnessError::Data(format!("unsupported sequence schema {:?}", info.schema)));
        }
        let rig = load_rig(&dir.join("rig.json"))?;
        if rig.len() != info.views {
            return Err(HarnessError::Data(format!("rig has {} cameras, sequence.json says {}", rig.len(), info.views)));
        }
        let mesh = load_obj(&dir.join("mesh.obj"))?;
        let gt_path = dir.join("gt.poses");
        let gt = if gt_path.exists() {
            let gt = load_trajectory(&gt_path)?;
            if gt.len() != info.frames || gt.iter().enumerate().any(|(i, r)| r.frame != i) {
                return Err(HarnessError::Data(format!(
                    "{}: expected frames 0..{} in order",
                    gt_path.display(),
                    info.frames
                )));
            }
            Some(gt)
        } else {
            None
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            rig,
            mesh,
            gt,
            frames: info.frames,
        })
    }

    pub fn gt_poses(&self) -> Option<Vec<RigidTransform>> {
        self.gt.as_ref().map(|g| g.iter().map(|r| r.pose).collect())
    }
}

impl FrameSource for DiskSequence {
    fn frame_count(&self) -> usize {
        self.frames
    }

    fn view_count(&self) -> usize {
        self.rig.len()
    }

    fn images(&self, k: usize, views: &[usize]) -> Result<Vec<RgbImage>, String> {
        views
            .iter()
            .map(|&v| {
                let path = frame_path(&self.dir, v, k);
                read_bytes(&path)
                    .and_then(|b| decode_ppm(&b))
                    .map_err(|e| format!("{}: {e}", path.display()))
            })
            .collect()
    }
}

impl BenchmarkAdapter for DiskSequence {
    fn rig(&self) -> &[CameraView] {
        &self.rig
    }

    fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    fn ground_truth(&self) -> Option<&[PoseRecord]> {
        self.gt.as_deref()
    }

    fn frames(&self) -> &dyn FrameSource {
        self
    }
}

/// Tracker state after `frame`, enough to resume from `frame + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDump {
    pub schema: String,
    pub frame: usize,
    /// Camera indices of the tracked views, in state order.
    pub views: Vec<usize>,
    pub state: TrackerState,
}

impl StateDump {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("state serializes") + "\n"
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut dump: StateDump = serde_json::from_str(&read_to_string(path)?)
            .map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
        if dump.schema != STATE_SCHEMA {
            return Err(HarnessError::Data(format!("unsupported state schema {:?}", dump.schema)));
        }
        dump.state.restore();
        Ok(dump)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrackOptions {
    /// Camera indices to use; all cameras when empty.
    pub views: Vec<usize>,
    /// Pose of frame 0 when there is no ground truth to take it from.
    pub initial: Option<RigidTransform>,
    /// Reset to ground truth when the lost rule fires.
    pub reset_with_gt: bool,
    pub resume: Option<StateDump>,
    /// Also return the state after this frame.
    pub checkpoint: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TrackOutput {
    pub views: Vec<usize>,
    pub first_frame: usize,
    pub rig_poses: Vec<RigidTransform>,
    /// Per tracked view, the object-in-camera pose of every frame.
    pub camera_poses: Vec<Vec<RigidTransform>>,
    pub reports: Vec<FrameReport>,
    pub resets: Vec<usize>,
    pub checkpoint: Option<StateDump>,
}

/// Frames limited to a prefix.
struct Prefix<'a> {
    inner: &'a dyn FrameSource,
    frames: usize,
}

impl FrameSource for Prefix<'_> {
    fn frame_count(&self) -> usize {
        self.frames
    }

    fn view_count(&self) -> usize {
        self.inner.view_count()
    }

    fn images(&self, k: usize, views: &[usize]) -> Result<Vec<RgbImage>, String> {
        self.inner.images(k, views)
    }
}

/// Tracks frames `1..` of a dataset starting from frame 0's pose, or
/// continues after a state dump.
pub fn track(data: &dyn BenchmarkAdapter, cfg: &ExperimentConfig, opts: &TrackOptions) -> Result<TrackOutput> {
    cfg.solver.validate().map_err(|e| HarnessError::config("solver", e.to_string()))?;
    let rig = data.rig();
    let views: Vec<usize> = if opts.views.is_empty() {
        (0..rig.len()).collect()
    } else {
        opts.views.clone()
    };
    if let Some(&bad) = views.iter().find(|&&v| v >= rig.len()) {
        return Err(HarnessError::config("views", format!("camera {bad} not in a rig of {}", rig.len())));
    }
    let gt: Option<Vec<RigidTransform>> = data.ground_truth().map(|g| g.iter().map(|r| r.pose).collect());
    let (state, start) = match &opts.resume {
        Some(dump) => {
            if dump.views != views {
                return Err(HarnessError::config(
                    "views",
                    format!("state dump tracked views {:?}, asked for {:?}", dump.views, views),
                ));
            }
            (dump.state.clone(), dump.frame + 1)
        }
        None => {
            let init = opts
                .initial
                .or_else(|| gt.as_ref().and_then(|g| g.first().copied()))
                .ok_or_else(|| HarnessError::config("initial", "no initial pose and no ground truth"))?;
            let full = TrackerState::new(rig.to_vec(), init, data.mesh().bbox_center());
            (full.subset(&views), 1)
        }
    };
    let frames = data.frames();
    let local: Vec<usize> = (0..views.len()).collect();
    let source = ViewMap {
        inner: frames,
        views: &views,
    };
    let gt_ref = if opts.reset_with_gt { gt.as_deref() } else { None };
    let run = |state: TrackerState, src: &dyn FrameSource, start: usize| {
        track_sequence(state, src, &local, data.mesh(), &cfg.solver, gt_ref, &cfg.lost_rule, start)
    };
    let (mut out, checkpoint) = match opts.checkpoint.filter(|&c| c >= start && c + 1 < frames.frame_count()) {
        Some(c) => {
            let head = run(
                state,
                &Prefix {
                    inner: &source,
                    frames: c + 1,
                },
                start,
            );
            let dump = StateDump {
                schema: STATE_SCHEMA.into(),
                frame: c,
                views: views.clone(),
                state: head.final_state.clone(),
            };
            let tail = run(head.final_state.clone(), &source, c + 1);
            let mut merged = head;
            merged.rig_poses.extend(tail.rig_poses);
            merged.camera_poses.extend(tail.camera_poses);
            merged.reports.extend(tail.reports);
            merged.resets.extend(tail.resets);
            merged.final_state = tail.final_state;
            (merged, Some(dump))
        }
        None => {
            let out = run(state, &source, start);
            let dump = opts.checkpoint.filter(|&c| c + 1 == frames.frame_count()).map(|c| StateDump {
                schema: STATE_SCHEMA.into(),
                frame: c,
                views: views.clone(),
                state: out.final_state.clone(),
            });
            (out, dump)
        }
    };
    let camera_poses = (0..views.len())
        .map(|i| out.camera_poses.iter().map(|per_frame| per_frame[i]).collect())
        .collect();
    Ok(TrackOutput {
        views,
        first_frame: start,
        rig_poses: std::mem::take(&mut out.rig_poses),
        camera_poses,
        reports: out.reports,
        resets: out.resets,
        checkpoint,
    })
}

/// Renumbers a view subset of a frame source from zero.
struct ViewMap<'a> {
    inner: &'a dyn FrameSource,
    views: &'a [usize],
}

impl FrameSource for ViewMap<'_> {
    fn frame_count(&self) -> usize {
        self.inner.frame_count()
    }

    fn view_count(&self) -> usize {
        self.views.len()
    }

    fn images(&self, k: usize, views: &[usize]) -> Result<Vec<RgbImage>, String> {
        let mapped: Option<Vec<usize>> = views.iter().map(|&v| self.views.get(v).copied()).collect();
        self.inner.images(k, &mapped.ok_or("view out of range")?)
    }
}

#[derive(Serialize)]
struct TrackLog<'a> {
    schema: &'a str,
    views: &'a [usize],
    first_frame: usize,
    resets: &'a [usize],
    reports: &'a [FrameReport],
}

/// Writes `pred.poses`, `pred_cam<i>.poses`, `track.json` and, when a
/// checkpoint was taken, `state_<k>.json`.
pub fn write_track_output(out: &TrackOutput, dir: &Path) -> Result<()> {
    write_file(&dir.join("pred.poses"), format_trajectory(&records(&out.rig_poses, out.first_frame)))?;
    for (i, &v) in out.views.iter().enumerate() {
        write_file(
            &dir.join(format!("pred_cam{v}.poses")),
            format_trajectory(&records(&out.camera_poses[i], out.first_frame)),
        )?;
    }
    let log = TrackLog {
        schema: TRACK_LOG_SCHEMA,
        views: &out.views,
        first_frame: out.first_frame,
        resets: &out.resets,
        reports: &out.reports,
    };
    write_file(&dir.join("track.json"), serde_json::to_string_pretty(&log).expect("log serializes") + "\n")?;
    if let Some(dump) = &out.checkpoint {
        write_file(&dir.join(format!("state_{}.json", dump.frame)), dump.to_json())?;
    }
    Ok(())
}

/// Scores of one evaluated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: SequenceReport,
    pub frames: Vec<usize>,
    pub errors: Vec<FrameErrors>,
    /// Longest bounding-box side of the mesh, mm.
    pub diameter: f64,
    /// ADD success rate against threshold (fraction of the diameter).
    pub curve: Vec<(f64, f64)>,
}

const CURVE_POINTS: usize = 100;
const CURVE_MAX: f64 = 0.2;

/// Scores predictions against ground truth by frame index. Both are
/// object-in-rig poses; errors are expressed in `reference`'s camera frame
/// (usually C-0), or in the rig frame without one. A frame counts as lost
/// when it violates `lost_rule`.
pub fn evaluate(
    pred: &[PoseRecord],
    gt: &[PoseRecord],
    mesh: &TriangleMesh,
    reference: Option<&CameraView>,
    lost_rule: &LostRule,
) -> Result<Evaluation> {
    if pred.is_empty() {
        return Err(HarnessError::Data("prediction has no frames".into()));
    }
    let to_ref = |p: &RigidTransform| reference.map_or(*p, |c| c.camera_from_object().compose(p));
    let mut est = Vec::with_capacity(pred.len());
    let mut truth = Vec::with_capacity(pred.len());
    for r in pred {
        let g = gt
            .binary_search_by_key(&r.frame, |g| g.frame)
            .map_err(|_| HarnessError::Data(format!("frame {} has no ground truth", r.frame)))?;
        est.push(to_ref(&r.pose));
        truth.push(to_ref(&gt[g].pose));
    }
    let lost = est
        .iter()
        .zip(&truth)
        .map(|(e, t)| frame_errors(e, t, mesh.vertices()))
        .collect::<Result<Vec<_>, _>>()?
        .iter()
        .filter(|e| lost_rule.violated(e.rotation_deg, e.translation))
        .count();
    let diameter = mesh.bbox_longest_side();
    let (report, errors) = score_sequence(&est, &truth, mesh.vertices(), diameter, lost)?;
    let curve = (0..=CURVE_POINTS)
        .map(|i| {
            let x = CURVE_MAX * i as f64 / CURVE_POINTS as f64;
            let ok = errors.iter().filter(|e| e.add <= x * diameter).count();
            (x, ok as f64 / errors.len() as f64)
        })
        .collect();
    Ok(Evaluation {
        report,
        frames: pred.iter().map(|r| r.frame).collect(),
        errors,
        diameter,
        curve,
    })
}

impl Evaluation {
    /// One row per frame.
    pub fn frames_csv(&self) -> String {
        let mut out = format!("# {FRAME_REPORT_SCHEMA}\nframe,r(deg),t(mm),tx(mm),ty(mm),tz(mm),ADD(mm)\n");
        for (k, e) in self.frames.iter().zip(&self.errors) {
            let _ = writeln!(
                out,
                "{k},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                e.rotation_deg, e.translation, e.axis[0], e.axis[1], e.axis[2], e.add
            );
        }
        out
    }

    /// Success rates in percent under the usual column names.
    pub fn summary_csv(&self) -> String {
        let mut out = format!("# {SUMMARY_SCHEMA}\n");
        out += &SequenceReport::HEADER.join(",");
        out += ",Lost Number,Frames\n";
        let rates: Vec<String> = self.report.percentages().iter().map(|p| format!("{p:.2}")).collect();
        let _ = writeln!(out, "{},{},{}", rates.join(","), self.report.lost, self.report.frames);
        out
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            schema: &'a str,
            diameter: f64,
            report: &'a SequenceReport,
        }
        serde_json::to_string_pretty(&Summary {
            schema: SUMMARY_SCHEMA,
            diameter: self.diameter,
            report: &self.report,
        })
        .expect("summary serializes")
            + "\n"
    }

    /// ADD success curve as a standalone SVG, threshold in units of d.
    pub fn add_curve_svg(&self) -> String {
        let (w, h, m) = (480.0, 320.0, 48.0);
        let px = |x: f64| m + x / CURVE_MAX * (w - 2.0 * m);
        let py = |y: f64| h - m - y * (h - 2.0 * m);
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        );
        for i in 0..=4 {
            let x = CURVE_MAX * i as f64 / 4.0;
            let y = i as f64 / 4.0;
            let _ = writeln!(
                s,
                "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>\
                 <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{x:.2}</text>",
                px(x),
                py(0.0),
                px(x),
                py(1.0),
                px(x),
                py(0.0) + 16.0
            );
            let _ = writeln!(
                s,
                "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>\
                 <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{:.0}</text>",
                px(0.0),
                py(y),
                px(CURVE_MAX),
                py(y),
                px(0.0) - 6.0,
                py(y) + 4.0,
                y * 100.0
            );
        }
        let points: Vec<String> = self.curve.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\" points=\"{}\"/>",
            points.join(" ")
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">ADD threshold (d)</text>\n\
             <text x=\"14\" y=\"{:.1}\" font-size=\"12\" transform=\"rotate(-90 14 {:.1})\" text-anchor=\"middle\">success (%)</text>\n\
             <text x=\"{:.1}\" y=\"20\" font-size=\"12\" text-anchor=\"middle\">AUC {:.2}%</text>\n</svg>",
            w / 2.0,
            h - 8.0,
            h / 2.0,
            h / 2.0,
            w / 2.0,
            self.report.add_auc * 100.0
        );
        s
    }

    pub fn write(&self, dir: &Path, plot: bool) -> Result<()> {
        write_file(&dir.join("frames.csv"), self.frames_csv())?;
        write_file(&dir.join("summary.csv"), self.summary_csv())?;
        write_file(&dir.join("summary.json"), self.summary_json())?;
        if plot {
            write_file(&dir.join("add_curve.svg"), self.add_curve_svg())?;
        }
        Ok(())
    }
}

/// Runs the configured sweeps; returns `(file name, table)` pairs.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<(String, ErrorTable)>> {
    cfg.validate()?;
    let mut out = Vec::new();
    let spec = cfg.sweep_spec();
    if !cfg.sweep.meshes.is_empty() {
        let meshes = cfg
            .sweep
            .meshes
            .iter()
            .enumerate()
            .map(|(i, m)| cfg.resolve_mesh(m, &format!("sweep.meshes[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        out.push(("angle_sweep.csv".to_string(), run_angle_sweep(&meshes, &spec)?));
    }
    if !cfg.sweep.widths.is_empty() {
        let mesh = cfg.resolve_mesh(&cfg.sweep.resolution_mesh, "sweep.resolution_mesh")?;
        let spec = SweepSpec {
            rig: RigSpec {
                included_angles: vec![cfg.sweep.resolution_angle],
                ..spec.rig.clone()
            },
            ..spec
        };
        out.push(("resolution_sweep.csv".to_string(), run_resolution_sweep(&mesh, &cfg.sweep.widths, &spec)?));
    }
    if out.is_empty() {
        return Err(HarnessError::config("sweep", "neither meshes nor widths given"));
    }
    Ok(out)
}

pub fn write_tables(tables: &[(String, ErrorTable)], dir: &Path) -> Result<()> {
    for (name, t) in tables {
        write_file(&dir.join(name), t.to_csv())?;
    }
    Ok(())
}
