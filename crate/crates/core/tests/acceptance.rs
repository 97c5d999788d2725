//! Acceptance suite. Every criterion prints one PASS/FAIL line to stderr
//! (bypassing test output capture) and the test fails if any criterion does.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{Matrix2x3, UnitQuaternion, Vector2, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mvtrack::camera::{full_pose_jacobian, pixel_to_spatial_error, project, projection_point_jacobian, CameraView};
use mvtrack::energy::{pixel_energy, pixel_gradient};
use mvtrack::geometry::{exp_se3, point_jacobian, Point3, RigidTransform, Twist};
use mvtrack::harness::{simulate, sweep, write_sequence, ExperimentConfig};
use mvtrack::image::RgbImage;
use mvtrack::metrics::{add_error, rotation_error, score_sequence, LostRule};
use mvtrack::renderer::{contour_band, rasterize_silhouette, signed_distance, TriangleMesh};
use mvtrack::simulator::{
    default_intrinsics, generate_sequence, make_rig, meshes, random_perturbation, render_frame, run_angle_sweep,
    run_resolution_sweep, MotionSpec, RigSpec, SceneStyle, SweepSpec,
};
use mvtrack::solver::{
    accumulate_view, observe_view, solve_monocular, solve_step, track_frame, track_sequence, FrameSource,
    NormalEquations, SolverConfig, TrackerState,
};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn say(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn random_twist(rng: &mut ChaCha8Rng, t: f64, r: f64) -> Twist {
    Twist::new(unit(rng) * t, unit(rng) * r)
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Camera at `depth` in front of the object frame origin, slightly off-axis
/// and rotated.
fn random_view(rng: &mut ChaCha8Rng) -> CameraView {
    let k = default_intrinsics();
    let r = exp_se3(&Twist::new(Vector3::zeros(), unit(rng) * 0.5)).rotation;
    let depth = rng.random_range(600.0..2500.0);
    let center = r * Vector3::new(0.0, 0.0, -depth) + unit(rng) * 30.0;
    CameraView::new(k, RigidTransform::new(r, center), 0)
}

// ------------------------------------------------------------------ 1

fn jacobians() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(11);
    let h = 1e-6;
    let (mut worst_point, mut worst_proj, mut worst_full) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        // point jacobian
        let t = exp_se3(&random_twist(&mut rng, 200.0, 1.5));
        let x = unit(&mut rng) * 150.0;
        let j = point_jacobian(&t, &x);
        for k in 0..6 {
            let mut d = Vector6::zeros();
            d[k] = h;
            let f = |s: f64| exp_se3(&Twist::from_vector(&(d * s))).transform_point(&t.transform_point(&x));
            let fd = (f(1.0) - f(-1.0)) / (2.0 * h);
            for r in 0..3 {
                worst_point = worst_point.max(rel_err(j[(r, k)], fd[r], 1e-3));
            }
        }
        // projection and full pose jacobians
        let view = random_view(&mut rng);
        let xo = Point3::object(unit(&mut rng) * 120.0);
        let jp: Matrix2x3<f64> = projection_point_jacobian(&view, &xo).unwrap();
        for k in 0..3 {
            let mut d = Vector3::zeros();
            d[k] = h;
            let f = |s: f64| project(&view, &Point3::object(xo.coords + d * s)).unwrap();
            let fd = (f(1.0) - f(-1.0)) / (2.0 * h);
            for r in 0..2 {
                worst_proj = worst_proj.max(rel_err(jp[(r, k)], fd[r], 1e-3));
            }
        }
        let current = exp_se3(&random_twist(&mut rng, 20.0, 0.3));
        let xt = Point3::template(unit(&mut rng) * 120.0);
        let jf = full_pose_jacobian(&view, &xt, &current).unwrap();
        for k in 0..6 {
            let mut d = Vector6::zeros();
            d[k] = h;
            let f = |s: f64| {
                let p = exp_se3(&Twist::from_vector(&(d * s))).transform_point(&current.transform_point(&xt.coords));
                project(&view, &Point3::object(p)).unwrap()
            };
            let fd = (f(1.0) - f(-1.0)) / (2.0 * h);
            for r in 0..2 {
                worst_full = worst_full.max(rel_err(jf[(r, k)], fd[r], 1e-3));
            }
        }
    }

    // pixel gradient on band samples of rendered silhouettes
    let suite = meshes::default_suite();
    let view = CameraView::new(default_intrinsics(), RigidTransform::from_translation(Vector3::new(0.0, 0.0, -1500.0)), 0);
    let (mut total, mut ok) = (0usize, 0usize);
    let mut logged = Vec::new();
    for trial in 0..100 {
        let (_, mesh) = &suite[trial % suite.len()];
        let pose = exp_se3(&Twist::new(unit(&mut rng) * 20.0, unit(&mut rng) * 2.0));
        let ls = signed_distance(&rasterize_silhouette(mesh, &view, &pose));
        let band = contour_band(&ls, 6.0);
        let b = band[rng.random_range(0..band.len())];
        let (x, y) = (b.x as f64, b.y as f64);
        let pf = rng.random_range(0.02..0.98);
        let pb = 1.0 - pf;
        let Ok(g) = pixel_gradient(&ls, x, y, pf, pb, 1.2) else {
            continue;
        };
        let f = |dx: f64, dy: f64| pixel_energy(ls.sample(x + dx, y + dy).unwrap(), pf, pb, 1.2);
        let e = 1e-5;
        let fd = Vector2::new((f(e, 0.0) - f(-e, 0.0)) / (2.0 * e), (f(0.0, e) - f(0.0, -e)) / (2.0 * e));
        total += 1;
        let err = (0..2).map(|k| rel_err(g[k], fd[k], 1e-6)).fold(0.0, f64::max);
        if err < 1e-3 {
            ok += 1;
        } else {
            logged.push(format!("({x},{y}) phi={:.2} err={err:.1e}", b.phi));
        }
    }
    for l in &logged {
        say(&format!("      gradient mismatch at discontinuity {l}"));
    }
    let elapsed = start.elapsed();
    let rate = ok as f64 / total.max(1) as f64;
    let pass = worst_point < 1e-4 && worst_proj < 1e-4 && worst_full < 1e-4 && total >= 95 && rate >= 0.95
        && elapsed < Duration::from_secs(10);
    outcome(
        pass,
        format!(
            "max rel err point {worst_point:.1e}, projection {worst_proj:.1e}, pose {worst_full:.1e} (200 configs each); \
             pixel gradient {ok}/{total} within 1e-3; {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ------------------------------------------------------------------ 2

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn angle_trend() -> Outcome {
    let start = Instant::now();
    let suite: Vec<TriangleMesh> = meshes::default_suite().into_iter().map(|(_, m)| m).collect();
    let spec = SweepSpec::default();
    let table = single_threaded(|| run_angle_sweep(&suite, &spec)).unwrap();
    let elapsed = start.elapsed();
    let tz = |label: &str| table.column(label).and_then(|c| c.result.as_ref()).map(|r| r.axis[2]).unwrap_or(f64::NAN);
    let (mono, a10, a30, a90) = (tz("Mono."), tz("10°"), tz("30°"), tz("90°"));
    for l in table.to_csv().lines().skip(2) {
        say(&format!("      {l}"));
    }
    let ratio = mono / a90;
    let pass = a10 > a30 && a30 > a90 && ratio >= 10.0 && elapsed < Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "tz mono {mono:.3} / 10° {a10:.3} / 30° {a30:.3} / 90° {a90:.3} mm, ratio {ratio:.1}x; {:.0}s single-threaded",
            elapsed.as_secs_f64()
        ),
    )
}

// ------------------------------------------------------------------ 3

fn resolution_trend() -> Outcome {
    let start = Instant::now();
    let spec = SweepSpec {
        rig: RigSpec {
            included_angles: vec![90.0],
            ..RigSpec::default()
        },
        ..SweepSpec::default()
    };
    let table = run_resolution_sweep(&meshes::l_bracket(), &[320, 640, 1280], &spec).unwrap();
    let elapsed = start.elapsed();
    for l in table.to_csv().lines().skip(2) {
        say(&format!("      {l}"));
    }
    let cells: Vec<_> = table.columns.iter().map(|c| c.result.clone()).collect();
    let complete = cells.iter().all(Option::is_some);
    let cells: Vec<_> = cells.into_iter().flatten().collect();
    let rows: [fn(&mvtrack::simulator::CellResult) -> f64; 4] =
        [|c| c.rotation_deg, |c| c.axis[0], |c| c.axis[1], |c| c.axis[2]];
    let monotone = rows.iter().all(|f| cells.windows(2).all(|w| f(&w[1]) <= f(&w[0])));
    let lost: usize = cells.iter().map(|c| c.lost).sum();
    let pass = complete && monotone && lost == 0 && elapsed < Duration::from_secs(600);
    outcome(
        pass,
        format!("rows non-increasing: {monotone}, lost {lost}; {:.0}s", elapsed.as_secs_f64()),
    )
}

// ------------------------------------------------------------------ 4

fn spatial_mapping() -> Outcome {
    let at = |ratio: f64| {
        let depth = 800.0;
        pixel_to_spatial_error(2.0, ratio * depth, depth).unwrap()
    };
    let endpoints = at(1.0) == 2.0 && at(2.0) == 1.0;
    let inside = (0..=100).all(|i| {
        let e = at(1.0 + i as f64 / 100.0);
        (1.0..=2.0).contains(&e)
    });
    let outside = [0.5, 0.99, 2.01, 4.0].iter().all(|&r| !(1.0..=2.0).contains(&at(r)));
    let zero = pixel_to_spatial_error(0.0, 1000.0, 700.0).unwrap() == 0.0;
    let invalid = pixel_to_spatial_error(1.0, 0.0, 700.0).is_err() && pixel_to_spatial_error(1.0, 10.0, -1.0).is_err();
    outcome(
        endpoints && inside && outside && zero && invalid,
        format!("f/Z=1 -> {} mm, f/Z=2 -> {} mm; in range exactly on [1, 2]: {}", at(1.0), at(2.0), inside && outside),
    )
}

// ------------------------------------------------------------------ 5

fn mono_joint_equivalence() -> Outcome {
    let mut rng = rng(5);
    let suite = meshes::default_suite();
    let rig = make_rig(&RigSpec {
        included_angles: vec![],
        ..RigSpec::default()
    })
    .unwrap();
    let cfg = SolverConfig::default();
    let mut worst = 0.0f64;
    let mut frames = 0;
    for trial in 0..50 {
        let (_, mesh) = &suite[trial % suite.len()];
        let gt = exp_se3(&Twist::new(unit(&mut rng) * 10.0, unit(&mut rng) * 3.0));
        let img = render_frame(mesh, &rig[0], &gt, &SceneStyle::default(), trial as u64);
        let init = random_perturbation(&mut rng, 4.0, 2.0).compose(&gt);
        let state = TrackerState::new(rig.clone(), init, mesh.bbox_center());
        let obs = observe_view(mesh, &state.views()[0], &state, &img, None, &cfg.energy).unwrap().unwrap();
        let (mut joint, mut mono) = (state.clone(), state.clone());
        for _ in 0..cfg.iters_per_round {
            let mut acc = NormalEquations::default();
            accumulate_view(&obs, &joint.views()[0], &joint, &mut acc, &cfg).unwrap();
            let a = solve_step(&acc, 0.0).unwrap().to_vector();
            let b = solve_monocular(&obs, &mono.views()[0], &mono, &cfg, 0.0).unwrap().to_vector();
            worst = worst.max((a - b).abs().max());
            joint = joint.apply_increment(&Twist::from_vector(&a));
            mono = mono.apply_increment(&Twist::from_vector(&b));
        }
        frames += 1;
    }
    outcome(
        worst <= 1e-12,
        format!("{frames} frames x {} iterations, max |dxi_joint - dxi_mono| = {worst:.1e}", cfg.iters_per_round),
    )
}

// ------------------------------------------------------------------ 6

fn increment_consistency() -> Outcome {
    let mut rng = rng(6);
    let mut worst_latent = 0.0f64;
    let mut worst_conj = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=4);
        let rig: Vec<CameraView> = (0..n)
            .map(|i| {
                let r = exp_se3(&Twist::new(Vector3::zeros(), unit(&mut rng) * 2.0)).rotation;
                CameraView::new(default_intrinsics(), RigidTransform::new(r, r * Vector3::new(0.0, 0.0, -1200.0)), i)
            })
            .collect();
        let pose = exp_se3(&random_twist(&mut rng, 100.0, 2.0));
        let state = TrackerState::new(rig, pose, unit(&mut rng) * 40.0);
        let dxi = random_twist(&mut rng, 10.0, 0.2);
        let next = state.apply_increment(&dxi);
        let latents: Vec<RigidTransform> = (0..n)
            .map(|i| next.views()[i].camera_from_object().inverse().compose(next.camera_pose(i)))
            .collect();
        for l in &latents[1..] {
            worst_latent = worst_latent.max((l.to_matrix4() - latents[0].to_matrix4()).abs().max());
        }
        for i in 0..n {
            let c_o = state.views()[i].camera_from_object();
            let expected = c_o.compose(&exp_se3(&dxi)).compose(&c_o.inverse()).compose(state.camera_pose(i));
            worst_conj = worst_conj.max((expected.to_matrix4() - next.camera_pose(i).to_matrix4()).abs().max());
        }
    }
    outcome(
        worst_latent <= 1e-9 && worst_conj <= 1e-9,
        format!("1000 pairs: latent spread {worst_latent:.1e}, per-camera conjugation {worst_conj:.1e}"),
    )
}

// ------------------------------------------------------------------ 7

/// Frames fail outright at `fail_at`, otherwise render the sequence.
struct Failing {
    seq: mvtrack::simulator::SyntheticSequence,
    fail_at: usize,
}

impl FrameSource for Failing {
    fn frame_count(&self) -> usize {
        self.seq.frames()
    }
    fn view_count(&self) -> usize {
        self.seq.rig.len()
    }
    fn images(&self, k: usize, views: &[usize]) -> Result<Vec<RgbImage>, String> {
        if k == self.fail_at {
            return Err("camera dropped the frame".into());
        }
        Ok(views.iter().map(|&v| self.seq.render(k, v)).collect())
    }
}

fn metric_oracles() -> Outcome {
    let mut rng = rng(7);
    let mut notes = Vec::new();

    let vertices: Vec<Vector3<f64>> = (0..10).map(|_| unit(&mut rng) * 100.0).collect();
    let mut add_worst = 0.0f64;
    let mut rot_worst = 0.0f64;
    for _ in 0..1000 {
        let a = exp_se3(&random_twist(&mut rng, 200.0, 3.0));
        let b = exp_se3(&random_twist(&mut rng, 200.0, 3.0));
        let mut sum = 0.0;
        for v in &vertices {
            sum += (a.transform_point(v) - b.transform_point(v)).norm();
        }
        add_worst = add_worst.max((add_error(&a, &b, &vertices).unwrap() - sum / 10.0).abs());
        let (qa, qb) = (
            UnitQuaternion::from_matrix(&a.rotation),
            UnitQuaternion::from_matrix(&b.rotation),
        );
        let oracle = (2.0 * qa.coords.dot(&qb.coords).abs().min(1.0).acos()).to_degrees();
        rot_worst = rot_worst.max((rotation_error(&a.rotation, &b.rotation).unwrap() - oracle).abs());
    }
    notes.push(format!("ADD vs vertex loop {add_worst:.1e} mm, rotation vs quaternion {rot_worst:.1e} deg"));

    // 10-frame schedule of (rotation deg, translation mm) errors
    let schedule: [(f64, f64); 10] = [
        (0.0, 0.0),
        (1.0, 5.0),
        (2.0, 20.0),
        (2.5, 10.0),
        (5.0, 0.0),
        (0.0, 50.0),
        (6.0, 10.0),
        (1.5, 30.0),
        (4.0, 45.0),
        (0.5, 1.0),
    ];
    let truth: Vec<RigidTransform> = (0..10)
        .map(|i| exp_se3(&Twist::new(Vector3::new(i as f64, 2.0, 900.0), Vector3::new(0.1, 0.2 * i as f64, 0.0))))
        .collect();
    let est: Vec<RigidTransform> = truth
        .iter()
        .zip(schedule)
        .map(|(t, (deg, mm))| {
            let r = nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), deg.to_radians()).into_inner();
            RigidTransform::new(r * t.rotation, t.translation + Vector3::new(mm, 0.0, 0.0))
        })
        .collect();
    let rule = LostRule::default();
    let lost = est
        .iter()
        .zip(&truth)
        .filter(|(e, t)| {
            rule.violated(
                rotation_error(&e.rotation, &t.rotation).unwrap(),
                (e.translation - t.translation).norm(),
            )
        })
        .count();
    let (report, _) = score_sequence(&est, &truth, &vertices, 200.0, lost).unwrap();
    let counts = |rate: f64| (rate * 10.0).round() as usize;
    let got = [
        counts(report.deg5_cm5),
        counts(report.deg2_cm2),
        counts(report.deg5),
        counts(report.cm5),
        counts(report.deg2),
        counts(report.cm2),
    ];
    // hand count with inclusive thresholds: 2° keeps frames 0 1 2 5 7 9, 2 cm keeps 0 1 2 3 4 6 9
    let expected = [9, 4, 9, 10, 6, 7];
    notes.push(format!("schedule counts {got:?} (expected {expected:?}), resets {lost}"));
    let schedule_ok = got == expected && lost == 1 && report.lost == 1;

    // tracker reset bookkeeping on a frame that fails outright
    let k = default_intrinsics().rescaled(320);
    let rig = make_rig(&RigSpec {
        intrinsics: k,
        ..RigSpec::default()
    })
    .unwrap();
    let seq = generate_sequence(
        &meshes::notched_box(),
        &rig,
        &MotionSpec {
            frames: 6,
            ..MotionSpec::default()
        },
        &SceneStyle::default(),
    );
    let gt = seq.gt.clone();
    let source = Failing { seq, fail_at: 3 };
    let state = TrackerState::new(rig, gt[0], meshes::notched_box().bbox_center());
    let tracked = track_sequence(state, &source, &[0, 1], &meshes::notched_box(), &SolverConfig::default(), Some(&gt), &rule, 1);
    notes.push(format!("tracker resets at {:?}", tracked.resets));
    let reset_ok = tracked.resets == vec![3] && tracked.reports.len() == 5;

    outcome(
        add_worst <= 1e-12 && rot_worst <= 1e-9 && schedule_ok && reset_ok,
        notes.join("; "),
    )
}

// ------------------------------------------------------------------ 8

fn convergence_basin() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(8);
    let mesh = meshes::notched_box();
    let rig = make_rig(&RigSpec::default()).unwrap();
    let cfg = SolverConfig::annotation();
    let axis = rig[0].optical_axis();
    let center = mesh.bbox_center();
    let mut ok = 0;
    let mut worst = (0.0f64, 0.0f64);
    for trial in 0..100u64 {
        let gt = RigidTransform::from_rotation(random_perturbation(&mut rng, 0.0, 180.0).rotation)
            .compose(&RigidTransform::from_translation(-center));
        let images: Vec<RgbImage> =
            rig.iter().map(|v| render_frame(&mesh, v, &gt, &SceneStyle::default(), trial)).collect();
        let tilt = random_perturbation(&mut rng, 0.0, 2.0).rotation;
        let c = gt.transform_point(&center);
        // rotate about the object center, then push 5 mm along C-0's axis
        let init = RigidTransform::new(tilt * gt.rotation, tilt * (gt.translation - c) + c + axis * 5.0);
        let state = TrackerState::new(rig.clone(), init, center);
        let Ok((out, _)) = track_frame(&state, &images, &mesh, &cfg) else {
            continue;
        };
        let est = out.rig_from_template();
        let t_err = (est.transform_point(&center) - c).norm();
        let r_err = rotation_error(&est.rotation, &gt.rotation).unwrap();
        worst = (worst.0.max(t_err), worst.1.max(r_err));
        if t_err < 0.5 && r_err < 0.2 {
            ok += 1;
        }
    }
    outcome(
        ok >= 95,
        format!(
            "{ok}/100 recovered to < 0.5 mm / < 0.2 deg (worst {:.3} mm, {:.3} deg); {:.0}s",
            worst.0,
            worst.1,
            start.elapsed().as_secs_f64()
        ),
    )
}

// ------------------------------------------------------------------ 9

fn determinism() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.motion.frames = 5;
    cfg.rig.intrinsics = cfg.rig.intrinsics.rescaled(320);
    cfg.sweep.meshes = vec!["notched_box".into(), "torus_knot".into()];
    cfg.sweep.widths = vec![160, 320];

    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        write_sequence(&simulate(&cfg).unwrap(), d.path()).unwrap();
    }
    let mut files = Vec::new();
    let mut stack = vec![dirs[0].path().to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p.strip_prefix(dirs[0].path()).unwrap().to_path_buf());
            }
        }
    }
    let same_files = files
        .iter()
        .all(|f| std::fs::read(dirs[0].path().join(f)).unwrap() == std::fs::read(dirs[1].path().join(f)).ok().unwrap_or_default());

    let a = sweep(&cfg).unwrap();
    let b = sweep(&cfg).unwrap();
    let csv = |t: &[(String, mvtrack::simulator::ErrorTable)]| t.iter().map(|(n, t)| format!("{n}\n{}", t.to_csv())).collect::<String>();
    let same_tables = csv(&a) == csv(&b);
    outcome(
        same_files && same_tables && files.len() == 4 + 2 * 5,
        format!("{} sequence files identical: {same_files}; {} sweep tables identical: {same_tables}", files.len(), a.len()),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 9] = [
        ("Jacobians match finite differences", jacobians),
        ("tz error falls with included angle; mono >= 10x the 90° rig", angle_trend),
        ("errors fall with resolution; nothing lost", resolution_trend),
        ("pixel to spatial error mapping", spatial_mapping),
        ("single-view joint step equals the monocular step", mono_joint_equivalence),
        ("increment mapping keeps one latent pose", increment_consistency),
        ("metric oracles and reset counting", metric_oracles),
        ("convergence basin 5 mm + 2°", convergence_basin),
        ("simulate and sweep are byte-deterministic", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        say(&format!("{} {}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail));
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
