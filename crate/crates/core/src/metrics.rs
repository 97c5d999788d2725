//! Pose error measures and per-sequence scoring.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::RigidTransform;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("matrix is not a rotation (orthogonality error {0:.3e})")]
    NotARotation(f64),
    #[error("mesh has no vertices")]
    EmptyMesh,
    #[error("estimate and ground truth differ in length: {estimates} vs {truth}")]
    LengthMismatch { estimates: usize, truth: usize },
}

/// Slack for threshold comparisons so values sitting on a threshold count as inside.
pub const THRESHOLD_SLACK: f64 = 1e-9;

const ROTATION_TOL: f64 = 1e-6;

fn check_rotation(r: &Matrix3<f64>) -> Result<(), MetricsError> {
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    if !err.is_finite() || err > ROTATION_TOL || r.determinant() < 0.0 {
        return Err(MetricsError::NotARotation(err));
    }
    Ok(())
}

/// Geodesic angle between two rotations, in degrees.
pub fn rotation_error(estimate: &Matrix3<f64>, truth: &Matrix3<f64>) -> Result<f64, MetricsError> {
    check_rotation(estimate)?;
    check_rotation(truth)?;
    let c = ((estimate.transpose() * truth).trace() - 1.0) / 2.0;
    Ok(c.clamp(-1.0, 1.0).acos().to_degrees())
}

/// Euclidean translation error, in the units of the inputs.
pub fn translation_error(estimate: &Vector3<f64>, truth: &Vector3<f64>) -> f64 {
    (estimate - truth).norm()
}

/// Absolute per-axis translation errors.
pub fn translation_axis_errors(estimate: &Vector3<f64>, truth: &Vector3<f64>) -> Vector3<f64> {
    (estimate - truth).abs()
}

/// Mean distance between mesh vertices under the two poses.
pub fn add_error(estimate: &RigidTransform, truth: &RigidTransform, vertices: &[Vector3<f64>]) -> Result<f64, MetricsError> {
    if vertices.is_empty() {
        return Err(MetricsError::EmptyMesh);
    }
    let sum: f64 = vertices
        .iter()
        .map(|v| (estimate.transform_point(v) - truth.transform_point(v)).norm())
        .sum();
    Ok(sum / vertices.len() as f64)
}

/// The tracking-lost criterion: rotation error over `max_rotation_deg` or
/// translation error over `max_translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LostRule {
    pub max_rotation_deg: f64,
    pub max_translation: f64,
}

impl Default for LostRule {
    fn default() -> Self {
        Self {
            max_rotation_deg: 5.0,
            max_translation: 50.0,
        }
    }
}

impl LostRule {
    pub fn violated(&self, rotation_deg: f64, translation: f64) -> bool {
        rotation_deg > self.max_rotation_deg + THRESHOLD_SLACK || translation > self.max_translation + THRESHOLD_SLACK
    }
}

/// Errors of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameErrors {
    pub rotation_deg: f64,
    pub translation: f64,
    /// Absolute errors along the reference camera axes.
    pub axis: [f64; 3],
    pub add: f64,
}

pub fn frame_errors(
    estimate: &RigidTransform,
    truth: &RigidTransform,
    vertices: &[Vector3<f64>],
) -> Result<FrameErrors, MetricsError> {
    let axis = translation_axis_errors(&estimate.translation, &truth.translation);
    Ok(FrameErrors {
        rotation_deg: rotation_error(&estimate.rotation, &truth.rotation)?,
        translation: translation_error(&estimate.translation, &truth.translation),
        axis: [axis.x, axis.y, axis.z],
        add: add_error(estimate, truth, vertices)?,
    })
}

/// Success rates (fractions in [0, 1]) and summary statistics of a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub frames: usize,
    pub add_002d: f64,
    pub add_005d: f64,
    pub add_01d: f64,
    pub deg5_cm5: f64,
    pub deg2_cm2: f64,
    pub deg5: f64,
    pub cm5: f64,
    pub deg2: f64,
    pub cm2: f64,
    /// Area under the ADD success curve over [0, 0.2 d], normalized to [0, 1].
    pub add_auc: f64,
    pub mean_rotation_deg: f64,
    pub mean_translation: f64,
    /// Mean absolute error along each reference camera axis.
    pub mean_axis: [f64; 3],
    pub lost: usize,
}

impl SequenceReport {
    pub const HEADER: [&'static str; 10] = [
        "ADD-0.02d", "ADD-0.05d", "ADD-0.1d", "5°5cm", "2°2cm", "5°", "5cm", "2°", "2cm", "AUC",
    ];

    /// Rates in percent, in [`Self::HEADER`] order.
    pub fn percentages(&self) -> [f64; 10] {
        [
            self.add_002d,
            self.add_005d,
            self.add_01d,
            self.deg5_cm5,
            self.deg2_cm2,
            self.deg5,
            self.cm5,
            self.deg2,
            self.cm2,
            self.add_auc,
        ]
        .map(|v| v * 100.0)
    }
}

const AUC_STEPS: usize = 1000;

fn within(v: f64, t: f64) -> bool {
    v <= t + THRESHOLD_SLACK
}

/// Fraction of `adds` at or below each threshold, integrated by trapezoid
/// over `[0, max]` and divided by `max`.
pub fn add_auc(adds: &[f64], max: f64) -> f64 {
    if adds.is_empty() || max <= 0.0 {
        return 0.0;
    }
    let mut sorted = adds.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rate = |t: f64| sorted.partition_point(|&a| a <= t) as f64 / sorted.len() as f64;
    let mut area = 0.0;
    let mut prev = rate(0.0);
    for i in 1..=AUC_STEPS {
        let cur = rate(max * i as f64 / AUC_STEPS as f64);
        area += 0.5 * (prev + cur);
        prev = cur;
    }
    area / AUC_STEPS as f64
}

/// Scores a tracked sequence against ground truth. Both pose lists must be
/// expressed in the same reference camera frame; translations are in mm.
pub fn score_sequence(
    estimates: &[RigidTransform],
    truth: &[RigidTransform],
    vertices: &[Vector3<f64>],
    diameter: f64,
    lost: usize,
) -> Result<(SequenceReport, Vec<FrameErrors>), MetricsError> {
    if estimates.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            estimates: estimates.len(),
            truth: truth.len(),
        });
    }
    let errors = estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| frame_errors(e, t, vertices))
        .collect::<Result<Vec<_>, _>>()?;
    let n = errors.len().max(1) as f64;
    let rate = |f: &dyn Fn(&FrameErrors) -> bool| errors.iter().filter(|e| f(e)).count() as f64 / n;
    let adds: Vec<f64> = errors.iter().map(|e| e.add).collect();
    let mean = |f: &dyn Fn(&FrameErrors) -> f64| errors.iter().map(f).sum::<f64>() / n;
    let report = SequenceReport {
        frames: errors.len(),
        add_002d: rate(&|e| within(e.add, 0.02 * diameter)),
        add_005d: rate(&|e| within(e.add, 0.05 * diameter)),
        add_01d: rate(&|e| within(e.add, 0.1 * diameter)),
        deg5_cm5: rate(&|e| within(e.rotation_deg, 5.0) && within(e.translation, 50.0)),
        deg2_cm2: rate(&|e| within(e.rotation_deg, 2.0) && within(e.translation, 20.0)),
        deg5: rate(&|e| within(e.rotation_deg, 5.0)),
        cm5: rate(&|e| within(e.translation, 50.0)),
        deg2: rate(&|e| within(e.rotation_deg, 2.0)),
        cm2: rate(&|e| within(e.translation, 20.0)),
        add_auc: add_auc(&adds, 0.2 * diameter),
        mean_rotation_deg: mean(&|e| e.rotation_deg),
        mean_translation: mean(&|e| e.translation),
        mean_axis: [mean(&|e| e.axis[0]), mean(&|e| e.axis[1]), mean(&|e| e.axis[2])],
        lost,
    };
    Ok((report, errors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_about;
    use nalgebra::{Quaternion, UnitQuaternion};
    use proptest::prelude::*;

    #[test]
    fn rotation_error_examples() {
        let i = Matrix3::identity();
        assert_eq!(rotation_error(&i, &i).unwrap(), 0.0);
        let r = rotation_about(&Vector3::z(), 10f64.to_radians());
        assert!((rotation_error(&r, &i).unwrap() - 10.0).abs() < 1e-9);
        let flip = rotation_about(&Vector3::x(), std::f64::consts::PI);
        assert!((rotation_error(&flip, &i).unwrap() - 180.0).abs() < 1e-6);
        let scaled = i * 1.01;
        assert!(matches!(rotation_error(&scaled, &i), Err(MetricsError::NotARotation(_))));
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(rotation_error(&reflect, &i).is_err());
    }

    #[test]
    fn translation_error_examples() {
        let a = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(translation_error(&a, &a), 0.0);
        assert_eq!(translation_error(&Vector3::new(3.0, 4.0, 0.0), &Vector3::zeros()), 5.0);
        assert_eq!(translation_axis_errors(&Vector3::new(-3.0, 4.0, 1.0), &Vector3::zeros()), Vector3::new(3.0, 4.0, 1.0));
    }

    #[test]
    fn add_of_pure_translation() {
        let verts = vec![Vector3::zeros(), Vector3::x(), Vector3::new(0.0, 7.0, -2.0)];
        let a = RigidTransform::identity();
        let b = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 4.0));
        assert!((add_error(&a, &b, &verts).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(add_error(&a, &b, &[]), Err(MetricsError::EmptyMesh));
    }

    #[test]
    fn lost_rule_boundaries() {
        let rule = LostRule::default();
        assert!(!rule.violated(5.0, 50.0));
        assert!(rule.violated(5.01, 0.0));
        assert!(rule.violated(0.0, 50.01));
    }

    #[test]
    fn thresholds_are_inclusive() {
        let verts = vec![Vector3::x()];
        let truth = vec![RigidTransform::identity(); 4];
        let est: Vec<_> = [0.0, 20.0, 20.0 + 1e-12, 21.0]
            .iter()
            .map(|&t| RigidTransform::from_translation(Vector3::new(t, 0.0, 0.0)))
            .collect();
        let (r, _) = score_sequence(&est, &truth, &verts, 100.0, 0).unwrap();
        assert_eq!(r.cm2, 0.75);
        assert_eq!(r.add_002d, 0.25);
        assert_eq!(r.cm5, 1.0);
    }

    #[test]
    fn perfect_sequence_scores_full() {
        let verts = vec![Vector3::x(), Vector3::y()];
        let p = vec![RigidTransform::from_translation(Vector3::new(1.0, 2.0, 600.0)); 5];
        let (r, _) = score_sequence(&p, &p, &verts, 100.0, 0).unwrap();
        assert!(r.percentages().iter().all(|&v| (v - 100.0).abs() < 1e-9));
        assert!(score_sequence(&p, &p[..3], &verts, 100.0, 0).is_err());
    }

    #[test]
    fn auc_of_uniform_errors() {
        // errors spread evenly over [0, max] give an area of about one half
        let adds: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0 * 20.0).collect();
        assert!((add_auc(&adds, 20.0) - 0.5).abs() < 2e-3);
        assert!((add_auc(&[0.0; 4], 20.0) - 1.0).abs() < 1e-12);
        assert_eq!(add_auc(&[30.0; 4], 20.0), 0.0);
    }

    proptest! {
        #[test]
        fn rotation_error_matches_quaternion_angle(
            q1 in prop::array::uniform4(-1.0f64..1.0),
            q2 in prop::array::uniform4(-1.0f64..1.0),
        ) {
            prop_assume!(q1.iter().map(|v| v * v).sum::<f64>() > 1e-2);
            prop_assume!(q2.iter().map(|v| v * v).sum::<f64>() > 1e-2);
            let a = UnitQuaternion::from_quaternion(Quaternion::new(q1[0], q1[1], q1[2], q1[3]));
            let b = UnitQuaternion::from_quaternion(Quaternion::new(q2[0], q2[1], q2[2], q2[3]));
            let dot = a.coords.dot(&b.coords).abs().min(1.0);
            let expected = (2.0 * dot.acos()).to_degrees();
            let got = rotation_error(&a.to_rotation_matrix().into_inner(), &b.to_rotation_matrix().into_inner()).unwrap();
            // acos is ill-conditioned near 0 and 180 degrees
            prop_assert!((got - expected).abs() < 1e-4 || (got - expected).abs() < 2e-3 && !(1.0..=179.0).contains(&got));
        }

        #[test]
        fn rotation_error_symmetric(ax in prop::array::uniform3(-1.0f64..1.0), a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let axis = Vector3::from(ax);
            prop_assume!(axis.norm() > 1e-3);
            let ra = rotation_about(&axis, a);
            let rb = rotation_about(&Vector3::new(ax[1], ax[2], ax[0]), b);
            let e1 = rotation_error(&ra, &rb).unwrap();
            let e2 = rotation_error(&rb, &ra).unwrap();
            prop_assert!((e1 - e2).abs() < 1e-9);
            prop_assert!((0.0..=180.0).contains(&e1));
        }
    }
}
