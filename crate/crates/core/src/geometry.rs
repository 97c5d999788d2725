//! Rigid-body arithmetic on SE(3) and its Lie algebra.
//!
//! Twists are flattened translation-first, `(rho, phi)`, which lines up with
//! the `[I | -skew(X)]` layout of [`point_jacobian`].

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix3x6, Matrix4, Vector3, Vector6};
use serde::{Deserialize, Serialize};

/// Below this rotation angle (rad) the exponential map uses its Taylor series.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Skew-symmetric cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Element of se(3): translational part `rho` (mm) and rotational part `phi` (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub rho: Vector3<f64>,
    pub phi: Vector3<f64>,
}

impl Twist {
    pub fn new(rho: Vector3<f64>, phi: Vector3<f64>) -> Self {
        Self { rho, phi }
    }

    pub fn zero() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros())
    }

    /// Builds a twist from `[rho; phi]`.
    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into())
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.rho);
        v.fixed_rows_mut::<3>(3).copy_from(&self.phi);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.rho.iter().chain(self.phi.iter()).all(|c| c.is_finite())
    }
}

/// 4x4 matrix form `[skew(phi) rho; 0 0]`.
pub fn hat(t: &Twist) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&t.phi));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t.rho);
    m
}

/// Exponential map se(3) -> SE(3).
pub fn exp_se3(t: &Twist) -> RigidTransform {
    let theta = t.phi.norm();
    let k = skew(&t.phi);
    let k2 = k * k;
    let (a, b, c) = if theta < SMALL_ANGLE {
        // sin(x)/x, (1-cos x)/x^2, (x-sin x)/x^3 to second order
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let t2 = theta * theta;
        let half = (theta / 2.0).sin() / (theta / 2.0);
        // (x - sin x) / x^3 cancels badly for small x
        let c = if theta < 1e-3 {
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
        } else {
            (theta - theta.sin()) / (t2 * theta)
        };
        (theta.sin() / theta, 0.5 * half * half, c)
    };
    let eye = Matrix3::identity();
    let rotation = eye + k * a + k2 * b;
    let v = eye + k * b + k2 * c;
    RigidTransform {
        rotation,
        translation: v * t.rho,
    }
}

/// Rotation by `angle` radians about `axis` (need not be normalized).
pub fn rotation_about(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let n = axis.norm();
    if n == 0.0 {
        return Matrix3::identity();
    }
    exp_se3(&Twist::new(Vector3::zeros(), axis * (angle / n))).rotation
}

/// Element of SE(3). Translation in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), t)
    }

    pub fn from_rotation(r: Matrix3<f64>) -> Self {
        Self::new(r, Vector3::zeros())
    }

    /// Reads the upper 3x4 block of a homogeneous matrix; the bottom row is ignored.
    pub fn from_matrix4(m: &Matrix4<f64>) -> Self {
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into(),
            m.fixed_view::<3, 1>(0, 3).into(),
        )
    }

    pub fn to_matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// `(self ∘ other)(x) == self(other(x))`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Orthonormality and handedness check on the rotation block.
    pub fn is_valid(&self, tol: f64) -> bool {
        let r = &self.rotation;
        r.iter().chain(self.translation.iter()).all(|c| c.is_finite())
            && (r.transpose() * r - Matrix3::identity()).abs().max() <= tol
            && (r.determinant() - 1.0).abs() <= tol
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

impl Mul<&RigidTransform> for &RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        self.compose(rhs)
    }
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

/// Nearest rotation (Frobenius norm) to an arbitrary 3x3 matrix, via SVD.
///
/// Returns `None` when the closest orthogonal matrix is a reflection or the
/// input is not finite.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    if !m.iter().all(|c| c.is_finite()) {
        return None;
    }
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let r = u * vt;
    if r.determinant() <= 0.0 {
        return None;
    }
    Some(r)
}

/// Coordinate frame a point is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Frame {
    /// The mesh's native (CAD) frame.
    Template,
    /// Object-centered frame: origin at the model's bounding-box center.
    Object,
    Camera,
}

/// A 3D point (mm) tagged with its frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub frame: Frame,
    pub coords: Vector3<f64>,
}

impl Point3 {
    pub fn new(frame: Frame, x: f64, y: f64, z: f64) -> Self {
        Self {
            frame,
            coords: Vector3::new(x, y, z),
        }
    }

    pub fn template(coords: Vector3<f64>) -> Self {
        Self {
            frame: Frame::Template,
            coords,
        }
    }

    pub fn object(coords: Vector3<f64>) -> Self {
        Self {
            frame: Frame::Object,
            coords,
        }
    }

    pub fn camera(coords: Vector3<f64>) -> Self {
        Self {
            frame: Frame::Camera,
            coords,
        }
    }

    /// Applies `t`, relabelling the result as `to`.
    pub fn transformed(&self, t: &RigidTransform, to: Frame) -> Point3 {
        Point3 {
            frame: to,
            coords: t.transform_point(&self.coords),
        }
    }
}

/// Derivative of `exp(hat(d)) * (T x)` with respect to `d` at `d = 0`.
///
/// The result is `[I | -skew(R x + t)]`, translation columns first.
pub fn point_jacobian(t: &RigidTransform, x: &Vector3<f64>) -> Matrix3x6<f64> {
    let p = t.transform_point(x);
    let mut j = Matrix3x6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&p)));
    j
}
