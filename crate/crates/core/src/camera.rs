//! Pinhole projection in the object-centered frame and its derivatives.
//!
//! Pixel convention: origin at the top-left pixel center, +x right, +y down.
//! No distortion model; inputs are assumed rectified.

use nalgebra::{Matrix2x3, Matrix2x6, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{point_jacobian, Frame, Point3, RigidTransform};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("point is behind the camera (depth {depth} mm)")]
    BehindCamera { depth: f64 },
    #[error("expected a point in the {expected:?} frame, got {got:?}")]
    FrameMismatch { expected: Frame, got: Frame },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, CameraError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.fx.is_finite() && self.fy.is_finite() && self.fx > 0.0 && self.fy > 0.0) {
            return Err(CameraError::InvalidArgument(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(CameraError::InvalidArgument("principal point must be finite".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::InvalidArgument(format!(
                "image size must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Same field of view at a different image width; height keeps the aspect ratio.
    pub fn rescaled(&self, width: u32) -> Self {
        let s = width as f64 / self.width as f64;
        let height = ((self.height as f64 * s).round() as u32).max(1);
        // keep pixel centers consistent: c' + 0.5 = s (c + 0.5)
        Self {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: (self.cx + 0.5) * s - 0.5,
            cy: (self.cy + 0.5) * s - 0.5,
            width,
            height,
        }
    }
}

/// A calibrated camera placed relative to the object-centered frame.
///
/// Stores `object_from_camera` together with its inverse, which is what the
/// projection actually consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub intrinsics: CameraIntrinsics,
    pub index: usize,
    object_from_camera: RigidTransform,
    camera_from_object: RigidTransform,
}

impl CameraView {
    pub fn new(intrinsics: CameraIntrinsics, object_from_camera: RigidTransform, index: usize) -> Self {
        Self {
            intrinsics,
            index,
            camera_from_object: object_from_camera.inverse(),
            object_from_camera,
        }
    }

    pub fn object_from_camera(&self) -> &RigidTransform {
        &self.object_from_camera
    }

    pub fn camera_from_object(&self) -> &RigidTransform {
        &self.camera_from_object
    }

    /// The same camera re-expressed against a different object-centered frame.
    pub fn with_object_from_camera(&self, object_from_camera: RigidTransform) -> Self {
        Self::new(self.intrinsics, object_from_camera, self.index)
    }

    /// Optical center in the object-centered frame.
    pub fn center(&self) -> Vector3<f64> {
        self.object_from_camera.translation
    }

    /// Unit optical axis (+z of the camera) in the object-centered frame.
    pub fn optical_axis(&self) -> Vector3<f64> {
        self.object_from_camera.rotation.column(2).into_owned()
    }

    /// Projects a point given as raw object-frame coordinates.
    pub fn project_coords(&self, x_o: &Vector3<f64>) -> Result<Vector2<f64>, CameraError> {
        let p = self.camera_from_object.transform_point(x_o);
        let (a, b, c) = (p.x, p.y, p.z);
        if c <= 0.0 {
            return Err(CameraError::BehindCamera { depth: c });
        }
        let k = &self.intrinsics;
        Ok(Vector2::new((k.fx * a + k.cx * c) / c, (k.fy * b + k.cy * c) / c))
    }

    /// Quotient-rule derivative of the projection w.r.t. object-frame coordinates.
    pub fn projection_jacobian_coords(&self, x_o: &Vector3<f64>) -> Result<Matrix2x3<f64>, CameraError> {
        let t = &self.camera_from_object;
        let p = t.transform_point(x_o);
        let (a, b, c) = (p.x, p.y, p.z);
        if c <= 0.0 {
            return Err(CameraError::BehindCamera { depth: c });
        }
        let k = &self.intrinsics;
        let (nu, nv) = (k.fx * a + k.cx * c, k.fy * b + k.cy * c);
        let c2 = c * c;
        let r = &t.rotation;
        let mut j = Matrix2x3::zeros();
        for col in 0..3 {
            // dA/dX_col = t_{1,col}, dB = t_{2,col}, dC = t_{3,col}
            let (da, db, dc) = (r[(0, col)], r[(1, col)], r[(2, col)]);
            j[(0, col)] = ((k.fx * da + k.cx * dc) * c - nu * dc) / c2;
            j[(1, col)] = ((k.fy * db + k.cy * dc) * c - nv * dc) / c2;
        }
        Ok(j)
    }

    /// Derivative of `project(exp(hat(d)) * current * x)` w.r.t. `d` at zero.
    pub fn pose_jacobian_coords(
        &self,
        x: &Vector3<f64>,
        current: &RigidTransform,
    ) -> Result<Matrix2x6<f64>, CameraError> {
        let x_o = current.transform_point(x);
        Ok(self.projection_jacobian_coords(&x_o)? * point_jacobian(current, x))
    }
}

fn expect_frame(p: &Point3, frame: Frame) -> Result<(), CameraError> {
    if p.frame != frame {
        return Err(CameraError::FrameMismatch {
            expected: frame,
            got: p.frame,
        });
    }
    Ok(())
}

/// Pixel position of an object-frame point.
pub fn project(view: &CameraView, x_o: &Point3) -> Result<Vector2<f64>, CameraError> {
    expect_frame(x_o, Frame::Object)?;
    view.project_coords(&x_o.coords)
}

/// 2x3 derivative of [`project`] with respect to the object-frame point.
pub fn projection_point_jacobian(view: &CameraView, x_o: &Point3) -> Result<Matrix2x3<f64>, CameraError> {
    expect_frame(x_o, Frame::Object)?;
    view.projection_jacobian_coords(&x_o.coords)
}

/// 2x6 derivative of the projection of `current * x` under a left increment
/// `exp(hat(d))` applied in the object-centered frame.
///
/// `x` is the model point before `current` is applied; pass the identity
/// together with an object-frame point to differentiate at that point.
pub fn full_pose_jacobian(
    view: &CameraView,
    x: &Point3,
    current: &RigidTransform,
) -> Result<Matrix2x6<f64>, CameraError> {
    view.pose_jacobian_coords(&x.coords, current)
}

/// Spatial error (mm) corresponding to an image-plane error (px) at a given
/// depth: the inverse of `x = (f / Z) X + c`.
pub fn pixel_to_spatial_error(pixel_error: f64, f: f64, depth: f64) -> Result<f64, CameraError> {
    if !(f.is_finite() && f > 0.0) {
        return Err(CameraError::InvalidArgument(format!("focal length must be positive, got {f}")));
    }
    if !(depth.is_finite() && depth > 0.0) {
        return Err(CameraError::InvalidArgument(format!("depth must be positive, got {depth}")));
    }
    Ok(pixel_error * depth / f)
}
