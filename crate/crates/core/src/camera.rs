//! Distortion-free pinhole camera.
//!
//! Camera frame: x right, y down, z along the optical axis. A world point `X`
//! maps to camera coordinates `R·(X − t)` where `t` is the camera center.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::skeleton::{Pose2D, Pose3D};

pub type Mat3 = [[f64; 3]; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub focal: f64,
    pub principal_point: [f64; 2],
    /// Rows are the camera axes expressed in world coordinates.
    pub rotation: Mat3,
    /// Camera center in world coordinates (mm).
    pub translation: [f64; 3],
    /// Width, height in pixels.
    pub image_size: [usize; 2],
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn unit(a: [f64; 3]) -> Option<[f64; 3]> {
    let n = dot(a, a).sqrt();
    (n > 0.0 && n.is_finite()).then(|| [a[0] / n, a[1] / n, a[2] / n])
}

fn det3(m: &Mat3) -> f64 {
    dot(m[0], cross(m[1], m[2]))
}

impl CameraModel {
    pub fn new(
        focal: f64,
        principal_point: [f64; 2],
        rotation: Mat3,
        translation: [f64; 3],
        image_size: [usize; 2],
    ) -> Result<Self> {
        if !(focal > 0.0 && focal.is_finite()) {
            return Err(CoreError::Config(format!("focal must be > 0, got {focal}")));
        }
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                // rows orthonormal <=> R·Rᵀ = I <=> RᵀR = I for square R
                if (dot(rotation[i], rotation[j]) - expect).abs() > 1e-9 {
                    return Err(CoreError::Config("rotation is not orthonormal".into()));
                }
            }
        }
        if (det3(&rotation) - 1.0).abs() > 1e-9 {
            return Err(CoreError::Config("rotation determinant is not +1".into()));
        }
        if image_size[0] == 0 || image_size[1] == 0 {
            return Err(CoreError::Config("image size must be non-zero".into()));
        }
        Ok(Self {
            focal,
            principal_point,
            rotation,
            translation,
            image_size,
        })
    }

    /// Camera at `eye` looking at `target`, with image "up" roughly along `up`.
    /// Principal point at the image center.
    pub fn look_at(
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        focal: f64,
        image_size: [usize; 2],
    ) -> Result<Self> {
        let fwd = unit([target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]])
            .ok_or_else(|| CoreError::Config("eye and target coincide".into()))?;
        let right = unit(cross(fwd, up))
            .ok_or_else(|| CoreError::Config("up vector parallel to view direction".into()))?;
        let down = cross(fwd, right);
        let pp = [image_size[0] as f64 / 2.0, image_size[1] as f64 / 2.0];
        Self::new(focal, pp, [right, down, fwd], eye, image_size)
    }

    pub fn to_camera_frame(&self, x: [f64; 3]) -> [f64; 3] {
        let d = [
            x[0] - self.translation[0],
            x[1] - self.translation[1],
            x[2] - self.translation[2],
        ];
        [
            dot(self.rotation[0], d),
            dot(self.rotation[1], d),
            dot(self.rotation[2], d),
        ]
    }

    /// Pixel coordinates of a camera-frame point with positive depth.
    pub fn project_camera_point(&self, xc: [f64; 3]) -> [f64; 2] {
        [
            self.focal * xc[0] / xc[2] + self.principal_point[0],
            self.focal * xc[1] / xc[2] + self.principal_point[1],
        ]
    }

    pub fn in_bounds(&self, px: [f64; 2]) -> bool {
        px[0] >= 0.0
            && px[1] >= 0.0
            && px[0] <= (self.image_size[0] - 1) as f64
            && px[1] <= (self.image_size[1] - 1) as f64
    }
}

/// Pinhole projection of every joint. Joints landing outside the image are
/// kept but marked not visible.
pub fn project_to_view(pose: &Pose3D, cam: &CameraModel) -> Result<Pose2D> {
    let mut coords = Vec::with_capacity(pose.num_joints());
    let mut visible = Vec::with_capacity(pose.num_joints());
    for (j, &x) in pose.coords().iter().enumerate() {
        let xc = cam.to_camera_frame(x);
        if xc[2] <= 0.0 {
            return Err(CoreError::BehindCamera { joint: j, depth: xc[2] });
        }
        let px = cam.project_camera_point(xc);
        visible.push(cam.in_bounds(px));
        coords.push(px);
    }
    Pose2D::new(coords, visible)
}
