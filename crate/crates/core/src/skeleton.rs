//! Joint taxonomy, pose containers and dataset-level coordinate normalization.
//!
//! All 3D quantities are millimeters in the lab frame (z up). Joint order is
//! frozen to [`JointId::ALL`]; every tensor and file uses it.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Number of joints in the skeleton.
pub const NUM_JOINTS: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointId {
    Head = 0,
    Neck = 1,
    LShoulder = 2,
    RShoulder = 3,
    LElbow = 4,
    RElbow = 5,
    LWrist = 6,
    RWrist = 7,
    LHip = 8,
    RHip = 9,
    LKnee = 10,
    RKnee = 11,
    LAnkle = 12,
    RAnkle = 13,
}

impl JointId {
    pub const ALL: [JointId; NUM_JOINTS] = [
        JointId::Head,
        JointId::Neck,
        JointId::LShoulder,
        JointId::RShoulder,
        JointId::LElbow,
        JointId::RElbow,
        JointId::LWrist,
        JointId::RWrist,
        JointId::LHip,
        JointId::RHip,
        JointId::LKnee,
        JointId::RKnee,
        JointId::LAnkle,
        JointId::RAnkle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<JointId> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            JointId::Head => "head",
            JointId::Neck => "neck",
            JointId::LShoulder => "l_shoulder",
            JointId::RShoulder => "r_shoulder",
            JointId::LElbow => "l_elbow",
            JointId::RElbow => "r_elbow",
            JointId::LWrist => "l_wrist",
            JointId::RWrist => "r_wrist",
            JointId::LHip => "l_hip",
            JointId::RHip => "r_hip",
            JointId::LKnee => "l_knee",
            JointId::RKnee => "r_knee",
            JointId::LAnkle => "l_ankle",
            JointId::RAnkle => "r_ankle",
        }
    }

    /// Parent in the kinematic tree. The neck is the root; hips hang off the
    /// neck through the (implicit) trunk.
    pub fn parent(self) -> Option<JointId> {
        use JointId::*;
        match self {
            Neck => None,
            Head | LShoulder | RShoulder | LHip | RHip => Some(Neck),
            LElbow => Some(LShoulder),
            RElbow => Some(RShoulder),
            LWrist => Some(LElbow),
            RWrist => Some(RElbow),
            LKnee => Some(LHip),
            RKnee => Some(RHip),
            LAnkle => Some(LKnee),
            RAnkle => Some(RKnee),
        }
    }

    pub fn is_left(self) -> bool {
        use JointId::*;
        matches!(self, LShoulder | LElbow | LWrist | LHip | LKnee | LAnkle)
    }

    pub fn is_right(self) -> bool {
        use JointId::*;
        matches!(self, RShoulder | RElbow | RWrist | RHip | RKnee | RAnkle)
    }
}

/// (child, parent) pairs of the kinematic tree, in joint order.
pub fn bones() -> Vec<(JointId, JointId)> {
    JointId::ALL
        .iter()
        .filter_map(|&j| j.parent().map(|p| (j, p)))
        .collect()
}

fn check_finite<const D: usize>(coords: &[[f64; D]], what: &'static str) -> Result<()> {
    if coords.iter().flatten().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CoreError::NonFinite(what))
    }
}

/// 3D joint positions in millimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pose3D {
    coords: Vec<[f64; 3]>,
}

impl Pose3D {
    pub fn new(coords: Vec<[f64; 3]>) -> Result<Self> {
        if coords.is_empty() {
            return Err(CoreError::Empty("pose"));
        }
        check_finite(&coords, "pose")?;
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[[f64; 3]] {
        &self.coords
    }

    pub fn joint(&self, j: JointId) -> [f64; 3] {
        self.coords[j.index()]
    }

    pub fn num_joints(&self) -> usize {
        self.coords.len()
    }
}

/// Normalized pose, nominally in `[0, 1]` per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizedPose3D {
    coords: Vec<[f64; 3]>,
}

impl NormalizedPose3D {
    pub fn new(coords: Vec<[f64; 3]>) -> Result<Self> {
        if coords.is_empty() {
            return Err(CoreError::Empty("normalized pose"));
        }
        check_finite(&coords, "normalized pose")?;
        Ok(Self { coords })
    }

    /// Reshape a flat `3·J` vector (joint-major) into a pose.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 3 != 0 {
            return Err(CoreError::Shape(format!(
                "flat pose length {} is not a multiple of 3",
                flat.len()
            )));
        }
        Self::new(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.coords.iter().flatten().copied().collect()
    }

    pub fn coords(&self) -> &[[f64; 3]] {
        &self.coords
    }

    pub fn num_joints(&self) -> usize {
        self.coords.len()
    }

    /// True when some coordinate falls outside `[0, 1]`, i.e. the pose lies
    /// outside the range the parameters were fitted on.
    pub fn out_of_range(&self) -> bool {
        self.coords
            .iter()
            .flatten()
            .any(|&v| !(0.0..=1.0).contains(&v))
    }
}

/// Per-axis affine normalization range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub min_xyz: [f64; 3],
    pub max_xyz: [f64; 3],
}

const AXES: [char; 3] = ['x', 'y', 'z'];

impl NormParams {
    pub fn new(min_xyz: [f64; 3], max_xyz: [f64; 3]) -> Result<Self> {
        for k in 0..3 {
            if !min_xyz[k].is_finite() || !max_xyz[k].is_finite() {
                return Err(CoreError::NonFinite("normalization range"));
            }
            if max_xyz[k] <= min_xyz[k] {
                return Err(CoreError::DegenerateAxis {
                    axis: AXES[k],
                    value: min_xyz[k],
                });
            }
        }
        Ok(Self { min_xyz, max_xyz })
    }

    pub fn span(&self, axis: usize) -> f64 {
        self.max_xyz[axis] - self.min_xyz[axis]
    }
}

/// Per-axis min/max over every joint of every pose.
pub fn fit_norm_params<'a, I>(poses: I) -> Result<NormParams>
where
    I: IntoIterator<Item = &'a Pose3D>,
{
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let mut seen = false;
    for pose in poses {
        seen = true;
        for c in pose.coords() {
            for k in 0..3 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
    }
    if !seen {
        return Err(CoreError::Empty("pose sequence"));
    }
    NormParams::new(lo, hi)
}

pub fn normalize_pose(pose: &Pose3D, params: &NormParams) -> Result<NormalizedPose3D> {
    let coords = pose
        .coords()
        .iter()
        .map(|c| {
            let mut out = [0.0; 3];
            for k in 0..3 {
                out[k] = (c[k] - params.min_xyz[k]) / params.span(k);
            }
            out
        })
        .collect();
    NormalizedPose3D::new(coords)
}

pub fn denormalize_pose(pose: &NormalizedPose3D, params: &NormParams) -> Result<Pose3D> {
    let coords = pose
        .coords()
        .iter()
        .map(|c| {
            let mut out = [0.0; 3];
            for k in 0..3 {
                out[k] = c[k] * params.span(k) + params.min_xyz[k];
            }
            out
        })
        .collect();
    Pose3D::new(coords)
}

/// 2D joint positions in pixels plus a per-joint visibility flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub coords: Vec<[f64; 2]>,
    pub visible: Vec<bool>,
}

impl Pose2D {
    pub fn new(coords: Vec<[f64; 2]>, visible: Vec<bool>) -> Result<Self> {
        if coords.len() != visible.len() {
            return Err(CoreError::Shape(format!(
                "{} coordinates but {} visibility flags",
                coords.len(),
                visible.len()
            )));
        }
        check_finite(&coords, "2D pose")?;
        Ok(Self { coords, visible })
    }

    pub fn num_joints(&self) -> usize {
        self.coords.len()
    }
}
