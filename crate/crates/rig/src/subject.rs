//! Per-subject body dimensions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mvpose_core::JointId;

use crate::error::{Result, RigError};

/// Segment dimensions in millimetres. Left and right limbs share one length
/// per segment, so symmetry holds by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: u32,
    /// Standing height (mm); task heights are fractions of it.
    pub stature: f64,
    /// Neck to head center.
    pub head: f64,
    /// Pelvis center to neck.
    pub trunk: f64,
    pub shoulder_half_width: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub hip_half_width: f64,
    pub thigh: f64,
    pub shank: f64,
    /// Ankle joint height above the floor.
    pub ankle_height: f64,
    /// Half the distance between the ankles.
    pub stance_half_width: f64,
}

impl SubjectProfile {
    /// Average proportions for the given stature.
    pub fn from_stature(subject_id: u32, stature: f64) -> Self {
        Self {
            subject_id,
            stature,
            head: 0.10 * stature,
            trunk: 0.30 * stature,
            shoulder_half_width: 0.105 * stature,
            upper_arm: 0.186 * stature,
            forearm: 0.146 * stature,
            hip_half_width: 0.055 * stature,
            thigh: 0.245 * stature,
            shank: 0.246 * stature,
            ankle_height: 0.039 * stature,
            stance_half_width: 0.07 * stature,
        }
    }

    /// Seeded subject: stature in 1550–1900 mm and each segment scaled by up
    /// to ±3 %.
    pub fn random(subject_id: u32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(subject_id) << 32) ^ 0x5eb1_ec75);
        let stature = rng.gen_range(1550.0..1900.0);
        let mut p = Self::from_stature(subject_id, stature);
        let mut jitter = |v: &mut f64| *v *= rng.gen_range(0.97..1.03);
        jitter(&mut p.head);
        jitter(&mut p.trunk);
        jitter(&mut p.shoulder_half_width);
        jitter(&mut p.upper_arm);
        jitter(&mut p.forearm);
        jitter(&mut p.hip_half_width);
        jitter(&mut p.thigh);
        jitter(&mut p.shank);
        p
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("stature", self.stature),
            ("head", self.head),
            ("trunk", self.trunk),
            ("shoulder_half_width", self.shoulder_half_width),
            ("upper_arm", self.upper_arm),
            ("forearm", self.forearm),
            ("hip_half_width", self.hip_half_width),
            ("thigh", self.thigh),
            ("shank", self.shank),
            ("ankle_height", self.ankle_height),
            ("stance_half_width", self.stance_half_width),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(RigError::Config(format!(
                    "subject {}: {name} must be positive, got {v}",
                    self.subject_id
                )));
            }
        }
        Ok(())
    }

    /// Expected length of the bone from `child` to its parent.
    pub fn bone_length(&self, child: JointId) -> Option<f64> {
        use JointId::*;
        Some(match child {
            Neck => return None,
            Head => self.head,
            LShoulder | RShoulder => self.shoulder_half_width,
            LElbow | RElbow => self.upper_arm,
            LWrist | RWrist => self.forearm,
            LHip | RHip => self.trunk.hypot(self.hip_half_width),
            LKnee | RKnee => self.thigh,
            LAnkle | RAnkle => self.shank,
        })
    }
}
