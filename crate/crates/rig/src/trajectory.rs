//! Keyframed whole-body lifting motion.
//!
//! World frame: x forward (the subject's initial facing), y to the subject's
//! left, z up, millimetres, origin on the floor between the feet.
//!
//! A pose is built bottom-up from four scalars: hand height, trunk yaw, a
//! bend amount in `[0, 1]` (squat depth and trunk flexion together) and the
//! horizontal reach of the hands in front of the pelvis. Ankles never move.
//! Legs and arms are placed with two-segment IK, and the pelvis rotates with
//! the trunk, so every bone keeps its length.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mvpose_core::{JointId, Pose3D, NUM_JOINTS};

use crate::error::Result;
use crate::geom::{add, dist, scale, two_bone_ik, V3};
use crate::subject::SubjectProfile;
use crate::task::LiftTask;

const MAX_TRUNK_FLEXION_DEG: f64 = 80.0;
/// Hip-to-ankle distance as a fraction of leg length, standing and fully squatted.
const LEG_EXTENSION: (f64, f64) = (0.97, 0.42);
/// Backward pelvis shift at full bend, as a fraction of stature.
const PELVIS_SHIFT: f64 = 0.08;
/// Hand targets closer than this fraction of arm length count as reachable.
const COMFORT_REACH: f64 = 0.97;
/// Fraction of the trajectory spent still at each end.
const HOLD: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    /// Wrist height above the floor (mm).
    pub hand_height: f64,
    /// Trunk and pelvis rotation about the vertical axis (radians).
    pub yaw: f64,
    pub bend: f64,
    /// Horizontal distance from the pelvis center to the midpoint of the hands (mm).
    pub reach: f64,
}

fn forward(yaw: f64) -> V3 {
    [yaw.cos(), yaw.sin(), 0.0]
}

fn left(yaw: f64) -> V3 {
    [-yaw.sin(), yaw.cos(), 0.0]
}

struct Upper {
    pelvis: V3,
    neck: V3,
    head: V3,
    shoulders: [V3; 2],
    hips: [V3; 2],
}

/// Pelvis, trunk, head, shoulders and hips for a keyframe; `[left, right]`.
fn upper_body(s: &SubjectProfile, k: &Keyframe) -> Upper {
    let b = k.bend.clamp(0.0, 1.0);
    let lat = left(k.yaw);
    let ankles = ankles(s);
    let pelvis_xy = [-PELVIS_SHIFT * s.stature * b, 0.0, 0.0];
    let hips_xy = [
        add(pelvis_xy, scale(lat, s.hip_half_width)),
        add(pelvis_xy, scale(lat, -s.hip_half_width)),
    ];
    let horizontal = (0..2)
        .map(|i| (hips_xy[i][0] - ankles[i][0]).hypot(hips_xy[i][1] - ankles[i][1]))
        .fold(0.0, f64::max);
    let extension = LEG_EXTENSION.0 + (LEG_EXTENSION.1 - LEG_EXTENSION.0) * b;
    let reach = extension * (s.thigh + s.shank);
    let pelvis_z = s.ankle_height + (reach * reach - horizontal * horizontal).max(0.0).sqrt();
    let pelvis = [pelvis_xy[0], pelvis_xy[1], pelvis_z];
    let phi = (MAX_TRUNK_FLEXION_DEG * b).to_radians();
    let dir = [phi.sin() * k.yaw.cos(), phi.sin() * k.yaw.sin(), phi.cos()];
    let neck = add(pelvis, scale(dir, s.trunk));
    let head = add(neck, scale(dir, s.head));
    Upper {
        pelvis,
        neck,
        head,
        shoulders: [
            add(neck, scale(lat, s.shoulder_half_width)),
            add(neck, scale(lat, -s.shoulder_half_width)),
        ],
        hips: [add(hips_xy[0], [0.0, 0.0, pelvis_z]), add(hips_xy[1], [0.0, 0.0, pelvis_z])],
    }
}

fn ankles(s: &SubjectProfile) -> [V3; 2] {
    [
        [0.0, s.stance_half_width, s.ankle_height],
        [0.0, -s.stance_half_width, s.ankle_height],
    ]
}

fn hand_targets(s: &SubjectProfile, k: &Keyframe, pelvis: V3) -> [V3; 2] {
    let c = add([pelvis[0], pelvis[1], k.hand_height], scale(forward(k.yaw), k.reach));
    let lat = left(k.yaw);
    [
        add(c, scale(lat, s.shoulder_half_width)),
        add(c, scale(lat, -s.shoulder_half_width)),
    ]
}

/// Full pose for a keyframe. Arms reach for the hand targets and stretch
/// toward them when they are out of reach.
pub fn pose_from_keyframe(s: &SubjectProfile, k: &Keyframe) -> Result<Pose3D> {
    let u = upper_body(s, k);
    let ankles = ankles(s);
    let targets = hand_targets(s, k, u.pelvis);
    let lat = left(k.yaw);
    let knee_pole = forward(k.yaw / 2.0);
    let mut coords = vec![[0.0; 3]; NUM_JOINTS];
    let mut put = |j: JointId, x: V3| coords[j.index()] = x;
    put(JointId::Head, u.head);
    put(JointId::Neck, u.neck);
    let sides = [
        (JointId::LShoulder, JointId::LElbow, JointId::LWrist, JointId::LHip, JointId::LKnee, JointId::LAnkle, 1.0),
        (JointId::RShoulder, JointId::RElbow, JointId::RWrist, JointId::RHip, JointId::RKnee, JointId::RAnkle, -1.0),
    ];
    for (i, &(sh, el, wr, hp, kn, an, side)) in sides.iter().enumerate() {
        let elbow_pole = add([0.0, 0.0, -1.0], scale(lat, 0.3 * side));
        let (elbow, wrist) = two_bone_ik(u.shoulders[i], targets[i], s.upper_arm, s.forearm, elbow_pole);
        let (knee, _) = two_bone_ik(ankles[i], u.hips[i], s.shank, s.thigh, knee_pole);
        put(sh, u.shoulders[i]);
        put(el, elbow);
        put(wr, wrist);
        put(hp, u.hips[i]);
        put(kn, knee);
        put(an, ankles[i]);
    }
    Ok(Pose3D::new(coords)?)
}

/// Smallest bend (in steps of 0.01) that brings both hand targets within
/// comfortable reach; 1 when none does.
pub fn solve_bend(s: &SubjectProfile, hand_height: f64, yaw: f64, reach: f64) -> f64 {
    let arm = COMFORT_REACH * (s.upper_arm + s.forearm);
    for step in 0..=100 {
        let k = Keyframe {
            hand_height,
            yaw,
            bend: step as f64 / 100.0,
            reach,
        };
        let u = upper_body(s, &k);
        let t = hand_targets(s, &k, u.pelvis);
        if dist(u.shoulders[0], t[0]) <= arm && dist(u.shoulders[1], t[1]) <= arm {
            return k.bend;
        }
    }
    1.0
}

/// Seed for one (task, subject) trajectory.
pub fn trajectory_seed(task: &LiftTask, seed: u64) -> u64 {
    crate::mix_seed(&[
        seed,
        u64::from(task.subject_id),
        task.vertical_range as u64,
        u64::from(task.end_angle),
        u64::from(task.repetition),
    ])
}

/// Start, middle and end keyframes plus the normalized time of the middle one.
pub fn keyframes(task: &LiftTask, s: &SubjectProfile, seed: u64) -> ([Keyframe; 3], f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(task, seed));
    let (h0, h1) = task.vertical_range.heights();
    let (h0, h1) = (h0 * s.stature, h1 * s.stature);
    let yaw_end = f64::from(task.end_angle).to_radians();
    let base_reach = 0.2 * s.stature;
    let t_mid = rng.gen_range(0.4..0.6);
    let yaw_frac = rng.gen_range(0.35..0.65);
    let height_frac = rng.gen_range(0.4..0.6);
    let reach_scale: [f64; 3] = [
        rng.gen_range(0.9..1.1),
        rng.gen_range(0.75..0.9),
        rng.gen_range(0.9..1.1),
    ];
    let extra_bend = rng.gen_range(0.0..0.1);
    let make = |h: f64, yaw: f64, reach: f64, extra: f64| Keyframe {
        hand_height: h,
        yaw,
        bend: (solve_bend(s, h, yaw, reach) + extra).min(1.0),
        reach,
    };
    let start = make(h0, 0.0, base_reach * reach_scale[0], 0.0);
    let mid = make(
        h0 + (h1 - h0) * height_frac,
        yaw_end * yaw_frac,
        base_reach * reach_scale[1],
        extra_bend,
    );
    let end = make(h1, yaw_end, base_reach * reach_scale[2], 0.0);
    ([start, mid, end], t_mid)
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn lerp_keyframe(a: &Keyframe, b: &Keyframe, w: f64) -> Keyframe {
    let l = |x: f64, y: f64| x + (y - x) * w;
    Keyframe {
        hand_height: l(a.hand_height, b.hand_height),
        yaw: l(a.yaw, b.yaw),
        bend: l(a.bend, b.bend),
        reach: l(a.reach, b.reach),
    }
}

/// Keyframe parameters at normalized time `u` in `[0, 1]`. Each segment uses
/// a cubic Hermite ease with zero end velocities, so the path is C¹.
pub fn interpolate(keys: &[Keyframe; 3], t_mid: f64, u: f64) -> Keyframe {
    let t = ((u - HOLD) / (1.0 - 2.0 * HOLD)).clamp(0.0, 1.0);
    if t <= t_mid {
        lerp_keyframe(&keys[0], &keys[1], smoothstep(t / t_mid))
    } else {
        lerp_keyframe(&keys[1], &keys[2], smoothstep((t - t_mid) / (1.0 - t_mid)))
    }
}

/// One pose per frame for `task.duration_frames` frames.
pub fn generate_lift_trajectory(task: &LiftTask, subject: &SubjectProfile, seed: u64) -> Result<Vec<Pose3D>> {
    task.validate()?;
    subject.validate()?;
    let (keys, t_mid) = keyframes(task, subject, seed);
    let n = task.duration_frames;
    (0..n)
        .map(|f| {
            let u = f as f64 / (n - 1) as f64;
            pose_from_keyframe(subject, &interpolate(&keys, t_mid, u))
        })
        .collect()
}

/// Azimuth in degrees of the hands' midpoint about the pelvis center,
/// measured from +x toward +y.
pub fn wrist_azimuth_deg(pose: &Pose3D) -> f64 {
    let mid = |a: JointId, b: JointId| {
        let (p, q) = (pose.joint(a), pose.joint(b));
        [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0]
    };
    let w = mid(JointId::LWrist, JointId::RWrist);
    let p = mid(JointId::LHip, JointId::RHip);
    (w[1] - p[1]).atan2(w[0] - p[0]).to_degrees()
}
