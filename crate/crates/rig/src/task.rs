//! The lifting task grid.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RigError};

pub const FLOOR_HEIGHT: f64 = 0.05;
pub const KNUCKLE_HEIGHT: f64 = 0.45;
pub const SHOULDER_HEIGHT: f64 = 0.82;
pub const END_ANGLES: [u32; 3] = [0, 30, 60];
pub const DEFAULT_DURATION: usize = 200;
pub const DEFAULT_FPS: u32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VerticalRange {
    /// Floor to knuckle.
    FK,
    /// Knuckle to shoulder.
    KS,
    /// Floor to shoulder.
    FS,
}

impl VerticalRange {
    pub const ALL: [VerticalRange; 3] = [VerticalRange::FK, VerticalRange::KS, VerticalRange::FS];

    /// Start and end hand heights as fractions of stature.
    pub fn heights(self) -> (f64, f64) {
        match self {
            VerticalRange::FK => (FLOOR_HEIGHT, KNUCKLE_HEIGHT),
            VerticalRange::KS => (KNUCKLE_HEIGHT, SHOULDER_HEIGHT),
            VerticalRange::FS => (FLOOR_HEIGHT, SHOULDER_HEIGHT),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            VerticalRange::FK => "FK",
            VerticalRange::KS => "KS",
            VerticalRange::FS => "FS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LiftTask {
    pub vertical_range: VerticalRange,
    /// End-of-lift trunk rotation in degrees.
    pub end_angle: u32,
    pub repetition: u8,
    pub subject_id: u32,
    pub duration_frames: usize,
    pub fps: u32,
}

impl LiftTask {
    pub fn new(vertical_range: VerticalRange, end_angle: u32, repetition: u8, subject_id: u32) -> Self {
        Self {
            vertical_range,
            end_angle,
            repetition,
            subject_id,
            duration_frames: DEFAULT_DURATION,
            fps: DEFAULT_FPS,
        }
    }

    pub fn with_duration(mut self, frames: usize) -> Self {
        self.duration_frames = frames;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !END_ANGLES.contains(&self.end_angle) {
            return Err(RigError::Config(format!(
                "end angle must be one of {END_ANGLES:?}, got {}",
                self.end_angle
            )));
        }
        if !(1..=2).contains(&self.repetition) {
            return Err(RigError::Config(format!("repetition must be 1 or 2, got {}", self.repetition)));
        }
        if self.duration_frames < 2 {
            return Err(RigError::Config("a trajectory needs at least 2 frames".into()));
        }
        if self.fps == 0 {
            return Err(RigError::Config("fps must be positive".into()));
        }
        Ok(())
    }

    /// Repetition 1 trains, repetition 2 tests.
    pub fn split(&self) -> Split {
        if self.repetition == 1 {
            Split::Train
        } else {
            Split::Test
        }
    }

    /// Stable sequence name, also used as the image directory.
    pub fn sequence_name(&self) -> String {
        format!(
            "s{:02}_{}_{:02}_r{}",
            self.subject_id,
            self.vertical_range.label(),
            self.end_angle,
            self.repetition
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// All 3 × 3 × 2 tasks for one subject, ordered range, angle, repetition.
pub fn task_grid(subject_id: u32, duration_frames: usize) -> Vec<LiftTask> {
    let mut out = Vec::with_capacity(18);
    for range in VerticalRange::ALL {
        for angle in END_ANGLES {
            for rep in 1..=2 {
                out.push(LiftTask::new(range, angle, rep, subject_id).with_duration(duration_frames));
            }
        }
    }
    out
}
