//! Default two-camera rig.

use serde::{Deserialize, Serialize};

use mvpose_core::CameraModel;

use crate::error::Result;

/// Cameras on a circle around the subject. Azimuth 0 is the subject's
/// initial facing direction (+x) and 90 is their left side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraRigConfig {
    pub azimuths_deg: Vec<f64>,
    /// Horizontal distance from the aim point (mm).
    pub distance: f64,
    /// Camera height above the floor (mm).
    pub height: f64,
    /// Height of the aim point above the origin (mm).
    pub target_height: f64,
    pub focal: f64,
    pub image_size: usize,
}

impl Default for CameraRigConfig {
    fn default() -> Self {
        Self {
            azimuths_deg: vec![90.0, 135.0],
            distance: 4000.0,
            height: 1100.0,
            target_height: 900.0,
            focal: 400.0,
            image_size: 256,
        }
    }
}

pub fn camera_rig(cfg: &CameraRigConfig) -> Result<Vec<CameraModel>> {
    cfg.azimuths_deg
        .iter()
        .map(|az| {
            let a = az.to_radians();
            let eye = [cfg.distance * a.cos(), cfg.distance * a.sin(), cfg.height];
            Ok(CameraModel::look_at(
                eye,
                [0.0, 0.0, cfg.target_height],
                [0.0, 0.0, 1.0],
                cfg.focal,
                [cfg.image_size, cfg.image_size],
            )?)
        })
        .collect()
}
