//! Synthetic stand-in for a multi-camera lifting dataset: seeded subjects,
//! keyframed lifting trajectories over the FK/KS/FS × angle × repetition
//! grid, a stick-figure renderer with optional occluders, and the on-disk
//! dataset format.

pub mod cameras;
pub mod dataset;
pub mod error;
mod geom;
pub mod occluder;
pub mod render;
pub mod subject;
pub mod task;
pub mod trajectory;

pub use cameras::{camera_rig, CameraRigConfig};
pub use dataset::{
    build_dataset, full_task_list, BuildOptions, DatasetIndex, DatasetRecord, DatasetSource,
    NormFit, OcclusionConfig, SequenceEntry, SyntheticDataset,
};
pub use error::{Result, RigError};
pub use occluder::{apply_occluder, Region};
pub use render::{render_view, RenderStyle};
pub use subject::SubjectProfile;
pub use task::{task_grid, LiftTask, Split, VerticalRange};
pub use trajectory::generate_lift_trajectory;

/// Order-sensitive 64-bit seed mixing (splitmix64 finalizer per part).
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}
