//! Core of the multi-view lifting-pose pipeline: skeleton and camera types,
//! heatmap codec, a small CPU network engine, the per-view hourglass
//! perceptron and the multi-view integration network.

pub mod camera;
pub mod error;
pub mod heatmap;
pub mod integrator;
pub mod loss;
pub mod nn;
pub mod perceptron;
pub mod skeleton;
pub mod tensor;

pub use camera::{project_to_view, CameraModel};
pub use error::{CoreError, Result};
pub use heatmap::{decode_heatmap, heatmap_loss, render_heatmap, Heatmap};
pub use integrator::{
    fuse_views, pose_loss, FusedInput, FusionInputVariant, InputScales, IntegratorArch, IntegratorConfig,
    MultiViewIntegrator, ViewFeatures,
};
pub use loss::NormKind;
pub use perceptron::{ImageTensor, PerceptronConfig, SkipPyramid, ViewPerceptron};
pub use skeleton::{
    denormalize_pose, fit_norm_params, normalize_pose, JointId, NormParams, NormalizedPose3D,
    Pose2D, Pose3D, NUM_JOINTS,
};
pub use tensor::FeatureMap;
