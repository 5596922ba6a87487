//! Experiment configuration, read from TOML.
//!
//! Every section and field is optional; omitted values take the desk-scale
//! defaults below. Example:
//!
//! ```toml
//! [data]
//! subjects = 4
//! duration_frames = 60
//!
//! [perceptron]
//! heatmap_resolution = 32
//!
//! [stage2]
//! epochs = 50
//!
//! [ablation]
//! seeds = [1, 2, 3]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use mvpose_core::nn::OptimizerConfig;
use mvpose_core::{FusionInputVariant, IntegratorArch, IntegratorConfig, NormKind, PerceptronConfig};
use mvpose_rig::{CameraRigConfig, NormFit, OcclusionConfig, RenderStyle};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    #[serde(rename = "stage1_2d")]
    Stage1_2d,
    #[serde(rename = "stage2_3d")]
    Stage2_3d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub stage: Stage,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the data order. Model initialization uses the model's own seed.
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub loss: NormKind,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<usize>,
    /// Stage 2 only: also update the perceptron through the integrator loss.
    pub joint_finetune: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::stage1()
    }
}

impl TrainConfig {
    pub fn stage1() -> Self {
        Self {
            stage: Stage::Stage1_2d,
            learning_rate: 0.00025,
            epochs: 5,
            batch_size: 8,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            loss: NormKind::Euclidean,
            max_steps: None,
            joint_finetune: false,
        }
    }

    /// Desk-scale stage 2 (20 epochs).
    pub fn stage2() -> Self {
        Self {
            stage: Stage::Stage2_3d,
            learning_rate: 0.0005,
            epochs: 20,
            ..Self::stage1()
        }
    }

    /// Stage 2 with the full 50-epoch budget.
    pub fn stage2_fidelity() -> Self {
        Self {
            epochs: 50,
            ..Self::stage2()
        }
    }

    pub fn validate(&self, expect: Stage) -> Result<()> {
        if self.stage != expect {
            return Err(HarnessError::Config(format!(
                "expected a {expect:?} training config, got {:?}",
                self.stage
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(HarnessError::Config(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(HarnessError::Config("epochs and batch_size must be >= 1".into()));
        }
        if self.joint_finetune && self.stage == Stage::Stage1_2d {
            return Err(HarnessError::Config("joint_finetune only applies to stage 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub subjects: u32,
    /// Seeds subject body dimensions.
    pub subject_seed: u64,
    pub duration_frames: usize,
    /// Seeds trajectories and occluders.
    pub seed: u64,
    pub norm_fit: NormFit,
    pub cameras: CameraRigConfig,
    pub style: RenderStyle,
    pub occlusion: Option<OcclusionConfig>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            subjects: 4,
            subject_seed: 17,
            duration_frames: 60,
            seed: 1,
            norm_fit: NormFit::Train,
            cameras: CameraRigConfig::default(),
            style: RenderStyle::default(),
            occlusion: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub seeds: Vec<u64>,
    /// View that receives occluders in the view-count suite.
    pub occluded_view: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3],
            occluded_view: 0,
        }
    }
}

/// How integrator inputs are rescaled before fusion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputScaling {
    /// Feed perceptron outputs and images as they are.
    None,
    /// Scale image and skip inputs so their standard deviation on the
    /// training split equals that of the heatmaps.
    #[default]
    MatchHeatmaps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub input_scaling: InputScaling,
    pub data: DataConfig,
    pub perceptron: PerceptronConfig,
    /// Template for every integrator; ablation arms override arch, variant and views.
    pub integrator: IntegratorConfig,
    pub stage1: TrainConfig,
    pub stage2: TrainConfig,
    pub ablation: AblationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// Laptop-CPU scale: 256 px images, 32 px heatmaps, narrow networks.
    pub fn desk() -> Self {
        let perceptron = PerceptronConfig {
            heatmap_resolution: 32,
            base_channels: 16,
            ..PerceptronConfig::default()
        };
        let integrator = IntegratorConfig {
            arch: IntegratorArch::HalfHourglass,
            variant: FusionInputVariant::HeatmapsPlusSkips,
            resolution: perceptron.heatmap_resolution,
            trunk_channels: 16,
            skip_channels: perceptron.base_channels,
            ..IntegratorConfig::default()
        };
        Self {
            input_scaling: InputScaling::default(),
            data: DataConfig::default(),
            perceptron,
            integrator,
            stage1: TrainConfig::stage1(),
            stage2: TrainConfig::stage2(),
            ablation: AblationConfig::default(),
        }
    }

    /// Full-size networks, 200-frame trajectories and the 50-epoch stage 2.
    pub fn fidelity() -> Self {
        let perceptron = PerceptronConfig::fidelity();
        let integrator = IntegratorConfig {
            resolution: perceptron.heatmap_resolution,
            trunk_channels: 256,
            skip_channels: perceptron.base_channels,
            ..IntegratorConfig::default()
        };
        Self {
            input_scaling: InputScaling::default(),
            data: DataConfig {
                duration_frames: mvpose_rig::task::DEFAULT_DURATION,
                ..DataConfig::default()
            },
            perceptron,
            integrator,
            stage1: TrainConfig::stage1(),
            stage2: TrainConfig::stage2_fidelity(),
            ablation: AblationConfig::default(),
        }
    }

    /// Parses a (possibly partial) document on top of the desk defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg_err = |e: &dyn std::fmt::Display| HarnessError::Config(e.to_string());
        let user: toml::Table = toml::from_str(text).map_err(|e| cfg_err(&e))?;
        let mut base = toml::Table::try_from(Self::desk()).map_err(|e| cfg_err(&e))?;
        merge_tables(&mut base, user);
        let cfg: Self = toml::Value::Table(base).try_into().map_err(|e| cfg_err(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.perceptron.validate()?;
        self.stage1.validate(Stage::Stage1_2d)?;
        self.stage2.validate(Stage::Stage2_3d)?;
        if self.data.cameras.image_size != self.perceptron.input_size {
            return Err(HarnessError::Config(format!(
                "camera image size {} differs from perceptron input size {}",
                self.data.cameras.image_size, self.perceptron.input_size
            )));
        }
        if self.integrator.resolution != self.perceptron.heatmap_resolution {
            return Err(HarnessError::Config(format!(
                "integrator resolution {} differs from perceptron heatmap resolution {}",
                self.integrator.resolution, self.perceptron.heatmap_resolution
            )));
        }
        if self.integrator.skip_channels != self.perceptron.base_channels {
            return Err(HarnessError::Config(format!(
                "integrator skip_channels {} differs from perceptron base_channels {}",
                self.integrator.skip_channels, self.perceptron.base_channels
            )));
        }
        if self.integrator.num_joints != self.perceptron.num_joints {
            return Err(HarnessError::Config("integrator and perceptron joint counts differ".into()));
        }
        if self.data.subjects == 0 || self.data.duration_frames < 2 {
            return Err(HarnessError::Config("need >= 1 subject and >= 2 frames".into()));
        }
        if self.ablation.seeds.is_empty() {
            return Err(HarnessError::Config("ablation needs at least one seed".into()));
        }
        Ok(())
    }

    /// Integrator config for a given arm.
    pub fn integrator_for(&self, arch: IntegratorArch, variant: FusionInputVariant, num_views: usize) -> IntegratorConfig {
        IntegratorConfig {
            arch,
            variant,
            num_views,
            ..self.integrator.clone()
        }
    }
}

fn merge_tables(base: &mut toml::Table, user: toml::Table) {
    for (key, value) in user {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge_tables(b, u),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip_through_toml() {
        for cfg in [ExperimentConfig::desk(), ExperimentConfig::fidelity()] {
            cfg.validate().unwrap();
            let text = cfg.to_toml_string();
            assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn partial_documents_fill_in_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "[stage2]\nepochs = 3\n[data.occlusion]\nview = 1\n",
        )
        .unwrap();
        assert_eq!(cfg.stage2.epochs, 3);
        assert_eq!(cfg.stage2.learning_rate, 0.0005);
        assert_eq!(cfg.stage2.stage, Stage::Stage2_3d);
        assert_eq!(cfg.perceptron.heatmap_resolution, 32);
        assert_eq!(cfg.data.occlusion.as_ref().unwrap().view, 1);
        // Integrator resolution left at 32 no longer matches.
        assert!(ExperimentConfig::from_toml_str("[perceptron]\nheatmap_resolution = 64\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[stage1]\nepochs = \"five\"\n").is_err());
    }

    #[test]
    fn rejects_bad_training_values() {
        let mut t = TrainConfig::stage2();
        t.epochs = 0;
        assert!(t.validate(Stage::Stage2_3d).is_err());
        let t = TrainConfig::stage1();
        assert!(t.validate(Stage::Stage2_3d).is_err());
        let mut t = TrainConfig::stage1();
        t.learning_rate = f64::NAN;
        assert!(t.validate(Stage::Stage1_2d).is_err());
        let mut t = TrainConfig::stage1();
        t.learning_rate = 0.0;
        t.validate(Stage::Stage1_2d).unwrap();
    }
}
