#![allow(dead_code)]

use std::path::Path;

use mvpose_harness::data::synthesize;
use mvpose_harness::{ExperimentConfig, LoadedSplit};
use mvpose_rig::{Split, SyntheticDataset};

/// 64 px images, 16 px heatmaps, two subjects, two records per sequence.
pub const TINY_TOML: &str = r#"
[data]
subjects = 2
duration_frames = 4

[data.cameras]
image_size = 64
focal = 100.0

[perceptron]
input_size = 64
heatmap_resolution = 16
base_channels = 4

[integrator]
resolution = 16
trunk_channels = 4
skip_channels = 4

[stage1]
epochs = 1
learning_rate = 0.001

[stage2]
epochs = 2
learning_rate = 0.001

[ablation]
seeds = [1, 2]
"#;

pub fn tiny_config() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(TINY_TOML).unwrap()
}

pub fn tiny_dataset(cfg: &ExperimentConfig, dir: &Path) -> (LoadedSplit, LoadedSplit) {
    synthesize(&cfg.data, dir, false).unwrap();
    let ds = SyntheticDataset::open(dir).unwrap();
    (LoadedSplit::load(&ds, Split::Train).unwrap(), LoadedSplit::load(&ds, Split::Test).unwrap())
}
