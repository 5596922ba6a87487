//! In-memory splits loaded from a dataset source.

use std::path::Path;

use mvpose_core::{normalize_pose, ImageTensor, NormParams, NormalizedPose3D, Pose2D, Pose3D};
use mvpose_rig::{
    build_dataset, camera_rig, full_task_list, BuildOptions, DatasetIndex, DatasetSource, Split, SubjectProfile,
};

use crate::config::DataConfig;
use crate::error::{HarnessError, Result};

/// Subjects of a data config, with ids starting at 1.
pub fn subjects_for(cfg: &DataConfig) -> Vec<SubjectProfile> {
    (1..=cfg.subjects).map(|id| SubjectProfile::random(id, cfg.subject_seed)).collect()
}

/// Builds the full-grid synthetic dataset described by `cfg` into `out_dir`.
pub fn synthesize(cfg: &DataConfig, out_dir: &Path, overwrite: bool) -> Result<DatasetIndex> {
    let subjects = subjects_for(cfg);
    let tasks = full_task_list(&subjects, cfg.duration_frames);
    let cameras = camera_rig(&cfg.cameras)?;
    let opts = BuildOptions {
        seed: cfg.seed,
        style: cfg.style.clone(),
        occlusion: cfg.occlusion.clone(),
        norm_fit: cfg.norm_fit,
        overwrite,
    };
    Ok(build_dataset(&subjects, &tasks, &cameras, &opts, out_dir)?)
}

/// One multi-view frame. Images are kept as interleaved 8-bit RGB.
#[derive(Debug, Clone)]
pub struct Sample {
    pub sequence: String,
    pub subject_id: u32,
    pub frame_index: usize,
    pub images: Vec<Vec<u8>>,
    pub pose_2d: Vec<Pose2D>,
    pub pose_3d: Pose3D,
    pub target: NormalizedPose3D,
}

#[derive(Debug, Clone)]
pub struct LoadedSplit {
    pub split: Split,
    /// Width, height.
    pub image_size: [usize; 2],
    pub num_views: usize,
    pub norm_params: NormParams,
    pub samples: Vec<Sample>,
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Test => "test",
    }
}

impl LoadedSplit {
    /// Reads every record of `split`, in index order.
    pub fn load(source: &dyn DatasetSource, split: Split) -> Result<Self> {
        let index = source.index();
        let norm = index.norm_params;
        let mut samples = vec![];
        for (seq, rec) in index.records(split) {
            let images = rec
                .images
                .iter()
                .map(|p| source.load_image(p).map(|im| im.to_rgb8()))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            samples.push(Sample {
                sequence: seq.name.clone(),
                subject_id: seq.task.subject_id,
                frame_index: rec.frame_index,
                images,
                pose_2d: rec.pose_2d.clone(),
                pose_3d: rec.pose_3d.clone(),
                target: normalize_pose(&rec.pose_3d, &norm)?,
            });
        }
        if samples.is_empty() {
            return Err(HarnessError::EmptySplit(split_name(split)));
        }
        Ok(Self {
            split,
            image_size: index.image_size,
            num_views: index.cameras.len(),
            norm_params: norm,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn name(&self) -> &'static str {
        split_name(self.split)
    }

    pub fn image(&self, sample: usize, view: usize) -> Result<ImageTensor> {
        let [w, h] = self.image_size;
        Ok(ImageTensor::from_rgb8(w, h, &self.samples[sample].images[view])?)
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            ..self.shell()
        }
    }

    /// `n` samples spread evenly over the split.
    pub fn spread(&self, n: usize) -> Self {
        let n = n.min(self.len()).max(1);
        let idx: Vec<usize> = (0..n).map(|k| k * self.len() / n).collect();
        self.subset(&idx)
    }

    fn shell(&self) -> Self {
        Self {
            split: self.split,
            image_size: self.image_size,
            num_views: self.num_views,
            norm_params: self.norm_params,
            samples: vec![],
        }
    }

    pub fn check_views(&self, views: &[usize]) -> Result<()> {
        if views.is_empty() {
            return Err(HarnessError::Config("at least one view is required".into()));
        }
        if let Some(&v) = views.iter().find(|&&v| v >= self.num_views) {
            return Err(HarnessError::Mismatch(format!(
                "view {v} requested but the dataset has {} views",
                self.num_views
            )));
        }
        Ok(())
    }
}
