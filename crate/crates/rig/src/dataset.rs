//! On-disk dataset: PNG frames plus a versioned JSON index.
//!
//! Layout under the dataset root:
//!
//! ```text
//! index.json
//! images/<sequence>/<view>/<frame>.png
//! ```
//!
//! `<view>` is the camera id, `<frame>` the zero-padded source frame index.
//! See `DatasetIndex` for the index fields.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use mvpose_core::{
    fit_norm_params, project_to_view, CameraModel, ImageTensor, JointId, NormParams, Pose2D,
    Pose3D, NUM_JOINTS,
};

use crate::error::{Result, RigError};
use crate::occluder::{apply_occluder, Region};
use crate::render::{render_view, RenderStyle};
use crate::subject::SubjectProfile;
use crate::task::{LiftTask, Split};
use crate::trajectory::generate_lift_trajectory;

pub const INDEX_FILE: &str = "index.json";
pub const IMAGE_DIR: &str = "images";
pub const INDEX_VERSION: u32 = 1;

/// Which records the normalization bounds are fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormFit {
    #[default]
    Train,
    All,
}

/// Random occluders in one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcclusionConfig {
    pub view: usize,
    /// Chance that a given frame gets an occluder.
    pub probability: f64,
    /// Side length range as a fraction of the image side.
    pub min_size: f64,
    pub max_size: f64,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            view: 0,
            probability: 1.0,
            min_size: 0.25,
            max_size: 0.45,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildOptions {
    pub seed: u64,
    pub style: RenderStyle,
    pub occlusion: Option<OcclusionConfig>,
    pub norm_fit: NormFit,
    pub overwrite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraEntry {
    pub id: usize,
    pub model: CameraModel,
}

/// One kept frame with all of its views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    /// Index in the generated trajectory (always odd).
    pub frame_index: usize,
    pub camera_ids: Vec<usize>,
    /// Image paths relative to the dataset root, one per camera.
    pub images: Vec<String>,
    /// Exact projections; `visible` is false for joints out of frame or occluded.
    pub pose_2d: Vec<Pose2D>,
    /// Per view, joints hidden by an injected occluder.
    pub occluded: Vec<Vec<bool>>,
    pub pose_3d: Pose3D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub name: String,
    pub task: LiftTask,
    pub split: Split,
    pub generated_frames: usize,
    pub records: Vec<DatasetRecord>,
}

/// Contents of `index.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub format_version: u32,
    /// Width, height in pixels.
    pub image_size: [usize; 2],
    pub joint_names: Vec<String>,
    pub cameras: Vec<CameraEntry>,
    pub subjects: Vec<SubjectProfile>,
    pub seed: u64,
    pub occlusion: Option<OcclusionConfig>,
    pub norm_fit: NormFit,
    pub norm_params: NormParams,
    /// Repetition 1 is train, repetition 2 is test.
    pub split_rule: String,
    pub sequences: Vec<SequenceEntry>,
}

impl DatasetIndex {
    pub fn records(&self, split: Split) -> impl Iterator<Item = (&SequenceEntry, &DatasetRecord)> {
        self.sequences
            .iter()
            .filter(move |s| s.split == split)
            .flat_map(|s| s.records.iter().map(move |r| (s, r)))
    }

    pub fn num_records(&self) -> usize {
        self.sequences.iter().map(|s| s.records.len()).sum()
    }

    pub fn cameras(&self) -> Vec<CameraModel> {
        self.cameras.iter().map(|c| c.model.clone()).collect()
    }
}

/// Read access to a pose dataset. Only the synthetic layout is implemented.
pub trait DatasetSource {
    fn index(&self) -> &DatasetIndex;
    fn load_image(&self, relative: &str) -> Result<ImageTensor>;
}

pub struct SyntheticDataset {
    root: PathBuf,
    index: DatasetIndex,
}

impl SyntheticDataset {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(INDEX_FILE);
        let f = File::open(&path).map_err(|e| RigError::io(&path, e))?;
        let index: DatasetIndex = serde_json::from_reader(BufReader::new(f)).map_err(|e| RigError::Format {
            path: path.clone(),
            message: e.to_string(),
        })?;
        if index.format_version != INDEX_VERSION {
            return Err(RigError::Format {
                path,
                message: format!("unsupported index version {}", index.format_version),
            });
        }
        Ok(Self {
            root: root.to_path_buf(),
            index,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl DatasetSource for SyntheticDataset {
    fn index(&self) -> &DatasetIndex {
        &self.index
    }

    fn load_image(&self, relative: &str) -> Result<ImageTensor> {
        read_png(&self.root.join(relative))
    }
}

pub fn write_png(path: &Path, img: &ImageTensor) -> Result<()> {
    let f = File::create(path).map_err(|e| RigError::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(f), img.width() as u32, img.height() as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let fmt = |e: png::EncodingError| RigError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut writer = enc.write_header().map_err(fmt)?;
    writer.write_image_data(&img.to_rgb8()).map_err(fmt)?;
    writer.finish().map_err(fmt)?;
    Ok(())
}

pub fn read_png(path: &Path) -> Result<ImageTensor> {
    let fmt = |message: String| RigError::Format {
        path: path.to_path_buf(),
        message,
    };
    let f = File::open(path).map_err(|e| RigError::io(path, e))?;
    let mut reader = png::Decoder::new(BufReader::new(f))
        .read_info()
        .map_err(|e| fmt(e.to_string()))?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| fmt(e.to_string()))?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(fmt(format!("expected 8-bit RGB, got {:?} {:?}", info.color_type, info.bit_depth)));
    }
    buf.truncate(info.buffer_size());
    Ok(ImageTensor::from_rgb8(info.width as usize, info.height as usize, &buf)?)
}

/// Every subject's full task grid.
pub fn full_task_list(subjects: &[SubjectProfile], duration_frames: usize) -> Vec<LiftTask> {
    subjects
        .iter()
        .flat_map(|s| crate::task::task_grid(s.subject_id, duration_frames))
        .collect()
}

fn occluder_region(cfg: &OcclusionConfig, seed: u64, p2: &Pose2D, w: usize, h: usize) -> Option<Region> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if rng.gen::<f64>() >= cfg.probability {
        return None;
    }
    let side = (rng.gen_range(cfg.min_size..=cfg.max_size) * w.min(h) as f64).round() as usize;
    let anchor = p2.coords[rng.gen_range(0..NUM_JOINTS)];
    let jitter = |rng: &mut ChaCha8Rng| rng.gen_range(-0.3..0.3) * side as f64;
    let cx = anchor[0] + jitter(&mut rng);
    let cy = anchor[1] + jitter(&mut rng);
    let x0 = (cx - side as f64 / 2.0).round().clamp(0.0, w as f64) as usize;
    let y0 = (cy - side as f64 / 2.0).round().clamp(0.0, h as f64) as usize;
    Some(Region {
        x0,
        y0,
        x1: (x0 + side).min(w),
        y1: (y0 + side).min(h),
    })
}

fn prepare_out_dir(out_dir: &Path, overwrite: bool) -> Result<()> {
    if out_dir.exists() {
        let non_empty = fs::read_dir(out_dir)
            .map_err(|e| RigError::io(out_dir, e))?
            .next()
            .is_some();
        if non_empty {
            if !overwrite {
                return Err(RigError::OutputNotEmpty(out_dir.to_path_buf()));
            }
            let images = out_dir.join(IMAGE_DIR);
            if images.exists() {
                fs::remove_dir_all(&images).map_err(|e| RigError::io(&images, e))?;
            }
            let index = out_dir.join(INDEX_FILE);
            if index.exists() {
                fs::remove_file(&index).map_err(|e| RigError::io(&index, e))?;
            }
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| RigError::io(out_dir, e))
}

fn build_sequence(
    task: &LiftTask,
    subject: &SubjectProfile,
    cameras: &[CameraModel],
    opts: &BuildOptions,
    out_dir: &Path,
) -> Result<SequenceEntry> {
    let name = task.sequence_name();
    let traj = generate_lift_trajectory(task, subject, opts.seed)?;
    for view in 0..cameras.len() {
        let dir = out_dir.join(IMAGE_DIR).join(&name).join(view.to_string());
        fs::create_dir_all(&dir).map_err(|e| RigError::io(&dir, e))?;
    }
    let mut records = Vec::with_capacity(traj.len() / 2);
    for (frame, pose) in traj.iter().enumerate().filter(|(f, _)| f % 2 == 1) {
        let mut images = Vec::with_capacity(cameras.len());
        let mut poses = Vec::with_capacity(cameras.len());
        let mut occluded = Vec::with_capacity(cameras.len());
        for (view, cam) in cameras.iter().enumerate() {
            let mut p2 = project_to_view(pose, cam)?;
            let mut img = render_view(pose, cam, &opts.style)?;
            let mut flags = vec![false; NUM_JOINTS];
            if let Some(occ) = opts.occlusion.as_ref().filter(|o| o.view == view) {
                let seed = crate::mix_seed(&[opts.seed, crate::trajectory::trajectory_seed(task, opts.seed), frame as u64, 0x0cc1]);
                let [w, h] = cam.image_size;
                if let Some(region) = occluder_region(occ, seed, &p2, w, h) {
                    let (covered, f) = apply_occluder(&img, region, &p2);
                    img = covered;
                    flags = f;
                }
            }
            for (v, &f) in p2.visible.iter_mut().zip(&flags) {
                *v = *v && !f;
            }
            let rel = format!("{IMAGE_DIR}/{name}/{view}/{frame:04}.png");
            write_png(&out_dir.join(&rel), &img)?;
            images.push(rel);
            poses.push(p2);
            occluded.push(flags);
        }
        records.push(DatasetRecord {
            frame_index: frame,
            camera_ids: (0..cameras.len()).collect(),
            images,
            pose_2d: poses,
            occluded,
            pose_3d: pose.clone(),
        });
    }
    Ok(SequenceEntry {
        name,
        task: *task,
        split: task.split(),
        generated_frames: traj.len(),
        records,
    })
}

/// Generates, renders and writes every task, then the index. Sequences are
/// rendered in parallel; the index lists them in sorted name order, so the
/// output does not depend on scheduling.
pub fn build_dataset(
    subjects: &[SubjectProfile],
    tasks: &[LiftTask],
    cameras: &[CameraModel],
    opts: &BuildOptions,
    out_dir: &Path,
) -> Result<DatasetIndex> {
    if cameras.is_empty() {
        return Err(RigError::Config("at least one camera is required".into()));
    }
    if tasks.is_empty() {
        return Err(RigError::Config("no tasks to generate".into()));
    }
    let size = cameras[0].image_size;
    if cameras.iter().any(|c| c.image_size != size) {
        return Err(RigError::Config("all cameras must share one image size".into()));
    }
    if let Some(occ) = &opts.occlusion {
        if occ.view >= cameras.len() {
            return Err(RigError::Config(format!("occluded view {} does not exist", occ.view)));
        }
        if !(0.0..=1.0).contains(&occ.probability) || !(0.0 < occ.min_size && occ.min_size <= occ.max_size && occ.max_size <= 1.0) {
            return Err(RigError::Config("occlusion probability and sizes must lie in [0, 1]".into()));
        }
    }
    for s in subjects {
        s.validate()?;
    }
    let mut jobs = Vec::with_capacity(tasks.len());
    for task in tasks {
        task.validate()?;
        let subject = subjects
            .iter()
            .find(|s| s.subject_id == task.subject_id)
            .ok_or_else(|| RigError::Config(format!("task references unknown subject {}", task.subject_id)))?;
        jobs.push((task, subject));
    }
    jobs.sort_by_key(|(t, _)| t.sequence_name());
    if jobs.windows(2).any(|w| w[0].0.sequence_name() == w[1].0.sequence_name()) {
        return Err(RigError::Config("duplicate task in the task list".into()));
    }
    prepare_out_dir(out_dir, opts.overwrite)?;

    let sequences = jobs
        .par_iter()
        .map(|(task, subject)| build_sequence(task, subject, cameras, opts, out_dir))
        .collect::<Result<Vec<_>>>()?;

    let fit_poses = sequences
        .iter()
        .filter(|s| opts.norm_fit == NormFit::All || s.split == Split::Train)
        .flat_map(|s| s.records.iter().map(|r| &r.pose_3d));
    let mut fit_poses = fit_poses.peekable();
    if fit_poses.peek().is_none() {
        return Err(RigError::Config(
            "no training records to fit normalization bounds (set norm_fit to all)".into(),
        ));
    }
    let norm_params = fit_norm_params(fit_poses)?;

    let mut subjects = subjects.to_vec();
    subjects.sort_by_key(|s| s.subject_id);
    let index = DatasetIndex {
        format_version: INDEX_VERSION,
        image_size: size,
        joint_names: JointId::ALL.iter().map(|j| j.name().to_string()).collect(),
        cameras: cameras
            .iter()
            .enumerate()
            .map(|(id, m)| CameraEntry { id, model: m.clone() })
            .collect(),
        subjects,
        seed: opts.seed,
        occlusion: opts.occlusion.clone(),
        norm_fit: opts.norm_fit,
        norm_params,
        split_rule: "repetition 1 -> train, repetition 2 -> test".into(),
        sequences,
    };
    let path = out_dir.join(INDEX_FILE);
    let bytes = serde_json::to_vec_pretty(&index).map_err(|e| RigError::Format {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let mut f = File::create(&path).map_err(|e| RigError::io(&path, e))?;
    f.write_all(&bytes).map_err(|e| RigError::io(&path, e))?;
    Ok(index)
}
