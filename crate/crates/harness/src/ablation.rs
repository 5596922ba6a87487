//! The three ablation suites: fusion inputs, encoder type and view count.
//!
//! A run works inside a directory that doubles as a cache:
//!
//! ```text
//! <work>/data/<fingerprint>/            synthetic dataset
//! <work>/checkpoints/perceptron-<fp>.ckpt
//! <work>/runs/s<seed>-<fp>.json              one trained and evaluated arm
//! <work>/ablation/<suite>/table.json
//! ```
//!
//! Every finished arm is written to `runs/` before the next one starts, so an
//! interrupted or failed run resumes where it stopped. Runs are keyed by
//! everything that determines them, so suites share identical arms.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};

use mvpose_core::nn::checkpoint::Checkpoint;
use mvpose_core::{FusionInputVariant, IntegratorArch, MultiViewIntegrator, ViewPerceptron};
use mvpose_rig::dataset::INDEX_FILE;
use mvpose_rig::{DatasetSource, OcclusionConfig, Split, SyntheticDataset};

use crate::config::{DataConfig, ExperimentConfig, TrainConfig};
use crate::data::{synthesize, LoadedSplit};
use crate::error::{HarnessError, Result};
use crate::eval::{evaluate_cached, MetricsReport};
use crate::features::FeatureCache;
use crate::train::{train_stage1, train_stage2_cached, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Inputs,
    Encoders,
    Views,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Inputs, Suite::Encoders, Suite::Views];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Inputs => "inputs",
            Suite::Encoders => "encoders",
            Suite::Views => "views",
        }
    }

    /// Arms in table order.
    pub fn arms(self, cfg: &ExperimentConfig) -> Vec<Arm> {
        let all_views: Vec<usize> = (0..cfg.data.cameras.azimuths_deg.len()).collect();
        match self {
            Suite::Inputs => FusionInputVariant::ALL
                .iter()
                .map(|&v| Arm::new(v.label(), IntegratorArch::HalfHourglass, v, all_views.clone()))
                .collect(),
            Suite::Encoders => [IntegratorArch::SimpleEncoder, IntegratorArch::HalfHourglass]
                .iter()
                .map(|&a| Arm::new(a.label(), a, FusionInputVariant::HeatmapsOnly, all_views.clone()))
                .collect(),
            Suite::Views => {
                let (arch, variant) = (cfg.integrator.arch, cfg.integrator.variant);
                let mut arms: Vec<Arm> = all_views
                    .iter()
                    .map(|&v| Arm::new(&format!("view{v}"), arch, variant, vec![v]))
                    .collect();
                arms.push(Arm::new("all-views", arch, variant, all_views));
                arms
            }
        }
    }

    /// Data for this suite: the view-count suite adds occluders to one view
    /// unless the config already asks for occlusion.
    pub fn data_config(self, cfg: &ExperimentConfig) -> DataConfig {
        let mut data = cfg.data.clone();
        if self == Suite::Views && data.occlusion.is_none() {
            data.occlusion = Some(OcclusionConfig {
                view: cfg.ablation.occluded_view,
                ..OcclusionConfig::default()
            });
        }
        data
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown suite {s:?} (inputs, encoders, views)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    pub arch: IntegratorArch,
    pub variant: FusionInputVariant,
    pub views: Vec<usize>,
}

impl Arm {
    fn new(name: &str, arch: IntegratorArch, variant: FusionInputVariant, views: Vec<usize>) -> Self {
        Self {
            name: name.to_string(),
            arch,
            variant,
            views,
        }
    }
}

/// One trained and evaluated arm for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRun {
    pub arm: Arm,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub train: TrainReport,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub arm: String,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub mpjpe_mm: f64,
    pub std_frames_mm: f64,
    pub std_subjects_mm: f64,
    /// `(reference - this) / reference` against the reference arm's MPJPE
    /// for the same seed; absent on the reference arm itself.
    pub error_reduction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub seeds: usize,
    pub median_mpjpe_mm: f64,
    /// Reduction of this arm's median against the reference arm's median.
    pub error_reduction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub suite: Suite,
    /// Arm the error reductions are measured against.
    pub reference: String,
    pub rows: Vec<SeedRow>,
    pub summary: Vec<ArmSummary>,
    /// Per-arm reports pooled over seeds.
    pub reports: Vec<MetricsReport>,
}

impl AblationTable {
    pub fn median(&self, arm: &str) -> Option<f64> {
        self.summary.iter().find(|s| s.arm == arm).map(|s| s.median_mpjpe_mm)
    }

    pub fn table_path(work_dir: &Path, suite: Suite) -> PathBuf {
        work_dir.join("ablation").join(suite.name()).join("table.json")
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn error_reduction(reference: f64, value: f64) -> f64 {
    (reference - value) / reference
}

/// Assembles the comparison table from finished runs.
pub fn build_table(suite: Suite, runs: &[ArmRun]) -> Result<AblationTable> {
    if runs.is_empty() {
        return Err(HarnessError::Config("no ablation runs to tabulate".into()));
    }
    let mut arm_names: Vec<String> = vec![];
    for r in runs {
        if !arm_names.contains(&r.arm.name) {
            arm_names.push(r.arm.name.clone());
        }
    }
    let values = |arm: &str| -> Vec<f64> {
        runs.iter().filter(|r| r.arm.name == arm).map(|r| r.report.overall_mean_mm).collect()
    };
    let reference = match suite {
        Suite::Inputs => FusionInputVariant::HeatmapsOnly.label().to_string(),
        Suite::Encoders => IntegratorArch::SimpleEncoder.label().to_string(),
        Suite::Views => arm_names
            .iter()
            .filter(|a| runs.iter().any(|r| &r.arm.name == *a && r.arm.views.len() == 1))
            .min_by(|a, b| median(&values(a)).total_cmp(&median(&values(b))))
            .cloned()
            .ok_or_else(|| HarnessError::Config("view suite has no single-view arm".into()))?,
    };
    let reference_at = |seed: u64| {
        runs.iter()
            .find(|r| r.arm.name == reference && r.seed == seed)
            .map(|r| r.report.overall_mean_mm)
    };
    let rows = runs
        .iter()
        .map(|r| SeedRow {
            arm: r.arm.name.clone(),
            seed: r.seed,
            n_train: r.n_train,
            n_test: r.n_test,
            mpjpe_mm: r.report.overall_mean_mm,
            std_frames_mm: r.report.overall_std_frames_mm,
            std_subjects_mm: r.report.overall_std_subjects_mm,
            error_reduction: (r.arm.name != reference)
                .then(|| reference_at(r.seed))
                .flatten()
                .map(|a| error_reduction(a, r.report.overall_mean_mm)),
        })
        .collect();
    let reference_median = median(&values(&reference));
    let mut summary = vec![];
    let mut reports = vec![];
    for arm in &arm_names {
        let m = median(&values(arm));
        summary.push(ArmSummary {
            arm: arm.clone(),
            seeds: values(arm).len(),
            median_mpjpe_mm: m,
            error_reduction: (*arm != reference).then(|| error_reduction(reference_median, m)),
        });
        let arm_reports: Vec<MetricsReport> =
            runs.iter().filter(|r| &r.arm.name == arm).map(|r| r.report.clone()).collect();
        let mut pooled = MetricsReport::pool(&format!("{suite}/{arm}"), &arm_reports)?;
        pooled.suite = Some(suite.name().to_string());
        reports.push(pooled);
    }
    Ok(AblationTable {
        suite,
        reference,
        rows,
        summary,
        reports,
    })
}

/// Stable hex fingerprint of any serializable value.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("fingerprinted values serialize");
    let words: Vec<u64> = bytes.chunks(8).map(|c| c.iter().fold(0u64, |a, &b| a << 8 | b as u64)).collect();
    format!("{:016x}", mvpose_rig::mix_seed(&words))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_slice(&text).map_err(|e| HarnessError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes through a temporary file so readers never see a partial document.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut text = serde_json::to_vec_pretty(value).expect("report values serialize");
    text.push(b'\n');
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(|e| HarnessError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

/// Opens the dataset for `data` under `work_dir`, synthesizing it first if needed.
pub fn prepare_dataset(data: &DataConfig, work_dir: &Path) -> Result<SyntheticDataset> {
    let dir = work_dir.join("data").join(fingerprint(data));
    if !dir.join(INDEX_FILE).exists() {
        info!("synthesizing dataset in {}", dir.display());
        synthesize(data, &dir, true)?;
    }
    Ok(SyntheticDataset::open(&dir)?)
}

/// Stage-1 perceptron for `seed`, trained once per dataset and config.
pub fn prepare_perceptron(
    cfg: &ExperimentConfig,
    data_fp: &str,
    train: &LoadedSplit,
    seed: u64,
    work_dir: &Path,
) -> Result<(ViewPerceptron, String)> {
    let stage1 = TrainConfig { seed, ..cfg.stage1.clone() };
    let fp = fingerprint(&(data_fp, &cfg.perceptron, &stage1));
    let path = work_dir.join("checkpoints").join(format!("perceptron-{fp}.ckpt"));
    if path.exists() {
        let p = ViewPerceptron::from_checkpoint(&Checkpoint::load(&path)?)?;
        return Ok((p, fp));
    }
    info!("stage 1, seed {seed}");
    let mut p = ViewPerceptron::build(cfg.perceptron.clone(), seed)?;
    train_stage1(&mut p, train, &stage1)?;
    let dir = path.parent().expect("checkpoint path has a parent");
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let tmp = path.with_extension("tmp");
    p.to_checkpoint()?.save(&tmp)?;
    std::fs::rename(&tmp, &path).map_err(|e| HarnessError::io(&path, e))?;
    Ok((p, fp))
}

struct Caches {
    train: FeatureCache,
    test: FeatureCache,
}

/// Runs every arm of `suite` for every configured seed, reusing finished
/// work found in `work_dir`, and writes the table to
/// [`AblationTable::table_path`].
pub fn run_ablation(cfg: &ExperimentConfig, suite: Suite, work_dir: &Path) -> Result<AblationTable> {
    cfg.validate()?;
    let data = suite.data_config(cfg);
    let data_fp = fingerprint(&data);
    let dataset = prepare_dataset(&data, work_dir)?;
    let train = LoadedSplit::load(&dataset as &dyn DatasetSource, Split::Train)?;
    let test = LoadedSplit::load(&dataset as &dyn DatasetSource, Split::Test)?;
    let arms = suite.arms(cfg);
    for arm in &arms {
        train.check_views(&arm.views)?;
    }
    let mut runs = vec![];
    for &seed in &cfg.ablation.seeds {
        let (perceptron, p_fp) = prepare_perceptron(cfg, &data_fp, &train, seed, work_dir)?;
        let mut caches: Option<Caches> = None;
        for arm in &arms {
            let mut ic = cfg.integrator_for(arm.arch, arm.variant, arm.views.len());
            let stage2 = TrainConfig { seed, ..cfg.stage2.clone() };
            let fp = fingerprint(&(&p_fp, &ic, &stage2, &arm.views, cfg.input_scaling));
            let path = work_dir.join("runs").join(format!("s{seed}-{fp}.json"));
            if path.exists() {
                let mut run: ArmRun = read_json(&path)?;
                run.arm = arm.clone();
                run.report.experiment = format!("{suite}/{}", arm.name);
                run.report.suite = Some(suite.name().to_string());
                runs.push(run);
                continue;
            }
            if caches.is_none() {
                caches = Some(Caches {
                    train: FeatureCache::build(&perceptron, &train)?,
                    test: FeatureCache::build(&perceptron, &test)?,
                });
            }
            let c = caches.as_ref().expect("caches built above");
            info!("{suite} arm {}, seed {seed}", arm.name);
            ic.input_scales = c.train.scales_for(&arm.views, cfg.input_scaling);
            let mut integrator = MultiViewIntegrator::build(ic, seed)?;
            let report_train = train_stage2_cached(&mut integrator, &c.train, &train, &arm.views, &stage2)?;
            let mut report = evaluate_cached(&format!("{suite}/{}", arm.name), &integrator, &c.test, &test, &arm.views)?;
            report.suite = Some(suite.name().to_string());
            report.seed = Some(seed);
            let run = ArmRun {
                arm: arm.clone(),
                seed,
                n_train: train.len(),
                n_test: test.len(),
                train: report_train,
                report,
            };
            write_json(&path, &run)?;
            runs.push(run);
        }
    }
    let table = build_table(suite, &runs)?;
    write_json(&AblationTable::table_path(work_dir, suite), &table)?;
    Ok(table)
}
